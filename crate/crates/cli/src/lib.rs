//! Command-line front end for MEWLS spline fitting.
//!
//! Subcommands: `fit` writes the fitted curve, weights, continuation trace and
//! model; `detect` adds an inlier/outlier split; `score` ranks outliers by the
//! order in which they drop out; `synth` writes the synthetic test series.
//!
//! Exit status: 0 success, 1 solver failure, 2 input or usage error, 3 partial
//! completion. Failures print `{"error": <class>, "message": ...}` on stderr.

mod error;
pub mod output;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mewls::synth::{self, JitterShape, NoiseSpec, ProfileNoise, Synthetic};
use mewls::{
    fit_mewls, load_csv, normalize, score_outliers, split_inliers_outliers, CsvOptions, Dataset,
    DesignMatrix, KnotVector, MewlsFit, RankPolicy, SchedulePolicy, SolverConfig,
};

pub use error::{CliError, ErrorClass};
use output::{FitArtifact, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "mewls",
    version,
    about = "Maximum-entropy weighted least-squares spline fitting"
)]
pub struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a spline and write curve.csv, weights.csv, trace.csv and fit.json.
    Fit(FitArgs),
    /// Fit, then split points into inliers and outliers (adds outliers.csv).
    Detect(DetectArgs),
    /// Tighten the MSE target until N points are flagged; writes ranking.csv.
    Score(ScoreArgs),
    /// Write a synthetic series plus its planted-index sidecar.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// CSV file to read.
    pub input: PathBuf,

    /// Parameter column (0-based index or header name).
    #[arg(long, default_value = "0", conflicts_with = "row_param")]
    pub t_col: String,

    /// Use the row number as the parameter instead of a column.
    #[arg(long)]
    pub row_param: bool,

    /// Data columns, comma separated or repeated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    pub y_col: Vec<String>,

    /// The first row holds column names.
    #[arg(long)]
    pub header: bool,

    #[arg(long, default_value_t = ',')]
    pub delimiter: char,

    /// Cell values treated as missing (repeatable).
    #[arg(long = "missing", default_values = ["NA", ""])]
    pub missing: Vec<String>,

    /// Keep only rows satisfying a comparison, e.g. `intensity<=65`.
    #[arg(long)]
    pub filter: Option<mewls::data::RowFilter>,
}

impl InputArgs {
    fn csv_options(&self) -> Result<CsvOptions, CliError> {
        if !self.delimiter.is_ascii() {
            return Err(CliError::usage(format!(
                "delimiter {:?} must be a single ASCII character",
                self.delimiter
            )));
        }
        Ok(CsvOptions {
            t_column: if self.row_param {
                None
            } else {
                Some(self.t_col.parse().expect("infallible"))
            },
            y_columns: self
                .y_col
                .iter()
                .map(|c| c.parse().expect("infallible"))
                .collect(),
            delimiter: self.delimiter as u8,
            has_header: self.header,
            missing: self.missing.clone(),
            filter: self.filter.clone(),
        })
    }

    pub fn load(&self) -> Result<Dataset, CliError> {
        let raw = load_csv(&self.input, &self.csv_options()?).map_err(|e| match e {
            mewls::MewlsError::Io(io) => {
                CliError::new(ErrorClass::Io, format!("{}: {io}", self.input.display()))
            }
            other => other.into(),
        })?;
        Ok(normalize(&raw)?)
    }
}

#[derive(Debug, Clone, Args)]
pub struct BasisArgs {
    /// Spline degree.
    #[arg(short = 'd', long, default_value_t = 3)]
    pub degree: usize,

    /// Number of basis functions, with uniform interior knots.
    #[arg(
        short = 'n',
        long,
        required_unless_present = "knots",
        conflicts_with = "knots"
    )]
    pub n_basis: Option<usize>,

    /// Explicit knot vector on [0, 1], comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub knots: Option<Vec<f64>>,
}

impl BasisArgs {
    pub fn knot_vector(&self) -> Result<KnotVector, CliError> {
        let kv = match (&self.knots, self.n_basis) {
            (Some(knots), _) => KnotVector::from_knots(self.degree, knots.clone())?,
            (None, Some(n)) => KnotVector::uniform(self.degree, n)?,
            (None, None) => return Err(CliError::usage("give --n-basis or --knots")),
        };
        Ok(kv)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Final reduction factor MSE_uw / MSE_target (1 gives ordinary least squares).
    #[arg(short = 'r', long, default_value_t = 100.0)]
    pub r_final: f64,

    /// Number of continuation stages.
    #[arg(short = 'N', long, default_value_t = 20)]
    pub stages: usize,

    /// Explicit reduction factors after r = 1, overriding --r-final and --stages.
    #[arg(long, value_delimiter = ',')]
    pub schedule: Option<Vec<f64>>,

    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,

    #[arg(long, default_value_t = 1e-6)]
    pub tol_constraint: f64,

    #[arg(long, default_value_t = 10_000)]
    pub max_outer_iters: usize,

    #[arg(long, default_value_t = 50)]
    pub max_newton_iters: usize,

    /// Fail on a rank-deficient weighted system instead of using the minimum-norm solution.
    #[arg(long)]
    pub strict_rank: bool,
}

impl SolverArgs {
    pub fn config(&self) -> Result<SolverConfig, CliError> {
        if !(self.r_final.is_finite() && self.r_final >= 1.0) {
            return Err(CliError::usage(format!(
                "--r-final {} must be >= 1",
                self.r_final
            )));
        }
        if self.stages == 0 {
            return Err(CliError::usage("--stages must be at least 1"));
        }
        let cfg = SolverConfig {
            tol: self.tol,
            tol_constraint: self.tol_constraint,
            max_outer_iters: self.max_outer_iters,
            max_newton_iters: self.max_newton_iters,
            schedule: match &self.schedule {
                Some(factors) => SchedulePolicy::Explicit(factors.clone()),
                None => SchedulePolicy::Geometric,
            },
            rank_policy: if self.strict_rank {
                RankPolicy::Strict
            } else {
                RankPolicy::MinNorm
            },
            ..SolverConfig::default()
        };
        cfg.validate()?;
        cfg.schedule.build(self.r_final, self.stages)?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory (created if missing).
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,

    /// Number of uniform parameter samples in curve.csv.
    #[arg(long, default_value_t = 512)]
    pub samples: usize,

    /// Write parameters and curve points in normalized [0, 1] units.
    #[arg(long)]
    pub normalized: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub fit: FitArgs,

    /// Points with weight below this fraction of the largest weight are outliers.
    #[arg(long, default_value_t = mewls::DEFAULT_TOL_CLASSIFY, value_parser = parse_open_unit)]
    pub tol_classify: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub basis: BasisArgs,
    #[command(flatten)]
    pub solver: SolverArgs,

    /// Number of outliers to rank.
    #[arg(long = "count", short = 'k')]
    pub count: usize,

    #[arg(long, default_value_t = mewls::DEFAULT_TOL_CLASSIFY, value_parser = parse_open_unit)]
    pub tol_classify: f64,

    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,

    /// Report parameters in normalized [0, 1] units.
    #[arg(long)]
    pub normalized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Profile,
    Spiral,
    Helix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum JitterArg {
    Alternating,
    Sign,
    Gaussian,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(value_enum)]
    pub kind: SynthKind,

    /// Number of points (spiral 200, helix 400).
    #[arg(long)]
    pub n: Option<usize>,

    /// Spiral offset `a`.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub a: f64,

    /// Spiral growth `b`.
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub b: f64,

    /// Helix radius.
    #[arg(long, default_value_t = 2.0)]
    pub radius: f64,

    /// Helix pitch `c` in `z = c t`.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    pub pitch: f64,

    /// Number of corrupted helix points.
    #[arg(long, default_value_t = 100)]
    pub m: usize,

    /// Noise variance (spiral 30, helix 20).
    #[arg(long)]
    pub var: Option<f64>,

    /// Half-width of the rejection box (spiral 60, helix 4).
    #[arg(long)]
    pub half_width: Option<f64>,

    #[arg(long, default_value_t = 32)]
    pub inliers: usize,

    #[arg(long, default_value_t = 12)]
    pub outliers: usize,

    /// Profile jitter standard deviation.
    #[arg(long, default_value_t = 0.01)]
    pub jitter: f64,

    #[arg(long, value_enum, default_value_t = JitterArg::Alternating)]
    pub jitter_shape: JitterArg,

    /// Profile outlier displacement range `min,max`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.22, 0.25])]
    pub displacement: Vec<f64>,

    /// Displace profile outliers in random directions.
    #[arg(long)]
    pub two_sided: bool,

    /// Smallest index gap between profile outliers and from either end.
    #[arg(long, default_value_t = 3)]
    pub min_gap: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output CSV (default `<kind>.csv`).
    #[arg(short, long)]
    pub out: Option<PathBuf>,

    /// Planted-index sidecar (default `<out stem>.planted.csv`).
    #[arg(long)]
    pub planted: Option<PathBuf>,
}

fn parse_open_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie strictly between 0 and 1"))
    }
}

/// How a command finished when it did not fail outright.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    /// Artifacts were written but the run stopped early.
    Partial(String),
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        match self {
            Outcome::Complete => 0,
            Outcome::Partial(_) => ErrorClass::Partial.exit_code(),
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Detect(args) => cmd_detect(args),
        Command::Score(args) => cmd_score(args),
        Command::Synth(args) => cmd_synth(args),
    }
}

/// A completed pipeline run, before anything is written.
pub struct Fitted {
    pub dataset: Dataset,
    pub knots: KnotVector,
    pub design: DesignMatrix,
    pub fit: MewlsFit,
    pub model: FitArtifact,
}

pub fn run_fit(args: &FitArgs) -> Result<Fitted, CliError> {
    if args.output.samples < 2 {
        return Err(CliError::usage("--samples must be at least 2"));
    }
    let cfg = args.solver.config()?;
    let knots = args.basis.knot_vector()?;
    let dataset = args.input.load()?;
    if dataset.len() < knots.n_basis() {
        return Err(CliError::new(
            ErrorClass::Input,
            format!(
                "{} usable rows for {} basis functions",
                dataset.len(),
                knots.n_basis()
            ),
        ));
    }
    let design = knots.design_matrix(&dataset.t)?;
    let fit = fit_mewls(
        &design,
        &dataset.y,
        args.solver.r_final,
        args.solver.stages,
        &cfg,
    )?;
    let model = output::artifact(
        &dataset,
        &knots,
        &fit,
        RunConfig {
            r_final: args.solver.r_final,
            stages: args.solver.stages,
            samples: args.output.samples,
            normalized: args.output.normalized,
            solver: cfg,
        },
    );
    Ok(Fitted {
        dataset,
        knots,
        design,
        fit,
        model,
    })
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::new(ErrorClass::Io, format!("{}: {e}", dir.display())))
}

fn write_fit_outputs(f: &Fitted, out: &OutputArgs) -> Result<(), CliError> {
    prepare_dir(&out.out)?;
    output::write_curve(&out.out.join(output::CURVE_FILE), &f.model)?;
    output::write_weights(
        &out.out.join(output::WEIGHTS_FILE),
        &f.dataset,
        &f.design,
        &f.fit.state,
        out.normalized,
    )?;
    output::write_trace(&out.out.join(output::TRACE_FILE), &f.fit)?;
    output::write_model(&out.out.join(output::MODEL_FILE), &f.model)?;
    Ok(())
}

fn fit_outcome(fit: &MewlsFit) -> Outcome {
    match (&fit.stop_reason, fit.completed) {
        (_, true) => Outcome::Complete,
        (Some(reason), false) => Outcome::Partial(reason.clone()),
        (None, false) => Outcome::Partial("continuation stopped early".into()),
    }
}

pub fn cmd_fit(args: &FitArgs) -> Result<Outcome, CliError> {
    let fitted = run_fit(args)?;
    write_fit_outputs(&fitted, &args.output)?;
    log::info!(
        "fit {} points through {} stages, final entropy {:.6}",
        fitted.dataset.len(),
        fitted.model.stages_completed,
        fitted.fit.state.entropy
    );
    Ok(fit_outcome(&fitted.fit))
}

pub fn cmd_detect(args: &DetectArgs) -> Result<Outcome, CliError> {
    let fitted = run_fit(&args.fit)?;
    write_fit_outputs(&fitted, &args.fit.output)?;
    let report = split_inliers_outliers(&fitted.fit.state.weights, args.tol_classify)?;
    output::write_outliers(
        &args.fit.output.out.join(output::OUTLIERS_FILE),
        &fitted.dataset,
        &report,
        args.fit.output.normalized,
    )?;
    println!(
        "flagged {} of {} points",
        report.outliers.len(),
        fitted.dataset.len()
    );
    Ok(fit_outcome(&fitted.fit))
}

pub fn cmd_score(args: &ScoreArgs) -> Result<Outcome, CliError> {
    let cfg = args.solver.config()?;
    let knots = args.basis.knot_vector()?;
    let dataset = args.input.load()?;
    if args.count >= dataset.len() {
        return Err(CliError::usage(format!(
            "--count {} must be below the {} data points",
            args.count,
            dataset.len()
        )));
    }
    let design = knots.design_matrix(&dataset.t)?;
    let (mut report, _) = score_outliers(
        &design,
        &dataset.y,
        args.count,
        args.tol_classify,
        args.solver.r_final,
        args.solver.stages,
        &cfg,
    )?;
    // The last stage may flag several points at once; keep the top `count`.
    report.outliers.truncate(args.count);
    prepare_dir(&args.out)?;
    output::write_ranking(
        &args.out.join(output::RANKING_FILE),
        &dataset,
        &report,
        args.normalized,
    )?;
    println!("score\tindex\tr");
    for o in &report.outliers {
        println!(
            "{}\t{}\t{}",
            o.score, dataset.source_rows[o.index], o.reduction
        );
    }
    if report.complete {
        Ok(Outcome::Complete)
    } else {
        Ok(Outcome::Partial(format!(
            "ranked {} of {} requested outliers",
            report.outliers.len(),
            args.count
        )))
    }
}

pub fn cmd_synth(args: &SynthArgs) -> Result<Outcome, CliError> {
    let (default_n, default_var, default_half) = match args.kind {
        SynthKind::Profile => (0, 0.0, 0.0),
        SynthKind::Spiral => (200, 30.0, 60.0),
        SynthKind::Helix => (400, 20.0, 4.0),
    };
    let n = args.n.unwrap_or(default_n);
    let noise = |dim: usize| NoiseSpec {
        variance: args.var.unwrap_or(default_var),
        bounds: vec![
            (
                -args.half_width.unwrap_or(default_half),
                args.half_width.unwrap_or(default_half)
            );
            dim
        ],
        seed: args.seed,
    };
    let (data, header): (Synthetic, &[&str]) = match args.kind {
        SynthKind::Spiral => (
            synth::gen_spiral(n, args.a, args.b, &noise(2))?,
            &["t", "x", "y"],
        ),
        SynthKind::Helix => (
            synth::gen_helix(n, args.radius, args.pitch, args.m, &noise(3))?,
            &["t", "x", "y", "z"],
        ),
        SynthKind::Profile => {
            let noise = ProfileNoise {
                jitter: args.jitter,
                jitter_shape: match args.jitter_shape {
                    JitterArg::Alternating => JitterShape::Alternating,
                    JitterArg::Sign => JitterShape::Sign,
                    JitterArg::Gaussian => JitterShape::Gaussian,
                },
                displacement: (args.displacement[0], args.displacement[1]),
                one_sided: !args.two_sided,
                min_gap: args.min_gap,
                seed: args.seed,
            };
            (
                synth::gen_profile(args.inliers, args.outliers, synth::builtin_profile, &noise)?,
                &["t", "y"],
            )
        }
    };
    let kind = args
        .kind
        .to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string();
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{kind}.csv")));
    let planted = args.planted.clone().unwrap_or_else(|| {
        let stem = out
            .file_stem()
            .map_or_else(|| kind.clone(), |s| s.to_string_lossy().into_owned());
        out.with_file_name(format!("{stem}.planted.csv"))
    });
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        prepare_dir(dir)?;
    }
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    output::write_series(&out, &header, &data.series.t, &data.series.y)?;
    output::write_indices(&planted, &data.planted)?;
    println!(
        "wrote {} rows to {} and {} planted indices to {}",
        data.series.len(),
        out.display(),
        data.planted.len(),
        planted.display()
    );
    Ok(Outcome::Complete)
}
