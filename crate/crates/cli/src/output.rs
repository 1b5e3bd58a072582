//! Artifact writers. Floats go through `ryu` (shortest round-trip form), so
//! identical inputs always give byte-identical files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use mewls::{
    squared_residuals, AffineTransform, ControlPoints, Dataset, DesignMatrix, FitState, KnotVector,
    MewlsFit, OutlierReport, Result as CoreResult, SolverConfig, Spline,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CURVE_FILE: &str = "curve.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const MODEL_FILE: &str = "fit.json";
pub const OUTLIERS_FILE: &str = "outliers.csv";
pub const RANKING_FILE: &str = "ranking.csv";

/// Run settings echoed into `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub r_final: f64,
    pub stages: usize,
    pub samples: usize,
    pub normalized: bool,
    pub solver: SolverConfig,
}

/// Contents of `fit.json`. Control points live in normalized coordinates;
/// `transform` maps them back to original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitArtifact {
    pub degree: usize,
    pub knots: Vec<f64>,
    pub control_points: Vec<Vec<f64>>,
    pub transform: AffineTransform,
    pub columns: Vec<String>,
    pub config: RunConfig,
    pub converged: bool,
    /// Tightening stages completed after the OLS stage.
    pub stages_completed: usize,
    pub mse_uw: f64,
    pub lambda2: f64,
    pub entropy: f64,
    pub stop_reason: Option<String>,
}

impl FitArtifact {
    pub fn spline(&self) -> CoreResult<Spline> {
        Ok(Spline {
            knots: KnotVector::from_knots(self.degree, self.knots.clone())?,
            coefficients: ControlPoints::from_rows(&self.control_points),
        })
    }

    /// Rows of `curve.csv`: parameter followed by the curve point.
    pub fn curve(&self) -> CoreResult<Vec<Vec<f64>>> {
        let samples = self.spline()?.sample(self.config.samples)?;
        Ok(samples
            .into_iter()
            .map(|(x, p)| self.curve_row(x, &p))
            .collect())
    }

    fn curve_row(&self, x: f64, p: &[f64]) -> Vec<f64> {
        if self.config.normalized {
            std::iter::once(x).chain(p.iter().copied()).collect()
        } else {
            std::iter::once(self.transform.t_to_raw(x))
                .chain(self.transform.point_to_raw(p))
                .collect()
        }
    }
}

pub fn artifact(ds: &Dataset, kv: &KnotVector, fit: &MewlsFit, config: RunConfig) -> FitArtifact {
    let mut columns = vec![ds.t_name.clone()];
    columns.extend(ds.y_names.iter().cloned());
    FitArtifact {
        degree: kv.degree(),
        knots: kv.knots().to_vec(),
        control_points: fit.state.coefficients.rows(),
        transform: ds.transform.clone(),
        columns,
        config,
        converged: fit.completed,
        stages_completed: fit.trace.len() - 1,
        mse_uw: fit.mse_uw,
        lambda2: fit.state.lambda2,
        entropy: fit.state.entropy,
        stop_reason: fit.stop_reason.clone(),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::new(crate::ErrorClass::Io, format!("{}: {e}", path.display())))?;
    Ok(csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(file)))
}

pub fn write_curve(path: &Path, model: &FitArtifact) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(&model.columns)?;
    for row in model.curve()? {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct WeightRow {
    index: usize,
    t: f64,
    w: f64,
    r2: f64,
}

/// `index` is the data row in the input file; `r2` is in normalized units.
pub fn write_weights(
    path: &Path,
    ds: &Dataset,
    a: &DesignMatrix,
    state: &FitState,
    normalized: bool,
) -> Result<(), CliError> {
    let r2 = squared_residuals(a, &state.coefficients, &ds.y)?;
    let mut w = writer(path)?;
    w.write_record(["index", "t", "w", "r2"])?;
    for (i, (&wi, &ri)) in state.weights.as_slice().iter().zip(&r2).enumerate() {
        w.serialize(WeightRow {
            index: ds.source_rows[i],
            t: param(ds, i, normalized),
            w: wi,
            r2: ri,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    stage: usize,
    r: f64,
    mse_target: f64,
    mse_achieved: f64,
    lambda2: f64,
    entropy: f64,
    outer_iters: usize,
}

pub fn write_trace(path: &Path, fit: &MewlsFit) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record([
        "stage",
        "r",
        "mse_target",
        "mse_achieved",
        "lambda2",
        "entropy",
        "outer_iters",
    ])?;
    for rec in &fit.trace {
        let s = &rec.state;
        w.serialize(TraceRow {
            stage: rec.stage,
            r: rec.reduction,
            mse_target: s.mse_target,
            mse_achieved: s.mse,
            lambda2: s.lambda2,
            entropy: s.entropy,
            outer_iters: s.outer_iterations,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_model(path: &Path, model: &FitArtifact) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, model)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct OutlierRow {
    index: usize,
    t: f64,
    weight: f64,
    flagged: u8,
    score: Option<usize>,
}

/// One row per point; `score` is empty for inliers.
pub fn write_outliers(
    path: &Path,
    ds: &Dataset,
    report: &OutlierReport,
    normalized: bool,
) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["index", "t", "weight", "flagged", "score"])?;
    for i in 0..ds.len() {
        let score = report.score_of(i);
        w.serialize(OutlierRow {
            index: ds.source_rows[i],
            t: param(ds, i, normalized),
            weight: report.weights[i],
            flagged: u8::from(score.is_some()),
            score,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RankRow {
    score: usize,
    index: usize,
    t: f64,
    weight: f64,
    stage: usize,
    r: f64,
}

/// Flagged points in score order with the reduction factor at which each entered.
pub fn write_ranking(
    path: &Path,
    ds: &Dataset,
    report: &OutlierReport,
    normalized: bool,
) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["score", "index", "t", "weight", "stage", "r"])?;
    for o in &report.outliers {
        w.serialize(RankRow {
            score: o.score,
            index: ds.source_rows[o.index],
            t: param(ds, o.index, normalized),
            weight: o.weight,
            stage: o.stage,
            r: o.reduction,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a generated series with a header row.
pub fn write_series(
    path: &Path,
    header: &[String],
    t: &[f64],
    y: &[Vec<f64>],
) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(header)?;
    for (ti, yi) in t.iter().zip(y) {
        let row: Vec<f64> = std::iter::once(*ti).chain(yi.iter().copied()).collect();
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_indices(path: &Path, indices: &[usize]) -> Result<(), CliError> {
    let mut w = writer(path)?;
    w.write_record(["index"])?;
    for i in indices {
        w.serialize(i)?;
    }
    w.flush()?;
    Ok(())
}

fn param(ds: &Dataset, i: usize, normalized: bool) -> f64 {
    if normalized {
        ds.t[i]
    } else {
        ds.transform.t_to_raw(ds.t[i])
    }
}
