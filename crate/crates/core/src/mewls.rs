//! Maximum-entropy weighted least squares.
//!
//! Given a prescribed weighted MSE, the weights maximizing Shannon entropy
//! take the softmin form `w_i ∝ exp(-λ r_i²)`, where `r_i²` is the squared
//! residual of point `i` and `λ` is the multiplier of the MSE constraint. The
//! solver alternates three steps until they agree:
//!
//! 1. control points from a weighted least-squares solve with the current weights,
//! 2. `λ` from the scalar constraint equation (Newton, bisection-safeguarded),
//! 3. weights from the closed-form softmin.
//!
//! [`fit_mewls`] wraps this in a continuation over the target, tightening it
//! from the ordinary least-squares error `MSE_uw` down to `MSE_uw / r_final`
//! and warm-starting each stage from the previous one.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bspline::DesignMatrix;
use crate::error::{MewlsError, Result};
use crate::wls::{self, ControlPoints, RankPolicy, WeightVector};

/// How the reduction factors `1 = r_0 < r_1 < ... < r_N` are laid out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub enum SchedulePolicy {
    /// `r_j = r_final^(j/N)`.
    #[default]
    Geometric,
    /// Explicit factors after `r_0 = 1`; `r_final` and the stage count are ignored.
    Explicit(Vec<f64>),
}

impl SchedulePolicy {
    pub fn build(&self, r_final: f64, n_stages: usize) -> Result<ContinuationSchedule> {
        match self {
            SchedulePolicy::Geometric => ContinuationSchedule::geometric(r_final, n_stages),
            SchedulePolicy::Explicit(factors) => {
                let mut all = vec![1.0];
                all.extend(factors.iter().copied().filter(|&r| r != 1.0));
                ContinuationSchedule::new(all)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stopping tolerance on successive control points, weights and `λ`.
    pub tol: f64,
    /// Relative tolerance on the MSE constraint at convergence.
    pub tol_constraint: f64,
    /// Relative tolerance on the constraint equation inside the `λ` solve.
    pub tol_lambda: f64,
    pub max_outer_iters: usize,
    pub max_newton_iters: usize,
    pub schedule: SchedulePolicy,
    pub rank_policy: RankPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            tol_constraint: 1e-6,
            tol_lambda: 1e-12,
            max_outer_iters: 10_000,
            max_newton_iters: 50,
            schedule: SchedulePolicy::Geometric,
            rank_policy: RankPolicy::MinNorm,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.tol, self.tol_constraint, self.tol_lambda];
        if positive.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(MewlsError::InvalidArgument(
                "tolerances must be positive".into(),
            ));
        }
        if self.max_outer_iters == 0 || self.max_newton_iters == 0 {
            return Err(MewlsError::InvalidArgument(
                "iteration caps must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Strictly increasing reduction factors starting at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSchedule {
    factors: Vec<f64>,
}

impl ContinuationSchedule {
    pub fn new(factors: Vec<f64>) -> Result<Self> {
        if factors.first() != Some(&1.0) {
            return Err(MewlsError::InvalidArgument(
                "schedule must start at r = 1".into(),
            ));
        }
        if factors.iter().any(|r| !r.is_finite()) || factors.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MewlsError::InvalidArgument(
                "schedule must be strictly increasing".into(),
            ));
        }
        Ok(Self { factors })
    }

    /// `r_j = r_final^(j/N)`; collapses to `[1]` when `r_final = 1`.
    pub fn geometric(r_final: f64, n_stages: usize) -> Result<Self> {
        if !(r_final.is_finite() && r_final >= 1.0) {
            return Err(MewlsError::InvalidArgument(format!(
                "reduction factor {r_final} must be >= 1"
            )));
        }
        if n_stages == 0 {
            return Err(MewlsError::InvalidArgument(
                "need at least one stage".into(),
            ));
        }
        if r_final == 1.0 {
            return Ok(Self { factors: vec![1.0] });
        }
        let mut factors: Vec<f64> = (0..=n_stages)
            .map(|j| r_final.powf(j as f64 / n_stages as f64))
            .collect();
        factors[n_stages] = r_final;
        Self::new(factors)
    }

    pub fn factors(&self) -> &[f64] {
        &self.factors
    }

    /// `MSE_j = MSE_uw / r_j`.
    pub fn targets(&self, mse_uw: f64) -> Vec<f64> {
        self.factors.iter().map(|r| mse_uw / r).collect()
    }
}

/// Unknowns of the reduced system plus bookkeeping for one converged stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub coefficients: ControlPoints,
    pub weights: WeightVector,
    pub lambda2: f64,
    pub mse_target: f64,
    /// Weighted MSE actually achieved by `(coefficients, weights)`.
    pub mse: f64,
    pub entropy: f64,
    pub outer_iterations: usize,
}

/// One entry of the homotopy trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub stage: usize,
    pub reduction: f64,
    pub state: FitState,
}

#[derive(Debug, Clone)]
pub struct MewlsFit {
    pub state: FitState,
    pub trace: Vec<StageRecord>,
    /// Ordinary least-squares error with uniform weights.
    pub mse_uw: f64,
    /// False when the continuation stopped early on an unreachable target.
    pub completed: bool,
    pub stop_reason: Option<String>,
}

/// `||f(t_i, c) - y_i||²` for every data point.
pub fn squared_residuals(
    a: &DesignMatrix,
    c: &ControlPoints,
    y: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    if a.n_cols() != c.n_points() || a.n_rows() != y.nrows() || c.dim() != y.ncols() {
        return Err(MewlsError::InvalidArgument(format!(
            "dimension mismatch: A is {}x{}, c is {}x{}, y is {}x{}",
            a.n_rows(),
            a.n_cols(),
            c.n_points(),
            c.dim(),
            y.nrows(),
            y.ncols()
        )));
    }
    let fitted = a.as_matrix() * c.as_matrix();
    Ok((0..y.nrows())
        .map(|i| {
            (0..y.ncols())
                .map(|k| (fitted[(i, k)] - y[(i, k)]).powi(2))
                .sum()
        })
        .collect())
}

/// Shannon entropy `-sum w_i ln w_i` with `0 ln 0 = 0`.
pub fn entropy(w: &WeightVector) -> f64 {
    -w.as_slice()
        .iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// Unnormalized softmin terms `exp(-(λ r_i² - min_k λ r_k²))`.
fn shifted_exponentials(r2: &[f64], lambda2: f64) -> Vec<f64> {
    let shift = r2.iter().map(|r| lambda2 * r).fold(f64::INFINITY, f64::min);
    r2.iter().map(|r| (-(lambda2 * r - shift)).exp()).collect()
}

/// `w_i = exp(-λ r_i²) / Q(λ)`, evaluated with a max-shift.
pub fn update_weights(r2: &[f64], lambda2: f64) -> WeightVector {
    let e = shifted_exponentials(r2, lambda2);
    let q: f64 = e.iter().sum();
    WeightVector::from_raw_unchecked(e.into_iter().map(|v| v / q).collect())
}

/// Softmin mean of `r²` and its variance at `λ`.
fn softmin_moments(r2: &[f64], lambda2: f64) -> (f64, f64) {
    let w = update_weights(r2, lambda2);
    let mean: f64 = w.as_slice().iter().zip(r2).map(|(w, r)| w * r).sum();
    let var: f64 = w
        .as_slice()
        .iter()
        .zip(r2)
        .map(|(w, r)| w * (r - mean).powi(2))
        .sum();
    (mean, var)
}

/// Solves the constraint equation
/// `sum r_i² e^{-λ r_i²} - target sum e^{-λ r_i²} = 0` for `λ`.
///
/// Works with the normalized form `h(λ) = mean_w(r²) - target`, which has the
/// same roots and satisfies `h'(λ) = -Var_w(r²) <= 0`, so the root is unique
/// whenever `min r² < target < max r²`. Convergence means
/// `|h(λ)| <= tol * target`. Newton's method starts from `lambda2_init`; if it
/// has not converged after `max_iters` steps the root is bracketed and the
/// iteration continues with bisection safeguarding.
pub fn solve_lambda2(
    r2: &[f64],
    mse_target: f64,
    lambda2_init: f64,
    max_iters: usize,
    tol: f64,
) -> Result<f64> {
    if r2.is_empty() {
        return Err(MewlsError::EmptyInput("no residuals".into()));
    }
    if !(mse_target.is_finite() && mse_target > 0.0) || !lambda2_init.is_finite() {
        return Err(MewlsError::InvalidArgument(
            "target must be positive and λ finite".into(),
        ));
    }
    let lo_r = r2.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_r = r2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = mse_target * tol;
    let h = |lambda: f64| {
        let (mean, var) = softmin_moments(r2, lambda);
        (mean - mse_target, var)
    };

    // Constant residuals: h is identically mean - target.
    if hi_r - lo_r <= f64::EPSILON * hi_r {
        if (lo_r - mse_target).abs() <= scale.max(4.0 * f64::EPSILON * lo_r) {
            return Ok(lambda2_init);
        }
        return Err(MewlsError::InfeasibleTarget {
            target: mse_target,
            min_residual: lo_r,
        });
    }
    if mse_target <= lo_r || mse_target >= hi_r {
        return Err(MewlsError::InfeasibleTarget {
            target: mse_target,
            min_residual: lo_r,
        });
    }

    // Plain Newton from the warm start.
    let mut lambda = lambda2_init;
    for _ in 0..max_iters {
        let (value, var) = h(lambda);
        if value.abs() <= scale {
            return Ok(lambda);
        }
        if !(var > 0.0) {
            break;
        }
        let next = lambda + value / var;
        if !next.is_finite() {
            break;
        }
        lambda = next;
    }
    log::debug!("Newton did not converge for target {mse_target:e}; bracketing");

    // Bracket [lo, hi] with h(lo) > 0 > h(hi), growing away from the warm start.
    let start = if lambda2_init.is_finite() {
        lambda2_init
    } else {
        0.0
    };
    let (v0, _) = h(start);
    if v0.abs() <= scale {
        return Ok(start);
    }
    let mut step = 1.0 / (hi_r - lo_r);
    let (mut lo, mut hi) = (start, start);
    let mut bracketed = false;
    for _ in 0..2100 {
        let probe = if v0 > 0.0 { start + step } else { start - step };
        let (v, _) = h(probe);
        if v0 > 0.0 {
            if v <= 0.0 {
                hi = probe;
                bracketed = true;
                break;
            }
            lo = probe;
        } else {
            if v >= 0.0 {
                lo = probe;
                bracketed = true;
                break;
            }
            hi = probe;
        }
        step *= 2.0;
        if !step.is_finite() {
            break;
        }
    }
    if !bracketed {
        return Err(MewlsError::SolverFailure(format!(
            "could not bracket λ for target {mse_target:e}"
        )));
    }

    let mut lambda = 0.5 * (lo + hi);
    for _ in 0..max_iters + 200 {
        let (value, var) = h(lambda);
        if value.abs() <= scale {
            return Ok(lambda);
        }
        if value > 0.0 {
            lo = lambda;
        } else {
            hi = lambda;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lambda.abs().max(f64::MIN_POSITIVE) {
            // Bracket collapsed to adjacent floats; h is resolved as well as it can be.
            return Ok(lambda);
        }
        let newton = if var > 0.0 {
            lambda + value / var
        } else {
            f64::NAN
        };
        lambda = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(MewlsError::SolverFailure(format!(
        "λ iteration did not converge for target {mse_target:e}"
    )))
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// The ordinary least-squares state: uniform weights, `λ = 0`.
pub fn ols_state(a: &DesignMatrix, y: &DMatrix<f64>, cfg: &SolverConfig) -> Result<FitState> {
    let m = a.n_rows();
    if m == 0 {
        return Err(MewlsError::EmptyInput("no data points".into()));
    }
    let w = WeightVector::uniform(m);
    let c = wls::solve_weighted_ls_with(a, &w, y, cfg.rank_policy)?.coefficients;
    let r2 = squared_residuals(a, &c, y)?;
    let mse = r2.iter().sum::<f64>() / m as f64;
    Ok(FitState {
        coefficients: c,
        entropy: entropy(&w),
        weights: w,
        lambda2: 0.0,
        mse_target: mse,
        mse,
        outer_iterations: 0,
    })
}

/// Runs the alternating iteration for one MSE target, warm-started from `state_in`.
pub fn fit_stage(
    a: &DesignMatrix,
    y: &DMatrix<f64>,
    mse_target: f64,
    state_in: &FitState,
    cfg: &SolverConfig,
) -> Result<FitState> {
    cfg.validate()?;
    if !(mse_target.is_finite() && mse_target > 0.0) {
        return Err(MewlsError::InvalidArgument(format!(
            "MSE target {mse_target} must be positive"
        )));
    }
    let mut c_prev = state_in.coefficients.clone();
    let mut w = state_in.weights.clone();
    let mut lambda = state_in.lambda2;

    for k in 1..=cfg.max_outer_iters {
        let c = wls::solve_weighted_ls_with(a, &w, y, cfg.rank_policy)?.coefficients;
        let r2 = squared_residuals(a, &c, y)?;
        let lambda_next = solve_lambda2(
            &r2,
            mse_target,
            lambda,
            cfg.max_newton_iters,
            cfg.tol_lambda,
        )?;
        let w_next = update_weights(&r2, lambda_next);

        let dc = (c.as_matrix() - c_prev.as_matrix()).amax();
        let dlambda = (lambda_next - lambda).abs();
        let dw = max_abs_diff(w_next.as_slice(), w.as_slice());
        c_prev = c;
        w = w_next;
        lambda = lambda_next;

        // λ scales like 1/MSE, so its step is measured relative to its size.
        if dc < cfg.tol && dlambda < cfg.tol * lambda.abs().max(1.0) && dw < cfg.tol {
            let mse: f64 = w.as_slice().iter().zip(&r2).map(|(wi, ri)| wi * ri).sum();
            if (mse - mse_target).abs() > cfg.tol_constraint * mse_target {
                return Err(MewlsError::SolverFailure(format!(
                    "constraint violated at convergence: MSE {mse:e} vs target {mse_target:e}"
                )));
            }
            return Ok(FitState {
                coefficients: c_prev,
                entropy: entropy(&w),
                weights: w,
                lambda2: lambda,
                mse_target,
                mse,
                outer_iterations: k,
            });
        }
    }
    let r2 = squared_residuals(a, &c_prev, y)?;
    let mse = w.as_slice().iter().zip(&r2).map(|(wi, ri)| wi * ri).sum();
    Err(MewlsError::NonConvergence {
        iterations: cfg.max_outer_iters,
        target: mse_target,
        last: Box::new(FitState {
            coefficients: c_prev,
            entropy: entropy(&w),
            weights: w,
            lambda2: lambda,
            mse_target,
            mse,
            outer_iterations: cfg.max_outer_iters,
        }),
    })
}

/// Full continuation from the OLS fit down to `MSE_uw / r_final`.
///
/// The trace starts with the OLS stage (`r = 1`). If a stage target becomes
/// unreachable the fit stops there and returns the last feasible stage with
/// `completed = false`.
pub fn fit_mewls(
    a: &DesignMatrix,
    y: &DMatrix<f64>,
    r_final: f64,
    n_stages: usize,
    cfg: &SolverConfig,
) -> Result<MewlsFit> {
    let schedule = cfg.schedule.build(r_final, n_stages)?;
    fit_with_schedule(a, y, &schedule, cfg)
}

pub fn fit_with_schedule(
    a: &DesignMatrix,
    y: &DMatrix<f64>,
    schedule: &ContinuationSchedule,
    cfg: &SolverConfig,
) -> Result<MewlsFit> {
    cfg.validate()?;
    let ols = ols_state(a, y, cfg)?;
    let mse_uw = ols.mse;
    let mut trace = vec![StageRecord {
        stage: 0,
        reduction: 1.0,
        state: ols,
    }];

    if mse_uw == 0.0 && schedule.factors().len() > 1 {
        log::warn!("ordinary least squares already fits the data exactly; nothing to tighten");
        return Ok(MewlsFit {
            state: trace[0].state.clone(),
            trace,
            mse_uw,
            completed: true,
            stop_reason: Some("exact fit".into()),
        });
    }

    let mut completed = true;
    let mut stop_reason = None;
    for (j, &r) in schedule.factors().iter().enumerate().skip(1) {
        let prev = &trace.last().expect("trace starts with OLS").state;
        match fit_stage(a, y, mse_uw / r, prev, cfg) {
            Ok(state) => trace.push(StageRecord {
                stage: j,
                reduction: r,
                state,
            }),
            Err(err @ MewlsError::InfeasibleTarget { .. }) => {
                log::warn!("stopping continuation at stage {j} (r = {r}): {err}");
                completed = false;
                stop_reason = Some(format!("stage {j}: {err}"));
                break;
            }
            Err(err) => return Err(err),
        }
    }
    Ok(MewlsFit {
        state: trace.last().expect("nonempty").state.clone(),
        trace,
        mse_uw,
        completed,
        stop_reason,
    })
}

/// How far a state is from solving the reduced system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointResiduals {
    /// Largest over components of `||A^T W (A c - y)|| / ||A^T W y||`.
    pub normal: f64,
    /// `|mean_w(r²) - target| / target`, with `w` recomputed from `λ`.
    pub constraint: f64,
    /// `max_i |w_i - softmin_i(r², λ)|`.
    pub weights: f64,
}

pub fn fixed_point_residuals(
    a: &DesignMatrix,
    y: &DMatrix<f64>,
    state: &FitState,
) -> Result<FixedPointResiduals> {
    let w = state.weights.as_slice();
    let c = &state.coefficients;
    let resid = a.as_matrix() * c.as_matrix() - y;
    let mut normal: f64 = 0.0;
    for k in 0..y.ncols() {
        let mut num = vec![0.0; a.n_cols()];
        let mut den = vec![0.0; a.n_cols()];
        for i in 0..a.n_rows() {
            for (j, (nu, de)) in num.iter_mut().zip(den.iter_mut()).enumerate() {
                let aij = a.as_matrix()[(i, j)];
                *nu += aij * w[i] * resid[(i, k)];
                *de += aij * w[i] * y[(i, k)];
            }
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        normal = normal.max(norm(&num) / norm(&den).max(f64::MIN_POSITIVE));
    }
    let r2 = squared_residuals(a, c, y)?;
    let softmin = update_weights(&r2, state.lambda2);
    let mean: f64 = softmin.as_slice().iter().zip(&r2).map(|(w, r)| w * r).sum();
    Ok(FixedPointResiduals {
        normal,
        constraint: (mean - state.mse_target).abs() / state.mse_target,
        weights: max_abs_diff(w, softmin.as_slice()),
    })
}
