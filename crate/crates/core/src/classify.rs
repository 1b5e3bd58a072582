//! Inlier/outlier partition from converged weights, and entry-order scoring.

use nalgebra::DMatrix;

use crate::bspline::DesignMatrix;
use crate::error::{MewlsError, Result};
use crate::mewls::{self, FitState, SolverConfig};
use crate::wls::WeightVector;

/// Default relative weight threshold below which a point counts as an outlier.
pub const DEFAULT_TOL_CLASSIFY: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOutlier {
    pub index: usize,
    /// 1 for the first point flagged.
    pub score: usize,
    pub weight: f64,
    /// Continuation stage at which the point was first flagged.
    pub stage: usize,
    /// Reduction factor of that stage.
    pub reduction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    pub inliers: Vec<usize>,
    /// Outliers ordered by score.
    pub outliers: Vec<ScoredOutlier>,
    pub weights: Vec<f64>,
    pub threshold: f64,
    /// False when scoring stopped before the requested count was reached.
    pub complete: bool,
}

impl OutlierReport {
    pub fn outlier_indices(&self) -> Vec<usize> {
        self.outliers.iter().map(|o| o.index).collect()
    }

    pub fn is_outlier(&self, index: usize) -> bool {
        self.outliers.iter().any(|o| o.index == index)
    }

    pub fn score_of(&self, index: usize) -> Option<usize> {
        self.outliers
            .iter()
            .find(|o| o.index == index)
            .map(|o| o.score)
    }
}

fn check_threshold(tol_classify: f64) -> Result<()> {
    if !(tol_classify > 0.0 && tol_classify < 1.0) {
        return Err(MewlsError::InvalidThreshold(tol_classify));
    }
    Ok(())
}

/// Indices with `w_i < tol * max_j w_j`, ordered by ascending weight then index.
fn below_threshold(w: &[f64], tol_classify: f64) -> Vec<usize> {
    let cut = tol_classify * w.iter().copied().fold(0.0, f64::max);
    let mut flagged: Vec<usize> = (0..w.len()).filter(|&i| w[i] < cut).collect();
    flagged.sort_by(|&a, &b| w[a].total_cmp(&w[b]).then(a.cmp(&b)));
    flagged
}

/// Splits points by the rule `w_i < tol * max_j w_j`.
pub fn split_inliers_outliers(w: &WeightVector, tol_classify: f64) -> Result<OutlierReport> {
    check_threshold(tol_classify)?;
    let ws = w.as_slice();
    let flagged = below_threshold(ws, tol_classify);
    let outliers = flagged
        .iter()
        .enumerate()
        .map(|(k, &i)| ScoredOutlier {
            index: i,
            score: k + 1,
            weight: ws[i],
            stage: 0,
            reduction: 1.0,
        })
        .collect::<Vec<_>>();
    let inliers = (0..ws.len()).filter(|i| !flagged.contains(i)).collect();
    Ok(OutlierReport {
        inliers,
        outliers,
        weights: ws.to_vec(),
        threshold: tol_classify,
        complete: true,
    })
}

/// Tightens the MSE target stage by stage until `n_outliers` points have
/// entered the outlier set, scoring each by the order it entered.
///
/// Once flagged a point keeps its score. Points entering at the same stage are
/// ordered by ascending weight, then index. When the schedule built from
/// `(r_final, n_stages)` is exhausted first, `r_final` is doubled and the
/// continuation proceeds with the same per-stage ratio.
pub fn score_outliers(
    a: &DesignMatrix,
    y: &DMatrix<f64>,
    n_outliers: usize,
    tol_classify: f64,
    r_final: f64,
    n_stages: usize,
    cfg: &SolverConfig,
) -> Result<(OutlierReport, FitState)> {
    check_threshold(tol_classify)?;
    let m = a.n_rows();
    if n_outliers >= m {
        return Err(MewlsError::InvalidArgument(format!(
            "requested {n_outliers} outliers from {m} points"
        )));
    }
    let mut state = mewls::ols_state(a, y, cfg)?;
    let mse_uw = state.mse;
    let schedule = cfg.schedule.build(r_final, n_stages)?;

    let mut outliers: Vec<ScoredOutlier> = Vec::new();
    let mut latched = vec![false; m];
    let mut complete = n_outliers == 0;

    // Per-stage ratio used when extending past the initial schedule.
    let factors = schedule.factors().to_vec();
    let ratio = match factors.len() {
        0 | 1 => 2f64.powf(1.0 / n_stages.max(1) as f64),
        len => factors[len - 1] / factors[len - 2],
    };
    let mut stage = 0usize;
    let mut r_current = 1.0;
    let mut r_limit = factors.last().copied().unwrap_or(1.0).max(ratio);
    let mut pending: std::collections::VecDeque<f64> = factors.into_iter().skip(1).collect();
    let mut doublings = 0;

    'outer: while !complete && mse_uw > 0.0 {
        let r = match pending.pop_front() {
            Some(r) => r,
            None => {
                if doublings >= 64 {
                    break;
                }
                doublings += 1;
                r_limit *= 2.0;
                let mut r = r_current;
                while r * ratio < r_limit {
                    r *= ratio;
                    pending.push_back(r);
                }
                pending.push_back(r_limit);
                continue;
            }
        };
        stage += 1;
        match mewls::fit_stage(a, y, mse_uw / r, &state, cfg) {
            Ok(next) => state = next,
            Err(MewlsError::InfeasibleTarget { .. }) => break 'outer,
            Err(e) => return Err(e),
        }
        r_current = r;
        let ws = state.weights.as_slice();
        for i in below_threshold(ws, tol_classify) {
            if !latched[i] {
                latched[i] = true;
                outliers.push(ScoredOutlier {
                    index: i,
                    score: outliers.len() + 1,
                    weight: ws[i],
                    stage,
                    reduction: r,
                });
            }
        }
        complete = outliers.len() >= n_outliers;
    }
    if !complete {
        log::warn!(
            "flagged {} of {n_outliers} requested outliers before the target became unreachable",
            outliers.len()
        );
    }

    let weights = state.weights.as_slice().to_vec();
    let inliers = (0..m).filter(|&i| !latched[i]).collect();
    Ok((
        OutlierReport {
            inliers,
            outliers,
            weights,
            threshold: tol_classify,
            complete,
        },
        state,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::KnotVector;
    use proptest::prelude::*;

    #[test]
    fn uniform_weights_have_no_outliers() {
        let r = split_inliers_outliers(&WeightVector::uniform(10), 0.5).unwrap();
        assert!(r.outliers.is_empty());
        assert_eq!(r.inliers.len(), 10);
    }

    #[test]
    fn threshold_arithmetic() {
        let eps = 1e-3;
        let w = WeightVector::normalized(vec![0.5, 0.5 - eps, 1e-9]).unwrap();
        let r = split_inliers_outliers(&w, 1e-4).unwrap();
        assert_eq!(r.outlier_indices(), vec![2]);
        assert_eq!(r.score_of(2), Some(1));
        assert_eq!(r.inliers, vec![0, 1]);
    }

    #[test]
    fn invalid_thresholds() {
        let w = WeightVector::uniform(3);
        for tol in [1.0, 1.5, 0.0, -0.1, f64::NAN] {
            assert!(matches!(
                split_inliers_outliers(&w, tol),
                Err(MewlsError::InvalidThreshold(_))
            ));
        }
    }

    #[test]
    fn ties_broken_by_weight_then_index() {
        let w = WeightVector::normalized(vec![1.0, 1e-8, 1.0, 1e-9, 1e-8]).unwrap();
        let r = split_inliers_outliers(&w, 1e-4).unwrap();
        assert_eq!(r.outlier_indices(), vec![3, 1, 4]);
        assert_eq!(
            r.outliers.iter().map(|o| o.score).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    fn line_with_outlier() -> (DesignMatrix, DMatrix<f64>) {
        let t: Vec<f64> = (0..6).map(|i| i as f64 / 5.0).collect();
        let a = KnotVector::uniform(1, 2)
            .unwrap()
            .design_matrix(&t)
            .unwrap();
        let wiggle = [0.002, -0.001, 0.0015, 0.0, -0.002, 0.001];
        let mut y: Vec<f64> = t
            .iter()
            .zip(wiggle)
            .map(|(t, e)| 0.2 + 0.5 * t + e)
            .collect();
        y[3] += 0.6;
        (a, DMatrix::from_column_slice(6, 1, &y))
    }

    #[test]
    fn zero_requested_returns_ols() {
        let (a, y) = line_with_outlier();
        let cfg = SolverConfig::default();
        let (report, state) = score_outliers(&a, &y, 0, 1e-4, 100.0, 10, &cfg).unwrap();
        assert!(report.outliers.is_empty());
        assert!(report.complete);
        assert_eq!(state.lambda2, 0.0);
        assert_eq!(state.weights, WeightVector::uniform(6));
    }

    #[test]
    fn single_gross_outlier_scored_first() {
        let (a, y) = line_with_outlier();
        let cfg = SolverConfig::default();
        // A small initial sweep forces the adaptive extension.
        let (report, _) = score_outliers(&a, &y, 1, 1e-4, 4.0, 4, &cfg).unwrap();
        assert!(report.complete);
        assert_eq!(report.outliers[0].index, 3);
        assert_eq!(report.outliers[0].score, 1);
        assert!(report.outliers[0].reduction > 4.0);
    }

    #[test]
    fn too_many_requested() {
        let (a, y) = line_with_outlier();
        assert!(score_outliers(&a, &y, 6, 1e-4, 10.0, 5, &SolverConfig::default()).is_err());
        assert!(score_outliers(&a, &y, 1, 1.0, 10.0, 5, &SolverConfig::default()).is_err());
    }

    #[test]
    fn incomplete_when_target_unreachable() {
        let (a, y) = line_with_outlier();
        let (report, _) =
            score_outliers(&a, &y, 5, 1e-4, 10.0, 5, &SolverConfig::default()).unwrap();
        assert!(!report.complete);
        assert!(report.outliers.len() < 5);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(raw in prop::collection::vec(1e-12f64..1.0, 1..40), tol in 1e-6f64..0.9) {
            let w = WeightVector::normalized(raw).unwrap();
            let r = split_inliers_outliers(&w, tol).unwrap();
            let again = split_inliers_outliers(&w, tol).unwrap();
            prop_assert_eq!(&r, &again);
            let cut = tol * w.max();
            let mut seen = vec![0u8; w.len()];
            for &i in &r.inliers { seen[i] += 1; prop_assert!(w.as_slice()[i] >= cut); }
            for o in &r.outliers { seen[o.index] += 1; prop_assert!(w.as_slice()[o.index] < cut); }
            prop_assert!(seen.iter().all(|&c| c == 1));
            let scores: Vec<usize> = r.outliers.iter().map(|o| o.score).collect();
            prop_assert_eq!(scores, (1..=r.outliers.len()).collect::<Vec<_>>());
        }
    }
}
