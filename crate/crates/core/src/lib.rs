//! Maximum-entropy weighted least-squares (MEWLS) B-spline fitting.
//!
//! Fits spline functions and curves to noisy series while driving the weights
//! of outlying points toward zero: the weights maximize Shannon entropy subject
//! to a prescribed weighted mean squared error, and a continuation on that
//! error deforms the ordinary least-squares fit into the robust one.
//!
//! ```
//! use mewls::{fit_mewls, split_inliers_outliers, KnotVector, SolverConfig};
//! use nalgebra::DMatrix;
//!
//! let t: Vec<f64> = (0..20).map(|i| i as f64 / 19.0).collect();
//! let mut y: Vec<f64> = t.iter().map(|x| 0.2 + 0.5 * x + 0.01 * (7.0 * x).sin()).collect();
//! y[9] += 0.5;
//! let kv = KnotVector::uniform(2, 5).unwrap();
//! let a = kv.design_matrix(&t).unwrap();
//! let fit = fit_mewls(&a, &DMatrix::from_column_slice(20, 1, &y), 1e4, 20, &SolverConfig::default()).unwrap();
//! let report = split_inliers_outliers(&fit.state.weights, 1e-4).unwrap();
//! assert_eq!(report.outlier_indices(), vec![9]);
//! ```

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bspline;
pub mod classify;
pub mod data;
pub mod error;
pub mod mewls;
pub mod synth;
pub mod wls;

pub use bspline::{DesignMatrix, KnotVector, Spline};
pub use classify::{
    score_outliers, split_inliers_outliers, OutlierReport, ScoredOutlier, DEFAULT_TOL_CLASSIFY,
};
pub use data::{
    denormalize_curve, load_csv, normalize, read_csv, AffineTransform, CsvOptions, Dataset,
    RawSeries,
};
pub use error::{MewlsError, Result};
pub use mewls::{
    entropy, fit_mewls, fit_stage, fit_with_schedule, fixed_point_residuals, solve_lambda2,
    squared_residuals, update_weights, ContinuationSchedule, FitState, FixedPointResiduals,
    MewlsFit, SchedulePolicy, SolverConfig, StageRecord,
};
pub use wls::{
    mse_of_fit, solve_weighted_ls, solve_weighted_ls_with, ControlPoints, RankPolicy, WeightVector,
};

pub use nalgebra;
