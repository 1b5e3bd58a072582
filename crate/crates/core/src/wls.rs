//! Weighted linear least squares for vector-valued data.
//!
//! Because the weight matrix acts identically on every data component, the
//! `s` components share one scaled matrix `sqrt(W) A` and are solved as `s`
//! right-hand sides of the same factorization. The factorization is a
//! Householder QR with column pivoting; if it reveals rank deficiency the
//! caller may opt into a minimum-norm SVD solution.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bspline::DesignMatrix;
use crate::error::{MewlsError, Result};

/// Singular values (or `|R_kk|`) below this fraction of the largest are zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Probability weights over the `m` data points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(m: usize) -> Self {
        Self(vec![1.0 / m as f64; m])
    }

    /// Accepts weights already summing to one (within 1e-10).
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(MewlsError::EmptyInput("weight vector".into()));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(MewlsError::InvalidArgument(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-10 {
            return Err(MewlsError::InvalidArgument(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self(w))
    }

    /// Rescales nonnegative weights onto the simplex.
    pub fn normalized(w: Vec<f64>) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if !(sum.is_finite() && sum > 0.0) || w.iter().any(|v| *v < 0.0) {
            return Err(MewlsError::InvalidArgument(
                "weights must be nonnegative with positive sum".into(),
            ));
        }
        Ok(Self(w.into_iter().map(|v| v / sum).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub(crate) fn from_raw_unchecked(w: Vec<f64>) -> Self {
        Self(w)
    }
}

/// `n` control points in `R^s`, stored as an `n x s` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPoints(DMatrix<f64>);

impl ControlPoints {
    pub fn new(c: DMatrix<f64>) -> Self {
        Self(c)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let s = rows.first().map_or(0, Vec::len);
        Self(DMatrix::from_fn(rows.len(), s, |i, k| rows[i][k]))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n_points(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.0.nrows())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }
}

/// What to do when `sqrt(W) A` is numerically rank deficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RankPolicy {
    /// Report [`MewlsError::RankDeficient`].
    Strict,
    /// Return the minimum-norm least-squares solution from an SVD.
    #[default]
    MinNorm,
}

#[derive(Debug, Clone)]
pub struct LsSolution {
    pub coefficients: ControlPoints,
    /// Numerical rank of `sqrt(W) A`.
    pub rank: usize,
}

/// `argmin_c sum_i w_i ||(A c)_i - y_i||^2`, failing on rank deficiency.
pub fn solve_weighted_ls(
    a: &DesignMatrix,
    w: &WeightVector,
    y: &DMatrix<f64>,
) -> Result<ControlPoints> {
    solve_weighted_ls_with(a, w, y, RankPolicy::Strict).map(|s| s.coefficients)
}

pub fn solve_weighted_ls_with(
    a: &DesignMatrix,
    w: &WeightVector,
    y: &DMatrix<f64>,
    policy: RankPolicy,
) -> Result<LsSolution> {
    let (m, n) = (a.n_rows(), a.n_cols());
    check_dims(a, w, y)?;
    let sqrt_w: Vec<f64> = w.as_slice().iter().map(|v| v.sqrt()).collect();
    let scaled = DMatrix::from_fn(m, n, |i, j| sqrt_w[i] * a.as_matrix()[(i, j)]);
    let rhs = DMatrix::from_fn(m, y.ncols(), |i, k| sqrt_w[i] * y[(i, k)]);

    let qr = PivotedQr::factor(scaled.clone(), rhs);
    let rank = qr.rank(RANK_TOLERANCE);
    if rank == n {
        return Ok(LsSolution {
            coefficients: ControlPoints(qr.solve_full_rank()),
            rank,
        });
    }
    match policy {
        RankPolicy::Strict => Err(MewlsError::RankDeficient { rank, cols: n }),
        RankPolicy::MinNorm => {
            log::warn!("weighted design matrix has numerical rank {rank} < {n}; using minimum-norm solution");
            let rhs = DMatrix::from_fn(m, y.ncols(), |i, k| sqrt_w[i] * y[(i, k)]);
            let svd = scaled.svd(true, true);
            let smax = svd.singular_values.max();
            let c = svd
                .solve(&rhs, RANK_TOLERANCE * smax)
                .map_err(|e| MewlsError::SolverFailure(e.to_string()))?;
            if c.iter().any(|v| !v.is_finite()) {
                return Err(MewlsError::RankDeficient { rank, cols: n });
            }
            Ok(LsSolution {
                coefficients: ControlPoints(c),
                rank,
            })
        }
    }
}

/// Weighted mean squared error `sum_i w_i ||f(t_i, c) - y_i||^2`.
pub fn mse_of_fit(
    a: &DesignMatrix,
    w: &WeightVector,
    c: &ControlPoints,
    y: &DMatrix<f64>,
) -> Result<f64> {
    check_dims(a, w, y)?;
    let r2 = crate::mewls::squared_residuals(a, c, y)?;
    Ok(w.as_slice().iter().zip(&r2).map(|(wi, ri)| wi * ri).sum())
}

fn check_dims(a: &DesignMatrix, w: &WeightVector, y: &DMatrix<f64>) -> Result<()> {
    if a.n_rows() != w.len() || a.n_rows() != y.nrows() {
        return Err(MewlsError::InvalidArgument(format!(
            "dimension mismatch: A has {} rows, w has {}, y has {}",
            a.n_rows(),
            w.len(),
            y.nrows()
        )));
    }
    Ok(())
}

/// Householder QR with column pivoting, applied in place to a right-hand side.
struct PivotedQr {
    /// Upper triangle holds R.
    r: DMatrix<f64>,
    /// `Q^T b`.
    qtb: DMatrix<f64>,
    perm: Vec<usize>,
    steps: usize,
}

impl PivotedQr {
    fn factor(mut a: DMatrix<f64>, mut b: DMatrix<f64>) -> Self {
        let (m, n) = a.shape();
        let mut perm: Vec<usize> = (0..n).collect();
        let steps = m.min(n);
        for k in 0..steps {
            // Pivot: remaining column with the largest trailing norm.
            let (p, best) = (k..n)
                .map(|j| (j, a.view((k, j), (m - k, 1)).norm_squared()))
                .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if p != k {
                a.swap_columns(k, p);
                perm.swap(k, p);
            }
            let norm = best.sqrt();
            if norm == 0.0 {
                for i in k..m {
                    a[(i, k)] = 0.0;
                }
                continue;
            }
            let alpha = if a[(k, k)] > 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = (k..m).map(|i| a[(i, k)]).collect();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            if vnorm2 > 0.0 {
                let apply = |mat: &mut DMatrix<f64>, col: usize| {
                    let dot: f64 = v
                        .iter()
                        .enumerate()
                        .map(|(i, vi)| vi * mat[(k + i, col)])
                        .sum();
                    let f = 2.0 * dot / vnorm2;
                    for (i, vi) in v.iter().enumerate() {
                        mat[(k + i, col)] -= f * vi;
                    }
                };
                for j in k + 1..n {
                    apply(&mut a, j);
                }
                for j in 0..b.ncols() {
                    apply(&mut b, j);
                }
            }
            a[(k, k)] = alpha;
            for i in k + 1..m {
                a[(i, k)] = 0.0;
            }
        }
        Self {
            r: a,
            qtb: b,
            perm,
            steps,
        }
    }

    fn rank(&self, rel_tol: f64) -> usize {
        let lead = if self.steps > 0 {
            self.r[(0, 0)].abs()
        } else {
            0.0
        };
        if lead == 0.0 {
            return 0;
        }
        (0..self.steps)
            .take_while(|&k| self.r[(k, k)].abs() > rel_tol * lead)
            .count()
    }

    fn solve_full_rank(&self) -> DMatrix<f64> {
        let n = self.r.ncols();
        let s = self.qtb.ncols();
        let mut z = DMatrix::zeros(n, s);
        for col in 0..s {
            for k in (0..n).rev() {
                let mut acc = self.qtb[(k, col)];
                for j in k + 1..n {
                    acc -= self.r[(k, j)] * z[(j, col)];
                }
                z[(k, col)] = acc / self.r[(k, k)];
            }
        }
        let mut c = DMatrix::zeros(n, s);
        for (k, &orig) in self.perm.iter().enumerate() {
            c.set_row(orig, &z.row(k));
        }
        c
    }
}
