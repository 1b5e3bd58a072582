//! B-spline bases on clamped (`d+1`-regular) knot vectors.
//!
//! Basis values come from the Cox–de Boor three-term recursion. Terms whose
//! denominator vanishes (repeated knots) are dropped. The half-open span
//! convention `[x_j, x_{j+1})` is used everywhere except at `x = 1`, which is
//! assigned to the last nonempty span so that `B_n(1) = 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MewlsError, Result};
use crate::wls::ControlPoints;

/// A nondecreasing knot sequence on `[0, 1]` whose first and last `d+1`
/// entries are clamped to 0 and 1 respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    /// Clamped knot vector with `n - d - 1` equally spaced interior knots.
    pub fn uniform(degree: usize, n_basis: usize) -> Result<Self> {
        if n_basis < degree + 1 {
            return Err(MewlsError::InvalidBasis(format!(
                "need at least {} basis functions for degree {degree}, got {n_basis}",
                degree + 1
            )));
        }
        let spans = n_basis - degree;
        let mut knots = Vec::with_capacity(n_basis + degree + 1);
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        knots.extend((1..spans).map(|k| k as f64 / spans as f64));
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(Self { degree, knots })
    }

    /// Validates a user-supplied knot list of length `n + d + 1`.
    pub fn from_knots(degree: usize, knots: Vec<f64>) -> Result<Self> {
        let len = knots.len();
        if len < 2 * (degree + 1) {
            return Err(MewlsError::InvalidBasis(format!(
                "{len} knots cannot hold a clamped basis of degree {degree}"
            )));
        }
        if knots
            .iter()
            .any(|k| !k.is_finite() || !(0.0..=1.0).contains(k))
        {
            return Err(MewlsError::InvalidBasis("knots must lie in [0, 1]".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(MewlsError::InvalidBasis(
                "knots must be nondecreasing".into(),
            ));
        }
        if knots[..=degree].iter().any(|&k| k != 0.0)
            || knots[len - degree - 1..].iter().any(|&k| k != 1.0)
        {
            return Err(MewlsError::InvalidBasis(format!(
                "the first and last {} knots must equal 0 and 1",
                degree + 1
            )));
        }
        let n = len - degree - 1;
        if let Some(j) = (0..n).find(|&j| knots[j] >= knots[j + degree + 1]) {
            return Err(MewlsError::InvalidBasis(format!(
                "knot {j} has multiplicity above {degree}"
            )));
        }
        Ok(Self { degree, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions `n`.
    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Index `k` of the span `[x_k, x_{k+1})` holding `x`, with `x = 1`
    /// mapped to the last nonempty span.
    fn span(&self, x: f64) -> usize {
        let n = self.n_basis();
        if x >= 1.0 {
            return n - 1;
        }
        // Largest k in [d, n-1] with knots[k] <= x.
        let upper = self.knots[self.degree + 1..n].partition_point(|&k| k <= x);
        self.degree + upper
    }

    /// The `d+1` possibly nonzero basis values at `x`, and the index of the
    /// first of them.
    pub fn eval_nonzero(&self, x: f64) -> Result<(usize, Vec<f64>)> {
        if !(0.0..=1.0).contains(&x) {
            return Err(MewlsError::Domain { value: x });
        }
        let d = self.degree;
        let k = self.span(x);
        let t = &self.knots;
        // local[i] holds B_{k-p+i, p}; starts as the degree-0 indicator of span k.
        let mut local = vec![0.0; d + 1];
        local[0] = 1.0;
        for p in 1..=d {
            let mut next = vec![0.0; p + 1];
            for (i, slot) in next.iter_mut().enumerate() {
                let j = k + i - p;
                let mut value = 0.0;
                // B_{j,p-1} is local[i-1] (absent for i = 0).
                if i > 0 {
                    let den = t[j + p] - t[j];
                    if den > 0.0 {
                        value += (x - t[j]) / den * local[i - 1];
                    }
                }
                // B_{j+1,p-1} is local[i] (absent for i = p).
                if i < p {
                    let den = t[j + p + 1] - t[j + 1];
                    if den > 0.0 {
                        value += (t[j + p + 1] - x) / den * local[i];
                    }
                }
                *slot = value;
            }
            local = next;
        }
        Ok((k - d, local))
    }

    /// All `n` basis values `(B_1(x), ..., B_n(x))`.
    pub fn eval_basis(&self, x: f64) -> Result<Vec<f64>> {
        let (first, local) = self.eval_nonzero(x)?;
        let mut out = vec![0.0; self.n_basis()];
        out[first..first + local.len()].copy_from_slice(&local);
        Ok(out)
    }

    /// The generalized Vandermonde matrix with rows `B(t_i)`.
    pub fn design_matrix(&self, t: &[f64]) -> Result<DesignMatrix> {
        let mut values = DMatrix::zeros(t.len(), self.n_basis());
        for (i, &x) in t.iter().enumerate() {
            let (first, local) = self.eval_nonzero(x)?;
            for (j, v) in local.into_iter().enumerate() {
                values[(i, first + j)] = v;
            }
        }
        Ok(DesignMatrix { values })
    }

    /// Evaluates `sum_j c_j B_j(x)`.
    pub fn eval_spline(&self, c: &ControlPoints, x: f64) -> Result<Vec<f64>> {
        if c.n_points() != self.n_basis() {
            return Err(MewlsError::InvalidArgument(format!(
                "{} control points for {} basis functions",
                c.n_points(),
                self.n_basis()
            )));
        }
        let (first, local) = self.eval_nonzero(x)?;
        let coeffs = c.as_matrix();
        let mut out = vec![0.0; c.dim()];
        for (j, b) in local.iter().enumerate() {
            for (k, o) in out.iter_mut().enumerate() {
                *o += b * coeffs[(first + j, k)];
            }
        }
        Ok(out)
    }
}

/// `m x n` matrix of basis values, row `i` = `B(t_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(values: DMatrix<f64>) -> Self {
        Self { values }
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }
}

/// A fitted spline: knots plus control points.
#[derive(Debug, Clone, PartialEq)]
pub struct Spline {
    pub knots: KnotVector,
    pub coefficients: ControlPoints,
}

impl Spline {
    pub fn eval(&self, x: f64) -> Result<Vec<f64>> {
        self.knots.eval_spline(&self.coefficients, x)
    }

    /// `count` uniform samples `(x, f(x))` over `[0, 1]`.
    pub fn sample(&self, count: usize) -> Result<Vec<(f64, Vec<f64>)>> {
        if count < 2 {
            return Err(MewlsError::InvalidArgument(
                "need at least 2 samples".into(),
            ));
        }
        (0..count)
            .map(|i| {
                let x = if i + 1 == count {
                    1.0
                } else {
                    i as f64 / (count - 1) as f64
                };
                self.eval(x).map(|p| (x, p))
            })
            .collect()
    }
}
