//! Seeded generators for synthetic test series: a noisy 1-D profile, an
//! Archimedean spiral and a circular helix, each with a known set of
//! corrupted ("planted") indices.
//!
//! All randomness comes from `ChaCha8Rng::seed_from_u64(seed)`, so a seed
//! fully determines the output. Planted indices are 0-based.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::RawSeries;
use crate::error::{MewlsError, Result};

/// Gaussian perturbation with rejection into an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub variance: f64,
    /// `(lower, upper)` per coordinate.
    pub bounds: Vec<(f64, f64)>,
    pub seed: u64,
}

impl NoiseSpec {
    fn validate(&self, dim: usize) -> Result<()> {
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(MewlsError::InvalidArgument(format!(
                "variance {} must be >= 0",
                self.variance
            )));
        }
        if self.bounds.len() != dim || self.bounds.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(MewlsError::InvalidArgument(format!(
                "need {dim} nonempty box bounds"
            )));
        }
        Ok(())
    }

    fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| v >= lo && v <= hi)
    }
}

/// A generated series with its corrupted indices and noise-free positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub series: RawSeries,
    /// Sorted, 0-based.
    pub planted: Vec<usize>,
    /// The uncorrupted curve value at every parameter.
    pub clean: Vec<Vec<f64>>,
}

const MAX_REJECTIONS: usize = 100_000;

/// Redraws `clean + N(0, σ² I)` until it falls inside the box.
fn perturb(
    clean: &[f64],
    noise: &NoiseSpec,
    normal: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    for _ in 0..MAX_REJECTIONS {
        let p: Vec<f64> = clean.iter().map(|c| c + normal.sample(rng)).collect();
        if noise.contains(&p) {
            return p;
        }
    }
    clean.to_vec()
}

fn normal(variance: f64) -> Normal<f64> {
    Normal::new(0.0, variance.sqrt()).expect("validated variance")
}

fn build(
    t: Vec<f64>,
    points: Vec<Vec<f64>>,
    clean: Vec<Vec<f64>>,
    planted: Vec<usize>,
    names: &[&str],
) -> Result<Synthetic> {
    let mut series = RawSeries::new(t, points)?;
    series.y_names = names.iter().map(|s| s.to_string()).collect();
    Ok(Synthetic {
        series,
        planted,
        clean,
    })
}

/// Archimedean spiral `((a + b t) cos t, (a + b t) sin t)` on `t_i = i h`,
/// `h = 4π / (N - 1)`. Every other sample starting with the first
/// (0-based indices 0, 2, 4, ...) is perturbed.
pub fn gen_spiral(n: usize, a: f64, b: f64, noise: &NoiseSpec) -> Result<Synthetic> {
    if n < 2 {
        return Err(MewlsError::InvalidArgument(
            "spiral needs at least 2 points".into(),
        ));
    }
    noise.validate(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = normal(noise.variance);
    let h = 4.0 * std::f64::consts::PI / (n - 1) as f64;
    let t: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
    let clean: Vec<Vec<f64>> = t
        .iter()
        .map(|&s| vec![(a + b * s) * s.cos(), (a + b * s) * s.sin()])
        .collect();
    let planted: Vec<usize> = (0..n).step_by(2).collect();
    let points = clean
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if i % 2 == 0 {
                perturb(p, noise, &normal, &mut rng)
            } else {
                p.clone()
            }
        })
        .collect();
    build(t, points, clean, planted, &["x", "y"])
}

/// Circular helix `(r cos 2πt, r sin 2πt, c t)` on `t ∈ [-4, 4]` with `N`
/// equispaced samples; a seeded random subset of `m_corrupt` is perturbed.
pub fn gen_helix(
    n: usize,
    radius: f64,
    pitch: f64,
    m_corrupt: usize,
    noise: &NoiseSpec,
) -> Result<Synthetic> {
    if n < 2 {
        return Err(MewlsError::InvalidArgument(
            "helix needs at least 2 points".into(),
        ));
    }
    if m_corrupt > n {
        return Err(MewlsError::InvalidArgument(format!(
            "cannot corrupt {m_corrupt} of {n} points"
        )));
    }
    noise.validate(3)?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = normal(noise.variance);
    let h = 8.0 / (n - 1) as f64;
    let t: Vec<f64> = (0..n).map(|i| -4.0 + i as f64 * h).collect();
    let tau = 2.0 * std::f64::consts::PI;
    let clean: Vec<Vec<f64>> = t
        .iter()
        .map(|&s| {
            vec![
                radius * (tau * s).cos(),
                radius * (tau * s).sin(),
                pitch * s,
            ]
        })
        .collect();
    let mut planted = index::sample(&mut rng, n, m_corrupt).into_vec();
    planted.sort_unstable();
    let mut points = clean.clone();
    for &i in &planted {
        points[i] = perturb(&clean[i], noise, &normal, &mut rng);
    }
    build(t, points, clean, planted, &["x", "y", "z"])
}

/// Built-in smooth profile on `[0, 1]`: a baseline plus two Gaussian bumps,
/// with values in roughly `[0.3, 0.62]`.
pub fn builtin_profile(x: f64) -> f64 {
    0.3 + 0.3 * (-((x - 0.3) / 0.12).powi(2)).exp() + 0.2 * (-((x - 0.72) / 0.1).powi(2)).exp()
}

/// Distribution of the inlier jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JitterShape {
    /// `+σ` at even indices and `-σ` at odd ones. Too oscillatory for a
    /// moderate spline to absorb, so the inlier residual level is stable
    /// across seeds.
    #[default]
    Alternating,
    /// `±σ` with a fair random sign.
    Sign,
    /// `N(0, σ²)`.
    Gaussian,
}

/// Parameters of [`gen_profile`].
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileNoise {
    /// Standard deviation `σ` of the inlier jitter.
    pub jitter: f64,
    pub jitter_shape: JitterShape,
    /// Outlier displacement is drawn uniformly from this range.
    pub displacement: (f64, f64),
    /// Displace every outlier upward (downward where that would leave `[0, 1]`)
    /// instead of choosing each direction at random.
    pub one_sided: bool,
    /// Smallest index distance between two outliers, and between an outlier
    /// and either end of the series.
    pub min_gap: usize,
    pub seed: u64,
}

impl Default for ProfileNoise {
    fn default() -> Self {
        Self {
            jitter: 0.01,
            jitter_shape: JitterShape::Alternating,
            displacement: (0.22, 0.25),
            one_sided: true,
            min_gap: 3,
            seed: 0,
        }
    }
}

/// `n_inliers + n_outliers` points on an equispaced grid of `[0, 1]`.
///
/// Inliers sit on `profile` with jitter of standard deviation `noise.jitter`.
/// Outliers are a seeded random subset whose indices differ pairwise, and from
/// either end, by at least `noise.min_gap`. Each is shifted by a displacement
/// drawn from `noise.displacement`, upward when `one_sided` and otherwise in a
/// random direction; the direction is flipped when needed to stay in `[0, 1]`.
pub fn gen_profile(
    n_inliers: usize,
    n_outliers: usize,
    profile: impl Fn(f64) -> f64,
    noise: &ProfileNoise,
) -> Result<Synthetic> {
    let m = n_inliers + n_outliers;
    if m < 2 {
        return Err(MewlsError::InvalidArgument(
            "profile needs at least 2 points".into(),
        ));
    }
    let (dmin, dmax) = noise.displacement;
    if !(noise.jitter >= 0.0 && dmin > 0.0 && dmax >= dmin) {
        return Err(MewlsError::InvalidArgument("invalid profile noise".into()));
    }
    // Gapped k-subset of the interior slots [g, m - 1 - g]: choose k of
    // (interior - (g - 1)(k - 1)), then spread.
    let gap = noise.min_gap.max(1);
    let interior = m.saturating_sub(2 * gap);
    let slack = (gap - 1) * n_outliers.saturating_sub(1);
    if n_outliers > 0 && (slack > interior || interior - slack < n_outliers) {
        return Err(MewlsError::InvalidArgument(format!(
            "cannot place {n_outliers} outliers {gap} apart among {m} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let gaussian = normal(noise.jitter * noise.jitter);
    let t: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
    let clean: Vec<Vec<f64>> = t.iter().map(|&x| vec![profile(x)]).collect();

    let planted: Vec<usize> = if n_outliers == 0 {
        Vec::new()
    } else {
        let mut base = index::sample(&mut rng, interior - slack, n_outliers).into_vec();
        base.sort_unstable();
        base.into_iter()
            .enumerate()
            .map(|(k, i)| gap + i + k * (gap - 1))
            .collect()
    };

    let mut points = Vec::with_capacity(m);
    let mut next_planted = planted.iter().peekable();
    for (i, c) in clean.iter().enumerate() {
        let base = c[0];
        if next_planted.next_if_eq(&&i).is_some() {
            let d = rng.random_range(dmin..=dmax);
            let up = noise.one_sided || rng.random_bool(0.5);
            let v = match (up, base + d <= 1.0, base - d >= 0.0) {
                (true, true, _) | (false, true, false) => base + d,
                _ => base - d,
            };
            points.push(vec![v]);
        } else {
            let e = match noise.jitter_shape {
                JitterShape::Alternating if i % 2 == 0 => noise.jitter,
                JitterShape::Alternating => -noise.jitter,
                JitterShape::Sign if rng.random_bool(0.5) => noise.jitter,
                JitterShape::Sign => -noise.jitter,
                JitterShape::Gaussian => gaussian.sample(&mut rng),
            };
            points.push(vec![base + e]);
        }
    }
    build(t, points, clean, planted, &["y"])
}
