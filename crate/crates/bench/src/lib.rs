//! Fixtures shared by the benchmarks.

use mewls::nalgebra::DMatrix;
use mewls::synth::{self, NoiseSpec, ProfileNoise};
use mewls::{normalize, DesignMatrix, KnotVector};

/// Design matrix and normalized data for one benchmark problem.
pub struct Problem {
    pub a: DesignMatrix,
    pub y: DMatrix<f64>,
}

fn problem(data: &synth::Synthetic, degree: usize, n_basis: usize) -> Problem {
    let ds = normalize(&data.series).expect("synthetic data normalizes");
    let a = KnotVector::uniform(degree, n_basis)
        .unwrap()
        .design_matrix(&ds.t)
        .unwrap();
    Problem { a, y: ds.y }
}

/// 32 inliers and 12 outliers on the built-in profile; quadratic, 20 basis functions.
pub fn profile() -> Problem {
    let data =
        synth::gen_profile(32, 12, synth::builtin_profile, &ProfileNoise::default()).unwrap();
    problem(&data, 2, 20)
}

/// 200-point spiral with every other point perturbed; cubic, 13 basis functions.
pub fn spiral() -> Problem {
    let noise = NoiseSpec {
        variance: 30.0,
        bounds: vec![(-60.0, 60.0); 2],
        seed: 0,
    };
    problem(&synth::gen_spiral(200, 1.0, 4.0, &noise).unwrap(), 3, 13)
}

/// 400-point helix with 100 corrupted points; cubic, 30 basis functions.
pub fn helix() -> Problem {
    let noise = NoiseSpec {
        variance: 20.0,
        bounds: vec![(-4.0, 4.0); 3],
        seed: 0,
    };
    problem(
        &synth::gen_helix(400, 2.0, 1.0, 100, &noise).unwrap(),
        3,
        30,
    )
}
