//! Seed-fixed synthetic weight matrices.
//!
//! The standard fixture is a 768x768 layer drawn from N(0, 0.05^2), truncated
//! at three standard deviations so that no natural sample crosses the -4
//! log-density threshold, with a planted set of large-magnitude outliers.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::matrix::WeightMatrix;

pub const SEED_ENV: &str = "GOBO_SEED";
pub const DEFAULT_SEED: u64 = 0x60b0;
pub const STANDARD_DIM: usize = 768;
pub const STANDARD_SIGMA: f32 = 0.05;
/// Planted outliers in the standard fixture: 0.1% of 768x768, rounded.
pub const STANDARD_OUTLIERS: usize = 590;

/// `GOBO_SEED` if set and parseable, else `default`.
pub fn seed_from_env(default: u64) -> u64 {
    std::env::var(SEED_ENV).ok().and_then(|s| s.trim().parse().ok()).unwrap_or(default)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_values(n: usize, mu: f32, sigma: f32, seed: u64) -> Vec<f32> {
    let normal = Normal::new(mu as f64, sigma as f64).expect("sigma must be finite and >= 0");
    let mut rng = rng(seed);
    (0..n).map(|_| normal.sample(&mut rng) as f32).collect()
}

pub fn gaussian_matrix(rows: usize, cols: usize, mu: f32, sigma: f32, seed: u64) -> WeightMatrix {
    WeightMatrix::new(rows, cols, gaussian_values(rows * cols, mu, sigma, seed)).unwrap()
}

/// Zero-mean Gaussian samples redrawn until `|z| <= max_z`.
pub fn truncated_gaussian_matrix(rows: usize, cols: usize, sigma: f32, max_z: f64, seed: u64) -> WeightMatrix {
    let normal = Normal::new(0.0f64, 1.0).unwrap();
    let mut rng = rng(seed);
    let data = (0..rows * cols)
        .map(|_| loop {
            let z = normal.sample(&mut rng);
            if z.abs() <= max_z {
                break (z * sigma as f64) as f32;
            }
        })
        .collect();
    WeightMatrix::new(rows, cols, data).unwrap()
}

/// Overwrites `count` distinct positions with values of random sign and
/// magnitude in `[min_mag, max_mag)`. Returns the planted positions, sorted.
pub fn plant_outliers(
    m: &WeightMatrix,
    count: usize,
    min_mag: f32,
    max_mag: f32,
    seed: u64,
) -> (WeightMatrix, Vec<(usize, usize)>) {
    let mut rng = rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let cols = m.cols();
    let mut data = m.as_slice().to_vec();
    let mut positions: Vec<usize> = sample(&mut rng, data.len(), count).into_vec();
    positions.sort_unstable();
    for &p in &positions {
        let mag = if max_mag > min_mag { rng.gen_range(min_mag..max_mag) } else { min_mag };
        data[p] = if rng.gen_bool(0.5) { mag } else { -mag };
    }
    let coords = positions.iter().map(|&p| (p / cols, p % cols)).collect();
    (WeightMatrix::new(m.rows(), cols, data).unwrap(), coords)
}

/// The 768x768 N(0, 0.05^2) layer with 0.1% planted outliers.
pub fn standard_fixture(seed: u64) -> (WeightMatrix, Vec<(usize, usize)>) {
    let base = truncated_gaussian_matrix(STANDARD_DIM, STANDARD_DIM, STANDARD_SIGMA, 3.0, seed);
    plant_outliers(&base, STANDARD_OUTLIERS, 0.3, 0.6, seed)
}

pub fn uniform_activations(n: usize, seed: u64) -> Vec<f32> {
    let mut rng = rng(seed ^ 0xac7);
    (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect()
}
