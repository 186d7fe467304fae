#![allow(dead_code)]

use gobo::quant::{CentroidTable, Convergence, GaussianFit, Outlier, OutlierSet};
use gobo::QuantizedLayer;
use rand::seq::index::sample;
use rand::Rng;

/// A structurally valid layer with random indexes, centroids and outliers.
pub fn random_layer(rows: usize, cols: usize, bits: u8, outlier_fraction: f64, seed: u64) -> QuantizedLayer {
    let mut rng = gobo::fixtures::rng(seed);
    let n = rows * cols;
    let k = 1usize << bits;
    let mut indexes: Vec<u8> = (0..n).map(|_| rng.gen_range(0..k) as u8).collect();
    let mut centroids: Vec<f32> = (0..k).map(|_| rng.gen_range(-0.2f32..0.2)).collect();
    centroids.sort_by(f32::total_cmp);
    let count = ((n as f64 * outlier_fraction) as usize).min(n);
    let mut positions = sample(&mut rng, n, count).into_vec();
    positions.sort_unstable();
    let entries = positions
        .into_iter()
        .map(|p| {
            indexes[p] = 0;
            let mag = rng.gen_range(0.3f32..2.0);
            Outlier { row: p / cols, col: p % cols, value: if rng.gen_bool(0.5) { mag } else { -mag } }
        })
        .collect();
    QuantizedLayer {
        rows,
        cols,
        indexes,
        centroids: CentroidTable::new(bits, centroids).unwrap(),
        outliers: OutlierSet { entries, threshold: -4.0 },
        fit: GaussianFit { mu: rng.gen_range(-0.01..0.01), sigma: rng.gen_range(0.01..0.1) },
        convergence: Convergence::default(),
    }
}

pub fn random_activations(n: usize, seed: u64) -> gobo::ActivationVector {
    gobo::ActivationVector::new(gobo::fixtures::uniform_activations(n, seed)).unwrap()
}

/// Minimum total L1 over every split of `sorted` into at most `k` contiguous
/// runs, each run represented by its own best (median) center.
pub fn contiguous_partition_optimum(sorted: &[f64], k: usize) -> f64 {
    contiguous_partition_optimum_by(sorted, k, |run| run[(run.len() - 1) / 2])
}

pub fn contiguous_partition_optimum_by(sorted: &[f64], k: usize, center: impl Fn(&[f64]) -> f64) -> f64 {
    let n = sorted.len();
    let cost = |a: usize, b: usize| {
        let run = &sorted[a..b];
        let m = center(run);
        run.iter().map(|x| (x - m).abs()).sum::<f64>()
    };
    // best[j][i]: first i values split into j runs.
    let mut best = vec![vec![f64::INFINITY; n + 1]; k + 1];
    best[0][0] = 0.0;
    for j in 1..=k {
        for i in 1..=n {
            for s in (j - 1)..i {
                let c = best[j - 1][s] + cost(s, i);
                if c < best[j][i] {
                    best[j][i] = c;
                }
            }
        }
    }
    (1..=k).map(|j| best[j][n]).fold(f64::INFINITY, f64::min)
}

/// Optimum by enumerating every set of cut points, for checking the
/// dynamic program above.
pub fn contiguous_partition_brute_force(sorted: &[f64], k: usize) -> f64 {
    fn go(sorted: &[f64], start: usize, runs_left: usize, acc: f64, best: &mut f64) {
        let n = sorted.len();
        if start == n {
            *best = best.min(acc);
            return;
        }
        if runs_left == 0 {
            return;
        }
        for end in start + 1..=n {
            let run = &sorted[start..end];
            let m = run[(run.len() - 1) / 2];
            let c: f64 = run.iter().map(|x| (x - m).abs()).sum();
            go(sorted, end, runs_left - 1, acc + c, best);
        }
    }
    let mut best = f64::INFINITY;
    go(sorted, 0, k, 0.0, &mut best);
    best
}
