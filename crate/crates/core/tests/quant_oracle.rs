mod common;

use gobo::fixtures;
use gobo::quant::{quantize_gobo, quantize_kmeans, DEFAULT_THRESHOLD};
use gobo::WeightMatrix;
use proptest::prelude::*;
use rand::Rng;

fn small_instance(seed: u64) -> (WeightMatrix, u8) {
    let mut rng = fixtures::rng(seed);
    let bits = rng.gen_range(1..=2u8);
    let n = rng.gen_range((1usize << bits)..=20);
    let values = fixtures::gaussian_values(n, 0.0, rng.gen_range(0.01f32..1.0), seed);
    (WeightMatrix::new(1, n, values).unwrap(), bits)
}

fn sorted_g(m: &WeightMatrix, mask: &[bool]) -> Vec<f64> {
    let mut g: Vec<f64> = m.as_slice().iter().zip(mask).filter(|(_, o)| !**o).map(|(&x, _)| x as f64).collect();
    g.sort_by(f64::total_cmp);
    g
}

#[test]
fn dynamic_program_matches_enumeration() {
    for seed in 0..60 {
        let (m, bits) = small_instance(seed);
        let mut v: Vec<f64> = m.as_slice().iter().map(|&x| x as f64).collect();
        v.sort_by(f64::total_cmp);
        let k = 1 << bits;
        let dp = common::contiguous_partition_optimum(&v, k);
        let bf = common::contiguous_partition_brute_force(&v, k);
        assert!((dp - bf).abs() <= 1e-12 * bf.max(1.0), "seed {seed}: {dp} vs {bf}");
    }
}

#[test]
fn evenly_spaced_sixteen_reach_the_optimum() {
    let m = WeightMatrix::from_fn(4, 4, |r, c| (r * 4 + c) as f32 / 10.0).unwrap();
    let layer = quantize_gobo(&m, 2, DEFAULT_THRESHOLD).unwrap();
    assert!(layer.outliers.is_empty());
    let g = sorted_g(&m, &layer.outlier_mask());
    let opt = common::contiguous_partition_optimum(&g, 4);
    assert!((opt - 1.6).abs() < 1e-6);
    assert!((layer.convergence.final_l1 - opt).abs() < 1e-6, "{} vs {opt}", layer.convergence.final_l1);
}

#[test]
fn two_separated_pairs() {
    let m = WeightMatrix::new(2, 2, vec![-1.0, -1.0, 1.0, 1.0]).unwrap();
    for layer in [quantize_gobo(&m, 1, DEFAULT_THRESHOLD).unwrap(), quantize_kmeans(&m, 1, DEFAULT_THRESHOLD).unwrap()] {
        assert_eq!(layer.centroids.values(), &[-1.0, 1.0]);
        assert_eq!(layer.convergence.final_l1, 0.0);
        assert_eq!(layer.convergence.iterations, 1);
        assert_eq!(layer.indexes, vec![0, 0, 1, 1]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn no_quantizer_beats_the_optimum(seed in any::<u64>()) {
        let (m, bits) = small_instance(seed);
        let opt_for = |mask: &[bool]| common::contiguous_partition_optimum(&sorted_g(&m, mask), 1 << bits);
        for layer in [quantize_gobo(&m, bits, DEFAULT_THRESHOLD).unwrap(), quantize_kmeans(&m, bits, DEFAULT_THRESHOLD).unwrap()] {
            let opt = opt_for(&layer.outlier_mask());
            prop_assert!(layer.convergence.final_l1 >= opt - 1e-9 * opt.max(1.0));
        }
    }
}
