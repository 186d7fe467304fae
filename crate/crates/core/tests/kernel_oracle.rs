mod common;

use gobo::kernel::{
    centroid_sum_matvec, centroid_sum_matvec_f64, centroid_sum_matvec_with, count_ops, max_relative_error,
    reference_matvec, Accumulation,
};
use gobo::quant::dequantize;
use gobo::ActivationVector;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;

fn rational(x: f32) -> BigRational {
    BigRational::from_float(x).unwrap()
}

fn instance() -> impl Strategy<Value = (gobo::QuantizedLayer, ActivationVector)> {
    (1usize..=64, 1usize..=96, 1u8..=6, 0.0f64..0.05, any::<u64>()).prop_map(|(r, c, bits, frac, seed)| {
        (common::random_layer(r, c, bits, frac, seed), common::random_activations(c, seed))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_dense_reference((layer, acts) in instance()) {
        let want = reference_matvec(&dequantize(&layer), &acts).unwrap();
        let got64 = centroid_sum_matvec_f64(&layer, &acts).unwrap();
        prop_assert!(max_relative_error(&got64, &want) <= 1e-12);
        let got32: Vec<f64> = centroid_sum_matvec(&layer, &acts).unwrap().into_iter().map(f64::from).collect();
        prop_assert!(max_relative_error(&got32, &want) <= 1e-5);
    }

    #[test]
    fn output_is_linear_in_activations((layer, x) in instance(), seed in any::<u64>(), alpha in -4.0f32..4.0, beta in -4.0f32..4.0) {
        let y = common::random_activations(layer.cols, seed);
        let z: Vec<f32> = x.as_slice().iter().zip(y.as_slice()).map(|(&a, &b)| alpha * a + beta * b).collect();
        let z = ActivationVector::new(z).unwrap();
        let ox = centroid_sum_matvec_f64(&layer, &x).unwrap();
        let oy = centroid_sum_matvec_f64(&layer, &y).unwrap();
        let oz = centroid_sum_matvec_f64(&layer, &z).unwrap();
        let deq = dequantize(&layer);
        for r in 0..layer.rows {
            // Scale of the row's terms; forming z in f32 rounds each element.
            let scale: f64 = deq.row(r).iter().zip(x.as_slice().iter().zip(y.as_slice()))
                .map(|(&w, (&a, &b))| (w as f64).abs() * ((alpha * a).abs() + (beta * b).abs()) as f64)
                .sum();
            let lhs = oz[r];
            let rhs = alpha as f64 * ox[r] + beta as f64 * oy[r];
            prop_assert!((lhs - rhs).abs() <= 1e-6 * scale + 1e-30, "row {r}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn zero_activations_give_exact_zero((layer, _) in instance()) {
        let zero = ActivationVector::zeros(layer.cols);
        for mode in [Accumulation::Double, Accumulation::StrictSingle] {
            let out = centroid_sum_matvec_with(&layer, &zero, mode).unwrap();
            prop_assert!(out.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn multiplies_per_row_ignore_width((layer, _) in instance()) {
        let ops = count_ops(&layer);
        for (r, row) in ops.rows.iter().enumerate() {
            let o = layer.outliers.row(r).len();
            prop_assert_eq!(row.macs, (1usize << layer.bits()) + o);
            prop_assert_eq!(row.accumulations, layer.cols - o);
        }
    }

    #[test]
    fn reassociation_is_exact_in_rationals(r in 1usize..=8, c in 1usize..=8, bits in 1u8..=3, frac in 0.0f64..0.2, seed in any::<u64>()) {
        let layer = common::random_layer(r, c, bits, frac, seed);
        let acts = common::random_activations(c, seed ^ 1);
        let a: Vec<BigRational> = acts.as_slice().iter().map(|&x| rational(x)).collect();
        let deq = dequantize(&layer);
        let mask = layer.outlier_mask();
        let got = centroid_sum_matvec_f64(&layer, &acts).unwrap();
        for row in 0..r {
            let dense = (0..c).fold(BigRational::zero(), |s, j| s + rational(deq.get(row, j)) * &a[j]);
            let mut bins = vec![BigRational::zero(); 1 << bits];
            let mut outliers = BigRational::zero();
            for j in 0..c {
                if mask[row * c + j] {
                    outliers += rational(deq.get(row, j)) * &a[j];
                } else {
                    bins[layer.indexes[row * c + j] as usize] += &a[j];
                }
            }
            let reassociated = layer.centroids.values().iter().zip(&bins)
                .fold(outliers, |s, (&cv, b)| s + rational(cv) * b);
            prop_assert_eq!(&reassociated, &dense);
            let exact = dense.to_f64().unwrap();
            prop_assert!((got[row] - exact).abs() <= 2.0 * f64::EPSILON * exact.abs(), "{} vs {exact}", got[row]);
        }
    }
}

#[test]
fn two_centroid_example() {
    let layer = gobo::QuantizedLayer {
        rows: 1,
        cols: 4,
        indexes: vec![0, 1, 1, 0],
        centroids: gobo::quant::CentroidTable::new(1, vec![10.0, 100.0]).unwrap(),
        outliers: gobo::quant::OutlierSet::empty(-4.0),
        fit: gobo::quant::GaussianFit { mu: 0.0, sigma: 1.0 },
        convergence: Default::default(),
    };
    let acts = ActivationVector::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    assert_eq!(centroid_sum_matvec(&layer, &acts).unwrap(), vec![550.0]);
    assert_eq!(reference_matvec(&dequantize(&layer), &acts).unwrap(), vec![550.0]);
}

#[test]
fn ninety_six_fold_fewer_multiplies() {
    let layer = common::random_layer(768, 768, 3, 0.0, 3);
    let ops = count_ops(&layer);
    assert!(ops.rows.iter().all(|r| r.macs == 8));
    assert_eq!(ops.dense_macs / ops.total.macs, 96);
    assert_eq!(ops.dense_macs % ops.total.macs, 0);
}

#[test]
fn strict_single_stays_close_on_a_full_layer() {
    let (m, _) = gobo::fixtures::standard_fixture(2);
    let layer = gobo::quantize(&m, &gobo::QuantConfig::new(gobo::Method::Gobo, 3)).unwrap();
    let acts = common::random_activations(768, 2);
    let deq = dequantize(&layer);
    let want = reference_matvec(&deq, &acts).unwrap();
    let strict: Vec<f64> = centroid_sum_matvec_with(&layer, &acts, Accumulation::StrictSingle).unwrap().into_iter().map(f64::from).collect();
    // Plain f32 accumulation: absolute error bounded by the row's term mass.
    for (r, (&s, &w)) in strict.iter().zip(&want).enumerate() {
        let mass: f64 = deq.row(r).iter().zip(acts.as_slice()).map(|(&a, &b)| (a as f64 * b as f64).abs()).sum();
        assert!((s - w).abs() <= 768.0 * f32::EPSILON as f64 * mass, "row {r}");
    }
}
