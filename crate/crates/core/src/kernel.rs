//! Matrix-vector products computed directly on bin indexes.
//!
//! For each output row, phase 1 adds every activation into the accumulator
//! selected by its weight's index; phase 2 multiplies each of the `2^bits`
//! accumulators by its centroid and sums. Outlier positions bypass phase 1:
//! their exact value times the activation goes into a separate partial that
//! is added last. A row therefore costs `2^bits + outliers(row)` multiplies
//! regardless of its width.

use thiserror::Error;

use crate::compensated::CompensatedSum;
use crate::matrix::WeightMatrix;
use crate::quant::{Outlier, QuantizedLayer};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("activation length {got} does not match {expected} columns")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite activation {value} at {index}")]
    NonFiniteActivation { index: usize, value: f32 },
}

/// Finite input activations.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationVector(Vec<f32>);

impl ActivationVector {
    pub fn new(values: Vec<f32>) -> Result<Self, KernelError> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(KernelError::NonFiniteActivation { index, value: values[index] });
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Accumulator precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Accumulation {
    /// Compensated double-precision accumulators and products.
    #[default]
    Double,
    /// Every add and multiply rounded to `f32`, as plain FP32 hardware would.
    StrictSingle,
}

/// Phase-1 state for one output row: one partial sum per bin index.
#[derive(Debug, Clone)]
pub struct CentroidSumAccumulators {
    sums: Vec<CompensatedSum>,
    outlier_partial: CompensatedSum,
}

impl CentroidSumAccumulators {
    /// Accumulated activation per bin index.
    pub fn sums(&self) -> Vec<f64> {
        self.sums.iter().map(CompensatedSum::value).collect()
    }

    pub fn outlier_partial(&self) -> f64 {
        self.outlier_partial.value()
    }

    /// Phase 2: one multiply per centroid, then the outlier partial.
    pub fn finish(&self, centroids: &[f32]) -> f64 {
        let mut out = CompensatedSum::default();
        for (c, s) in centroids.iter().zip(&self.sums) {
            out.add_scaled(*c as f64, s);
        }
        out.add_scaled(1.0, &self.outlier_partial);
        out.value()
    }
}

fn check(layer: &QuantizedLayer, acts: &ActivationVector) -> Result<(), KernelError> {
    if acts.len() != layer.cols {
        return Err(KernelError::DimensionMismatch { expected: layer.cols, got: acts.len() });
    }
    Ok(())
}

/// Phase 1 for `row`.
pub fn accumulate_row(layer: &QuantizedLayer, row: usize, acts: &ActivationVector) -> CentroidSumAccumulators {
    let mut acc = CentroidSumAccumulators {
        sums: vec![CompensatedSum::default(); layer.centroids.len()],
        outlier_partial: CompensatedSum::default(),
    };
    let a = acts.as_slice();
    let indexes = &layer.indexes[row * layer.cols..(row + 1) * layer.cols];
    let mut outliers = layer.outliers.row(row).iter().peekable();
    for (col, (&idx, &x)) in indexes.iter().zip(a).enumerate() {
        if let Some(o) = outliers.next_if(|o| o.col == col) {
            acc.outlier_partial.add_product(o.value as f64, x as f64);
        } else {
            acc.sums[idx as usize].add(x as f64);
        }
    }
    acc
}

/// Output rounded to `f32`, using [`Accumulation::Double`].
pub fn centroid_sum_matvec(layer: &QuantizedLayer, acts: &ActivationVector) -> Result<Vec<f32>, KernelError> {
    centroid_sum_matvec_with(layer, acts, Accumulation::Double)
}

pub fn centroid_sum_matvec_with(
    layer: &QuantizedLayer,
    acts: &ActivationVector,
    mode: Accumulation,
) -> Result<Vec<f32>, KernelError> {
    match mode {
        Accumulation::Double => Ok(centroid_sum_matvec_f64(layer, acts)?.into_iter().map(|v| v as f32).collect()),
        Accumulation::StrictSingle => {
            check(layer, acts)?;
            Ok((0..layer.rows).map(|r| strict_single_row(layer, r, acts)).collect())
        }
    }
}

/// Double-accumulation result before the final rounding.
pub fn centroid_sum_matvec_f64(layer: &QuantizedLayer, acts: &ActivationVector) -> Result<Vec<f64>, KernelError> {
    check(layer, acts)?;
    let centroids = layer.centroids.values();
    Ok((0..layer.rows).map(|r| accumulate_row(layer, r, acts).finish(centroids)).collect())
}

fn strict_single_row(layer: &QuantizedLayer, row: usize, acts: &ActivationVector) -> f32 {
    let mut sums = vec![0.0f32; layer.centroids.len()];
    let mut outlier_partial = 0.0f32;
    let indexes = &layer.indexes[row * layer.cols..(row + 1) * layer.cols];
    let mut outliers = layer.outliers.row(row).iter().peekable();
    for (col, (&idx, &x)) in indexes.iter().zip(acts.as_slice()).enumerate() {
        if let Some(o) = outliers.next_if(|o: &&Outlier| o.col == col) {
            outlier_partial += o.value * x;
        } else {
            sums[idx as usize] += x;
        }
    }
    let mut out = 0.0f32;
    for (c, s) in layer.centroids.values().iter().zip(&sums) {
        out += c * s;
    }
    out + outlier_partial
}

/// Batched activations, one matvec per word.
pub fn centroid_sum_matmul(layer: &QuantizedLayer, words: &[ActivationVector]) -> Result<Vec<Vec<f32>>, KernelError> {
    words.iter().map(|a| centroid_sum_matvec(layer, a)).collect()
}

/// Dense dot products with exact `f32 x f32` products and compensated
/// double accumulation.
pub fn reference_matvec(weights: &WeightMatrix, acts: &ActivationVector) -> Result<Vec<f64>, KernelError> {
    if acts.len() != weights.cols() {
        return Err(KernelError::DimensionMismatch { expected: weights.cols(), got: acts.len() });
    }
    Ok((0..weights.rows())
        .map(|r| {
            let mut s = CompensatedSum::default();
            for (&w, &a) in weights.row(r).iter().zip(acts.as_slice()) {
                s.add(w as f64 * a as f64);
            }
            s.value()
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RowOps {
    pub accumulations: usize,
    pub lookups: usize,
    pub macs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpCounts {
    pub rows: Vec<RowOps>,
    pub total: RowOps,
    /// MACs a dense product of the same shape would perform.
    pub dense_macs: usize,
}

pub fn count_ops(layer: &QuantizedLayer) -> OpCounts {
    let k = layer.centroids.len();
    let rows: Vec<RowOps> = (0..layer.rows)
        .map(|r| {
            let o = layer.outliers.row(r).len();
            RowOps { accumulations: layer.cols - o, lookups: k + o, macs: k + o }
        })
        .collect();
    let total = rows.iter().fold(RowOps::default(), |t, r| RowOps {
        accumulations: t.accumulations + r.accumulations,
        lookups: t.lookups + r.lookups,
        macs: t.macs + r.macs,
    });
    OpCounts { rows, total, dense_macs: layer.rows * layer.cols }
}

/// `|got - want| / |want|`, or the absolute error when `want` is zero.
pub fn relative_error(got: f64, want: f64) -> f64 {
    let err = (got - want).abs();
    if want == 0.0 {
        err
    } else {
        err / want.abs()
    }
}

/// Largest [`relative_error`] over paired elements.
pub fn max_relative_error(got: &[f64], want: &[f64]) -> f64 {
    got.iter().zip(want).map(|(&g, &w)| relative_error(g, w)).fold(0.0, f64::max)
}
