//! Outlier-aware dictionary quantization of a single weight matrix.
//!
//! A layer is split into a Gaussian ("G") group and a small outlier group by
//! thresholding each weight's log-density under the layer's Gaussian fit.
//! Outliers are kept exactly; G weights become `bits`-wide indexes into a
//! table of `2^bits` centroids chosen by one of three methods:
//!
//! * [`Method::Gobo`]: equal-population bins refined by nearest-centroid
//!   reassignment and mean updates, stopping as soon as total L1 error rises.
//! * [`Method::KMeans`]: same initialization, run until no weight moves.
//! * [`Method::Linear`]: equal-width intervals over the G range.
//!
//! One centroid table is produced per matrix.

mod cluster;
mod gaussian;
mod linear;

pub use cluster::{
    assignment_l1, init_bins, nearest, nearest_l1, reassign, refine, update_centroids, Bins,
    Refinement, StopRule,
};
pub use gaussian::{detect_outliers, fit_gaussian, log_pdf, GaussianFit};
pub use linear::linear_centroids;

use thiserror::Error;

use crate::matrix::WeightMatrix;
use cluster::NearestLookup;

/// Log-density cutoff (natural log) below which a weight is an outlier.
pub const DEFAULT_THRESHOLD: f64 = -4.0;
pub const MIN_BITS: u8 = 1;
pub const MAX_BITS: u8 = 6;
pub const GOBO_ITERATION_CAP: usize = 100;
pub const KMEANS_ITERATION_CAP: usize = 300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuantError {
    #[error("weight matrix is empty")]
    EmptyMatrix,
    #[error("standard deviation is zero")]
    DegenerateSigma,
    #[error("need at least {needed} G-group weights, got {got}")]
    TooFewWeights { needed: usize, got: usize },
    #[error("unsupported index width {0} (expected {MIN_BITS}..={MAX_BITS})")]
    UnsupportedBits(u8),
    #[error("invalid centroid table: {0}")]
    InvalidCentroids(String),
    #[error("invalid layer: {0}")]
    InvalidLayer(String),
}

pub(crate) fn check_bits(bits: u8) -> Result<(), QuantError> {
    if (MIN_BITS..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(QuantError::UnsupportedBits(bits))
    }
}

/// `2^bits` finite single-precision centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidTable {
    bits: u8,
    centroids: Vec<f32>,
}

impl CentroidTable {
    pub fn new(bits: u8, centroids: Vec<f32>) -> Result<Self, QuantError> {
        check_bits(bits)?;
        if centroids.len() != 1 << bits {
            return Err(QuantError::InvalidCentroids(format!(
                "{} centroids for {bits}-bit indexes",
                centroids.len()
            )));
        }
        if centroids.iter().any(|c| !c.is_finite()) {
            return Err(QuantError::InvalidCentroids("non-finite centroid".into()));
        }
        Ok(Self { bits, centroids })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn values(&self) -> &[f32] {
        &self.centroids
    }

    pub fn into_values(self) -> Vec<f32> {
        self.centroids
    }

    pub fn get(&self, index: u8) -> f32 {
        self.centroids[index as usize]
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.centroids.windows(2).all(|w| w[0] < w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outlier {
    pub row: usize,
    pub col: usize,
    pub value: f32,
}

/// Exact-valued weights excluded from quantization, sorted row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct OutlierSet {
    pub entries: Vec<Outlier>,
    pub threshold: f64,
}

impl OutlierSet {
    pub fn empty(threshold: f64) -> Self {
        Self { entries: Vec::new(), threshold }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Outliers in `row`, in column order.
    pub fn row(&self, row: usize) -> &[Outlier] {
        let start = self.entries.partition_point(|o| o.row < row);
        let end = self.entries.partition_point(|o| o.row <= row);
        &self.entries[start..end]
    }
}

/// Diagnostics from centroid selection. Not persisted by the container.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Convergence {
    pub iterations: usize,
    pub initial_l1: f64,
    /// Total L1 after each iteration.
    pub l1_history: Vec<f64>,
    /// Weights moved by the reassignment step of each iteration.
    pub reassignments: Vec<usize>,
    pub empty_cluster_events: usize,
    /// The iteration cap stopped the loop before its own criterion did.
    pub cap_hit: bool,
    /// L1 over the G group of the returned indexes and centroids.
    pub final_l1: f64,
}

impl Convergence {
    /// Fraction of all reassignments that happened within the first
    /// `fraction` of iterations.
    pub fn early_reassignment_share(&self, fraction: f64) -> f64 {
        let total: usize = self.reassignments.iter().sum();
        if total == 0 {
            return 1.0;
        }
        let cut = ((self.reassignments.len() as f64 * fraction).ceil() as usize).max(1);
        let early: usize = self.reassignments.iter().take(cut).sum();
        early as f64 / total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major bin index per weight; outlier positions hold a dummy 0.
    pub indexes: Vec<u8>,
    pub centroids: CentroidTable,
    pub outliers: OutlierSet,
    pub fit: GaussianFit,
    pub convergence: Convergence,
}

impl QuantizedLayer {
    pub fn bits(&self) -> u8 {
        self.centroids.bits()
    }

    /// Drops the selection diagnostics, leaving what a container stores.
    pub fn without_convergence(mut self) -> Self {
        self.convergence = Convergence::default();
        self
    }

    /// `true` at outlier positions.
    pub fn outlier_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.rows * self.cols];
        for o in &self.outliers.entries {
            mask[o.row * self.cols + o.col] = true;
        }
        mask
    }

    pub fn validate(&self) -> Result<(), QuantError> {
        let invalid = |msg: String| Err(QuantError::InvalidLayer(msg));
        if self.indexes.len() != self.rows * self.cols {
            return invalid(format!(
                "{} indexes for a {}x{} layer",
                self.indexes.len(),
                self.rows,
                self.cols
            ));
        }
        let k = self.centroids.len();
        if let Some(p) = self.indexes.iter().position(|&i| i as usize >= k) {
            return invalid(format!("index {} at position {p} exceeds table of {k}", self.indexes[p]));
        }
        let mut prev: Option<(usize, usize)> = None;
        for o in &self.outliers.entries {
            if o.row >= self.rows || o.col >= self.cols {
                return invalid(format!("outlier ({}, {}) outside the layer", o.row, o.col));
            }
            if prev.is_some_and(|p| p >= (o.row, o.col)) {
                return invalid("outliers not unique and row-major sorted".into());
            }
            if !o.value.is_finite() {
                return invalid(format!("non-finite outlier at ({}, {})", o.row, o.col));
            }
            if self.indexes[o.row * self.cols + o.col] != 0 {
                return invalid(format!("outlier ({}, {}) has a non-zero dummy index", o.row, o.col));
            }
            prev = Some((o.row, o.col));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gobo,
    KMeans,
    Linear,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gobo" => Ok(Self::Gobo),
            "kmeans" => Ok(Self::KMeans),
            "linear" => Ok(Self::Linear),
            other => Err(format!("unknown method {other:?} (expected gobo, kmeans or linear)")),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Gobo => "gobo",
            Self::KMeans => "kmeans",
            Self::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantConfig {
    pub bits: u8,
    pub threshold: f64,
    pub method: Method,
}

impl QuantConfig {
    pub fn new(method: Method, bits: u8) -> Self {
        Self { bits, threshold: DEFAULT_THRESHOLD, method }
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }
}

pub fn quantize(weights: &WeightMatrix, cfg: &QuantConfig) -> Result<QuantizedLayer, QuantError> {
    match cfg.method {
        Method::Gobo => quantize_gobo(weights, cfg.bits, cfg.threshold),
        Method::KMeans => quantize_kmeans(weights, cfg.bits, cfg.threshold),
        Method::Linear => quantize_linear(weights, cfg.bits, cfg.threshold),
    }
}

pub fn quantize_gobo(weights: &WeightMatrix, bits: u8, threshold: f64) -> Result<QuantizedLayer, QuantError> {
    quantize_iterative(weights, bits, threshold, StopRule::L1Increase, GOBO_ITERATION_CAP)
}

pub fn quantize_kmeans(weights: &WeightMatrix, bits: u8, threshold: f64) -> Result<QuantizedLayer, QuantError> {
    quantize_iterative(weights, bits, threshold, StopRule::NoReassignment, KMEANS_ITERATION_CAP)
}

pub fn quantize_linear(weights: &WeightMatrix, bits: u8, threshold: f64) -> Result<QuantizedLayer, QuantError> {
    let split = split_groups(weights, bits, threshold)?;
    let (lo, hi) = (split.g_sorted[0], *split.g_sorted.last().unwrap());
    if lo == hi {
        return Ok(split.degenerate(weights, bits));
    }
    let (centroids, edges) = linear::linear_centroids(lo, hi, bits);
    let table = CentroidTable::new(bits, centroids)?;
    let indexes: Vec<u8> = weights
        .as_slice()
        .iter()
        .zip(&split.g_mask)
        .map(|(&w, &g)| if g { edges.index_of(w) } else { 0 })
        .collect();
    let final_l1 = weights
        .as_slice()
        .iter()
        .zip(&split.g_mask)
        .zip(&indexes)
        .filter(|((_, &g), _)| g)
        .map(|((&w, _), &i)| (w as f64 - table.get(i) as f64).abs())
        .sum();
    Ok(QuantizedLayer {
        rows: weights.rows(),
        cols: weights.cols(),
        indexes,
        centroids: table,
        outliers: split.outliers,
        fit: split.fit,
        convergence: Convergence {
            initial_l1: final_l1,
            l1_history: vec![final_l1],
            final_l1,
            ..Convergence::default()
        },
    })
}

fn quantize_iterative(
    weights: &WeightMatrix,
    bits: u8,
    threshold: f64,
    rule: StopRule,
    cap: usize,
) -> Result<QuantizedLayer, QuantError> {
    let split = split_groups(weights, bits, threshold)?;
    if split.g_sorted[0] == *split.g_sorted.last().unwrap() {
        return Ok(split.degenerate(weights, bits));
    }
    let bins = init_bins(&split.g_sorted, bits)?;
    let run = refine(&split.g_sorted, bins, rule, cap);
    let table = CentroidTable::new(bits, run.centroids)?;
    let lookup = NearestLookup::new(table.values());
    let mut final_l1 = 0.0;
    let indexes = weights
        .as_slice()
        .iter()
        .zip(&split.g_mask)
        .map(|(&w, &g)| {
            if g {
                let k = lookup.get(w);
                final_l1 += (w as f64 - table.get(k) as f64).abs();
                k
            } else {
                0
            }
        })
        .collect();
    Ok(QuantizedLayer {
        rows: weights.rows(),
        cols: weights.cols(),
        indexes,
        centroids: table,
        outliers: split.outliers,
        fit: split.fit,
        convergence: Convergence {
            iterations: run.iterations,
            initial_l1: run.initial_l1,
            l1_history: run.l1_history,
            reassignments: run.reassignments,
            empty_cluster_events: run.empty_cluster_events,
            cap_hit: run.cap_hit,
            final_l1,
        },
    })
}

struct GroupSplit {
    fit: GaussianFit,
    g_mask: Vec<bool>,
    outliers: OutlierSet,
    g_sorted: Vec<f32>,
}

impl GroupSplit {
    /// Every G weight is identical: one value replicated across the table.
    fn degenerate(self, weights: &WeightMatrix, bits: u8) -> QuantizedLayer {
        let value = self.g_sorted[0];
        QuantizedLayer {
            rows: weights.rows(),
            cols: weights.cols(),
            indexes: vec![0; weights.len()],
            centroids: CentroidTable { bits, centroids: vec![value; 1 << bits] },
            outliers: self.outliers,
            fit: self.fit,
            convergence: Convergence::default(),
        }
    }
}

fn split_groups(weights: &WeightMatrix, bits: u8, threshold: f64) -> Result<GroupSplit, QuantError> {
    check_bits(bits)?;
    let fit = gaussian::fit_unchecked(weights.as_slice())?;
    let (g_mask, outliers) = if fit.sigma > 0.0 {
        detect_outliers(weights, &fit, threshold)?
    } else {
        (vec![true; weights.len()], OutlierSet::empty(threshold))
    };
    let mut g_sorted: Vec<f32> = weights
        .as_slice()
        .iter()
        .zip(&g_mask)
        .filter_map(|(&w, &g)| g.then_some(w))
        .collect();
    if g_sorted.is_empty() {
        return Err(QuantError::TooFewWeights { needed: 1 << bits, got: 0 });
    }
    g_sorted.sort_by(f32::total_cmp);
    let distinct_range = g_sorted[0] != g_sorted[g_sorted.len() - 1];
    if distinct_range && g_sorted.len() < 1 << bits {
        return Err(QuantError::TooFewWeights { needed: 1 << bits, got: g_sorted.len() });
    }
    Ok(GroupSplit { fit, g_mask, outliers, g_sorted })
}

/// Reconstructs the dense matrix: centroids at G positions, exact values at
/// outlier positions.
pub fn dequantize(layer: &QuantizedLayer) -> WeightMatrix {
    let mut data: Vec<f32> = layer.indexes.iter().map(|&i| layer.centroids.get(i)).collect();
    for o in &layer.outliers.entries {
        data[o.row * layer.cols + o.col] = o.value;
    }
    WeightMatrix::new(layer.rows, layer.cols, data).expect("centroids and outliers are finite")
}

/// Largest possible distance between a weight in `[g_min, g_max]` and its
/// nearest centroid, i.e. the widest half-extent of any centroid's cell.
pub fn reconstruction_bound(centroids: &[f32], g_min: f32, g_max: f32) -> f64 {
    let mut sorted: Vec<f64> = centroids.iter().map(|&c| c as f64).collect();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let n = sorted.len();
    let mut bound = 0.0f64;
    for (k, &c) in sorted.iter().enumerate() {
        let lo = if k == 0 { (g_min as f64).min(c) } else { 0.5 * (sorted[k - 1] + c) };
        let hi = if k + 1 == n { (g_max as f64).max(c) } else { 0.5 * (c + sorted[k + 1]) };
        bound = bound.max(c - lo).max(hi - c);
    }
    bound
}
