use super::{encode, ContainerError, ContainerGeometry, Layout};
use crate::quant::QuantizedLayer;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionReport {
    pub total_bits: u64,
    pub header_bytes: usize,
    pub index_bytes: usize,
    pub outlier_bytes: usize,
    /// Encoded bits per true-region weight, header included.
    pub bits_per_weight: f64,
    pub ratio_vs_fp32: f64,
    /// `32 / bits`: the ratio with no header, padding or outliers.
    pub no_outlier_bound: f64,
}

/// Sizes the sequential-layout encoding of `layer`.
pub fn measure_compression(
    layer: &QuantizedLayer,
    geometry: &ContainerGeometry,
) -> Result<CompressionReport, ContainerError> {
    let bytes = encode(layer, geometry, Layout::Sequential)?;
    let view = super::ContainerView::parse(&bytes)?;
    let h = view.header();
    let weights = (layer.rows * layer.cols) as f64;
    let total_bits = bytes.len() as u64 * 8;
    Ok(CompressionReport {
        total_bits,
        header_bytes: h.weights_offset,
        index_bytes: h.outliers_offset - h.weights_offset,
        outlier_bytes: bytes.len() - h.outliers_offset,
        bits_per_weight: total_bits as f64 / weights,
        ratio_vs_fp32: 32.0 * weights / total_bits as f64,
        no_outlier_bound: 32.0 / layer.bits() as f64,
    })
}
