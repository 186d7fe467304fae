use super::bitpack::BitWriter;
use super::{
    align_up, check_container_bits, ContainerError, ContainerGeometry, Dims, Layout, Triplet, BLOCK_SIZE,
    HEADER_FIXED_LEN, MAGIC, MAX_OUTLIERS_PER_SM, VERSION,
};
use crate::quant::QuantizedLayer;

/// Serializes `layer` into container bytes.
pub fn encode(layer: &QuantizedLayer, geometry: &ContainerGeometry, layout: Layout) -> Result<Vec<u8>, ContainerError> {
    let bits = layer.bits();
    check_container_bits(bits)?;
    layer.validate()?;
    if layer.rows == 0 || layer.cols == 0 {
        return Err(ContainerError::InvalidGeometry("layer has a zero dimension".into()));
    }
    if layer.rows > u32::MAX as usize || layer.cols > u32::MAX as usize {
        return Err(ContainerError::InvalidGeometry("dimension exceeds u32".into()));
    }
    let dims = Dims::new(layer.rows, layer.cols, geometry);
    let per_sm = outliers_by_sm(layer, geometry, &dims)?;

    let header_len = HEADER_FIXED_LEN + 4 * layer.centroids.len();
    let weights_offset = align_up(header_len, geometry.alignment());
    let outliers_offset = weights_offset + dims.index_bytes(bits);

    let mut out = Vec::with_capacity(outliers_offset + dims.num_sms());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(layout.code());
    out.push(bits);
    for v in [dims.rows, dims.cols, dims.padded_rows, dims.padded_cols] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(geometry.sm_side() as u16).to_le_bytes());
    out.extend_from_slice(&(BLOCK_SIZE as u16).to_le_bytes());
    out.extend_from_slice(&(geometry.alignment() as u32).to_le_bytes());
    out.extend_from_slice(&(weights_offset as u64).to_le_bytes());
    out.extend_from_slice(&(outliers_offset as u64).to_le_bytes());
    for v in [layer.fit.mu, layer.fit.sigma, layer.outliers.threshold] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(layer.centroids.len() as u32).to_le_bytes());
    for c in layer.centroids.values() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    debug_assert_eq!(out.len(), header_len);
    out.resize(weights_offset, 0);

    let mut writer = BitWriter::new(bits, dims.padded_weights());
    for sm in 0..dims.num_sms() {
        for b in 0..geometry.blocks_per_sm() {
            for w in 0..BLOCK_SIZE {
                let (r, c) = dims.position(geometry, sm, b, w);
                let idx = if dims.in_true_region(r, c) { layer.indexes[r * layer.cols + c] } else { 0 };
                writer.push(idx);
            }
        }
    }
    out.extend_from_slice(&writer.finish());
    debug_assert_eq!(out.len(), outliers_offset);

    match layout {
        Layout::Sequential => {
            for triplets in &per_sm {
                out.push(triplets.len() as u8);
                for t in triplets {
                    t.write(geometry, &mut out);
                }
            }
        }
        Layout::RandomAccess => {
            let mut cumulative = 0u32;
            out.extend_from_slice(&cumulative.to_le_bytes());
            for triplets in &per_sm {
                cumulative += triplets.len() as u32;
                out.extend_from_slice(&cumulative.to_le_bytes());
            }
            for t in per_sm.iter().flatten() {
                t.write(geometry, &mut out);
            }
        }
    }
    Ok(out)
}

/// Groups outliers by SM, each group in block order.
fn outliers_by_sm(
    layer: &QuantizedLayer,
    geometry: &ContainerGeometry,
    dims: &Dims,
) -> Result<Vec<Vec<Triplet>>, ContainerError> {
    let mut per_sm: Vec<Vec<Triplet>> = vec![Vec::new(); dims.num_sms()];
    for o in &layer.outliers.entries {
        let (sm, b, w) = dims.locate(geometry, o.row, o.col);
        per_sm[sm].push(Triplet { block: b as u16, offset: w as u8, value: o.value });
    }
    for (sm, triplets) in per_sm.iter_mut().enumerate() {
        if triplets.len() > MAX_OUTLIERS_PER_SM {
            return Err(ContainerError::TooManyOutliersInSM { sm, count: triplets.len() });
        }
        triplets.sort_by_key(|t| (t.block, t.offset));
    }
    Ok(per_sm)
}
