use super::bitpack::BitReader;
use super::{
    align_up, check_container_bits, ContainerError, ContainerGeometry, Dims, Header, Layout, Triplet, BLOCK_SIZE,
    HEADER_FIXED_LEN, MAGIC, VERSION,
};
use crate::quant::{CentroidTable, Convergence, GaussianFit, Outlier, OutlierSet, QuantizedLayer};

/// A validated container with per-SM access to its outlier records.
#[derive(Debug)]
pub struct ContainerView<'a> {
    header: Header,
    index_stream: &'a [u8],
    outlier_section: &'a [u8],
    /// Byte offset (within the outlier section) of each SM's first triplet,
    /// and that SM's outlier count.
    sm_records: Vec<(usize, usize)>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, section: &'static str) -> Result<&'a [u8], ContainerError> {
        if self.pos + n > self.bytes.len() {
            return Err(ContainerError::TruncatedStream {
                section,
                needed: self.pos + n,
                available: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ContainerError> {
        Ok(self.take(1, "header")?[0])
    }

    fn u16(&mut self) -> Result<u16, ContainerError> {
        Ok(u16::from_le_bytes(self.take(2, "header")?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ContainerError> {
        Ok(u32::from_le_bytes(self.take(4, "header")?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ContainerError> {
        Ok(u64::from_le_bytes(self.take(8, "header")?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ContainerError> {
        Ok(f64::from_le_bytes(self.take(8, "header")?.try_into().unwrap()))
    }
}

fn malformed<T>(msg: impl Into<String>) -> Result<T, ContainerError> {
    Err(ContainerError::Malformed(msg.into()))
}

fn parse_header(bytes: &[u8]) -> Result<Header, ContainerError> {
    if bytes.len() < 4 {
        return Err(ContainerError::TruncatedStream { section: "header", needed: 4, available: bytes.len() });
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ContainerError::BadMagic(magic));
    }
    if bytes.len() < HEADER_FIXED_LEN {
        return Err(ContainerError::TruncatedStream {
            section: "header",
            needed: HEADER_FIXED_LEN,
            available: bytes.len(),
        });
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u16()?;
    if version != VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }
    let layout_code = cur.u8()?;
    let Some(layout) = Layout::from_code(layout_code) else {
        return malformed(format!("unknown layout code {layout_code}"));
    };
    let bits = cur.u8()?;
    check_container_bits(bits)?;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let padded_rows = cur.u32()? as usize;
    let padded_cols = cur.u32()? as usize;
    let sm_side = cur.u16()? as usize;
    let block_size = cur.u16()? as usize;
    let alignment = cur.u32()? as usize;
    if block_size != BLOCK_SIZE {
        return malformed(format!("block size {block_size}"));
    }
    let geometry = ContainerGeometry::new(sm_side, alignment)?;
    if rows == 0 || cols == 0 {
        return malformed("zero dimension");
    }
    let dims = Dims::new(rows, cols, &geometry);
    if dims.padded_rows != padded_rows || dims.padded_cols != padded_cols {
        return malformed(format!("padded dims {padded_rows}x{padded_cols} inconsistent with {rows}x{cols}"));
    }
    let weights_offset = cur.u64()? as usize;
    let outliers_offset = cur.u64()? as usize;
    let mu = cur.f64()?;
    let sigma = cur.f64()?;
    let threshold = cur.f64()?;
    let count = cur.u32()? as usize;
    if count != 1 << bits {
        return malformed(format!("{count} centroids for {bits}-bit indexes"));
    }
    let centroids: Vec<f32> = cur
        .take(4 * count, "header")?
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let expected_weights = align_up(cur.pos, alignment);
    if weights_offset != expected_weights {
        return malformed(format!("weights offset {weights_offset}, expected {expected_weights}"));
    }
    let expected_outliers = weights_offset + dims.index_bytes(bits);
    if outliers_offset != expected_outliers {
        return malformed(format!("outliers offset {outliers_offset}, expected {expected_outliers}"));
    }
    if bytes.len() < outliers_offset {
        return Err(ContainerError::TruncatedStream {
            section: "quantized weights",
            needed: outliers_offset,
            available: bytes.len(),
        });
    }
    Ok(Header {
        version,
        layout,
        bits,
        dims,
        geometry,
        weights_offset,
        outliers_offset,
        mu,
        sigma,
        threshold,
        centroids,
    })
}

impl<'a> ContainerView<'a> {
    /// Parses the header and locates every SM's outlier record. Triplet
    /// contents are checked by [`triplets`](Self::triplets).
    pub fn parse(bytes: &'a [u8]) -> Result<Self, ContainerError> {
        let header = parse_header(bytes)?;
        let index_stream = &bytes[header.weights_offset..header.outliers_offset];
        let outlier_section = &bytes[header.outliers_offset..];
        let num_sms = header.dims.num_sms();
        let tb = header.geometry.triplet_bytes();
        let mut sm_records = Vec::with_capacity(num_sms);
        let end = match header.layout {
            Layout::Sequential => {
                let mut cur = Cursor { bytes: outlier_section, pos: 0 };
                for _ in 0..num_sms {
                    let count = cur.take(1, "outliers")?[0] as usize;
                    sm_records.push((cur.pos, count));
                    cur.take(count * tb, "outliers")?;
                }
                cur.pos
            }
            Layout::RandomAccess => {
                let mut cur = Cursor { bytes: outlier_section, pos: 0 };
                let c: Vec<usize> = cur
                    .take(4 * (num_sms + 1), "outlier counts")?
                    .chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
                    .collect();
                if c[0] != 0 {
                    return Err(ContainerError::CountMismatch { sm: 0 });
                }
                let base = cur.pos;
                for sm in 0..num_sms {
                    if c[sm + 1] < c[sm] {
                        return Err(ContainerError::CountMismatch { sm });
                    }
                    sm_records.push((base + c[sm] * tb, c[sm + 1] - c[sm]));
                }
                cur.take(c[num_sms] * tb, "outliers")?;
                cur.pos
            }
        };
        if end != outlier_section.len() {
            return malformed(format!("{} trailing bytes", outlier_section.len() - end));
        }
        Ok(Self { header, index_stream, outlier_section, sm_records })
    }

    pub fn header(&self) -> &Header {
        &self.header
    }

    pub(crate) fn index_stream(&self) -> &'a [u8] {
        self.index_stream
    }

    pub fn sm_counts(&self) -> Vec<usize> {
        self.sm_records.iter().map(|&(_, n)| n).collect()
    }

    /// Outlier triplets of SM `sm`, validated: in strictly increasing block
    /// order, within the SM, and inside the true (unpadded) region.
    pub fn triplets(&self, sm: usize) -> Result<Vec<Triplet>, ContainerError> {
        let g = &self.header.geometry;
        let tb = g.triplet_bytes();
        let (start, count) = self.sm_records[sm];
        let mut out = Vec::with_capacity(count);
        let mut prev: Option<(u16, u8)> = None;
        for i in 0..count {
            let t = Triplet::read(g, &self.outlier_section[start + i * tb..]);
            if t.block as usize >= g.blocks_per_sm() || t.offset as usize >= BLOCK_SIZE {
                return malformed(format!("triplet ({}, {}) outside submatrix {sm}", t.block, t.offset));
            }
            if prev.is_some_and(|p| p >= (t.block, t.offset)) {
                return malformed(format!("triplets of submatrix {sm} out of block order"));
            }
            let (r, c) = self.header.dims.position(g, sm, t.block as usize, t.offset as usize);
            if !self.header.dims.in_true_region(r, c) {
                return malformed(format!("outlier at padded position ({r}, {c})"));
            }
            if !t.value.is_finite() {
                return malformed(format!("non-finite outlier at ({r}, {c})"));
            }
            prev = Some((t.block, t.offset));
            out.push(t);
        }
        Ok(out)
    }
}

/// Exact inverse of [`encode`](super::encode) over the true region. Selection
/// diagnostics are not stored, so the result carries an empty
/// [`Convergence`].
pub fn decode(bytes: &[u8]) -> Result<QuantizedLayer, ContainerError> {
    let view = ContainerView::parse(bytes)?;
    let h = view.header();
    let (g, dims) = (&h.geometry, &h.dims);
    let mut indexes = vec![0u8; dims.rows * dims.cols];
    let mut reader = BitReader::new(view.index_stream(), h.bits);
    for sm in 0..dims.num_sms() {
        for b in 0..g.blocks_per_sm() {
            for w in 0..BLOCK_SIZE {
                let idx = reader.next_index().expect("index stream length checked against header");
                let (r, c) = dims.position(g, sm, b, w);
                if dims.in_true_region(r, c) {
                    indexes[r * dims.cols + c] = idx;
                }
            }
        }
    }
    let mut entries = Vec::new();
    for sm in 0..dims.num_sms() {
        for t in view.triplets(sm)? {
            let (row, col) = dims.position(g, sm, t.block as usize, t.offset as usize);
            indexes[row * dims.cols + col] = 0;
            entries.push(Outlier { row, col, value: t.value });
        }
    }
    entries.sort_by_key(|o| (o.row, o.col));
    Ok(QuantizedLayer {
        rows: dims.rows,
        cols: dims.cols,
        indexes,
        centroids: CentroidTable::new(h.bits, h.centroids.clone())?,
        outliers: OutlierSet { entries, threshold: h.threshold },
        fit: GaussianFit { mu: h.mu, sigma: h.sigma },
        convergence: Convergence::default(),
    })
}
