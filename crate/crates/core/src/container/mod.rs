//! The `.gobo` container: a bit-exact serialization of a quantized layer.
//!
//! All multi-byte fields are little-endian.
//!
//! ```text
//! Header
//!   0   magic            "GOBO"
//!   4   version          u16 (1)
//!   6   layout           u8  (0 sequential, 1 random-access)
//!   7   bits             u8  index width
//!   8   rows, cols       u32 x2  true dimensions
//!   16  padded rows/cols u32 x2  rounded up to the submatrix side
//!   24  sm_side          u16  submatrix side (16 by default)
//!   26  block_size       u16  always 16
//!   28  alignment        u32  power of two
//!   32  weights_offset   u64  start of Quantized Weights
//!   40  outliers_offset  u64  start of Outliers
//!   48  mu, sigma        f64 x2  Gaussian fit
//!   64  threshold        f64  outlier log-density cutoff
//!   72  centroid_count   u32
//!   76  centroids        f32 x centroid_count
//!   ..  zero padding up to a multiple of `alignment`
//! Quantized Weights
//!   padded_rows * padded_cols indexes of `bits` each, packed LSB-first.
//!   Submatrices (SMs) in row-major order; within an SM, blocks of 16 in
//!   block order; within a block, weights by offset. Outlier and padding
//!   positions hold index 0.
//! Outliers (sequential layout)
//!   per SM: u8 count, then `count` triplets (B, W, V) in block order
//! Outliers (random-access layout)
//!   C: (num_sms + 1) x u32 cumulative counts, C[0] = 0
//!   O: C[num_sms] triplets in SM then block order
//! Triplet
//!   position: B in the low `block_bits` bits, W in the next 4 bits,
//!   rounded up to whole bytes (one byte for 16x16 SMs); then V as f32.
//! ```
//!
//! Block order inside a 16x16 SM follows the diagonal dataflow of the tile:
//! block `d` holds weight `(w, (w - d) mod 16)` at offset `w`, so block 0 is
//! the main diagonal. SMs wider than 16 are split into 16x16 tiles taken in
//! row-major order; SMs narrower than 16 use consecutive row-major runs of 16.

mod bitpack;
mod decode;
mod encode;
mod measure;
mod stream;

pub(crate) use bitpack::index_at;
pub use decode::{decode, ContainerView};
pub use encode::encode;
pub use measure::{measure_compression, CompressionReport};
pub use stream::{stream_decode, StreamDecoder, StreamedWeight};

use thiserror::Error;

use crate::quant::QuantError;

pub const MAGIC: [u8; 4] = *b"GOBO";
pub const VERSION: u16 = 1;
pub const BLOCK_SIZE: usize = 16;
pub const HEADER_FIXED_LEN: usize = 76;
pub const MAX_OUTLIERS_PER_SM: usize = 255;
pub const MIN_CONTAINER_BITS: u8 = 1;
pub const MAX_CONTAINER_BITS: u8 = 6;

#[derive(Debug, Error, PartialEq)]
pub enum ContainerError {
    #[error("unsupported index width {0}")]
    UnsupportedBits(u8),
    #[error("submatrix {sm} has {count} outliers (limit {MAX_OUTLIERS_PER_SM})")]
    TooManyOutliersInSM { sm: usize, count: usize },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error(transparent)]
    InvalidLayer(#[from] QuantError),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("stream truncated in {section}: need {needed} bytes, have {available}")]
    TruncatedStream { section: &'static str, needed: usize, available: usize },
    #[error("cumulative outlier counts inconsistent at submatrix {sm}")]
    CountMismatch { sm: usize },
    #[error("malformed container: {0}")]
    Malformed(String),
}

/// Outlier section layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Layout {
    /// Per-SM count followed by that SM's triplets.
    #[default]
    Sequential,
    /// Cumulative count array `C` plus flat triplet array `O`.
    RandomAccess,
}

impl Layout {
    fn code(self) -> u8 {
        match self {
            Self::Sequential => 0,
            Self::RandomAccess => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::Sequential),
            1 => Some(Self::RandomAccess),
            _ => None,
        }
    }
}

impl std::str::FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" => Ok(Self::Sequential),
            "random-access" => Ok(Self::RandomAccess),
            other => Err(format!("unknown layout {other:?} (expected sequential or random-access)")),
        }
    }
}

impl std::fmt::Display for Layout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Sequential => "sequential",
            Self::RandomAccess => "random-access",
        })
    }
}

/// Submatrix tiling and section alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContainerGeometry {
    sm_side: usize,
    alignment: usize,
}

impl Default for ContainerGeometry {
    fn default() -> Self {
        Self { sm_side: 16, alignment: 64 }
    }
}

impl ContainerGeometry {
    /// `sm_side` must be one of 4, 8, 16, 32, 64; `alignment` a power of two.
    pub fn new(sm_side: usize, alignment: usize) -> Result<Self, ContainerError> {
        if ![4, 8, 16, 32, 64].contains(&sm_side) {
            return Err(ContainerError::InvalidGeometry(format!("submatrix side {sm_side}")));
        }
        if !alignment.is_power_of_two() {
            return Err(ContainerError::InvalidGeometry(format!("alignment {alignment}")));
        }
        Ok(Self { sm_side, alignment })
    }

    /// Square submatrix holding `weights` weights (16, 64, 256, 1024 or 4096).
    pub fn with_sm_weights(weights: usize, alignment: usize) -> Result<Self, ContainerError> {
        let side = (weights as f64).sqrt().round() as usize;
        if side * side != weights {
            return Err(ContainerError::InvalidGeometry(format!("{weights} is not a square submatrix")));
        }
        Self::new(side, alignment)
    }

    pub fn sm_side(&self) -> usize {
        self.sm_side
    }

    pub fn sm_weights(&self) -> usize {
        self.sm_side * self.sm_side
    }

    pub fn alignment(&self) -> usize {
        self.alignment
    }

    pub fn blocks_per_sm(&self) -> usize {
        self.sm_weights() / BLOCK_SIZE
    }

    pub fn padded(&self, dim: usize) -> usize {
        dim.max(1).div_ceil(self.sm_side) * self.sm_side
    }

    /// Width of the B field of a triplet.
    pub fn block_bits(&self) -> u32 {
        (self.blocks_per_sm().trailing_zeros()).max(4)
    }

    /// Bytes used by a triplet's packed (B, W) position.
    pub fn position_bytes(&self) -> usize {
        (self.block_bits() as usize + 4).div_ceil(8)
    }

    pub fn triplet_bytes(&self) -> usize {
        self.position_bytes() + 4
    }

    /// SM-relative (row, col) of offset `w` in block `b`.
    pub fn block_to_local(&self, b: usize, w: usize) -> (usize, usize) {
        let side = self.sm_side;
        if side >= BLOCK_SIZE {
            let tiles_per_row = side / BLOCK_SIZE;
            let (tile, d) = (b / BLOCK_SIZE, b % BLOCK_SIZE);
            let (tr, tc) = (tile / tiles_per_row, tile % tiles_per_row);
            (tr * BLOCK_SIZE + w, tc * BLOCK_SIZE + (w + BLOCK_SIZE - d) % BLOCK_SIZE)
        } else {
            let p = b * BLOCK_SIZE + w;
            (p / side, p % side)
        }
    }

    /// Inverse of [`block_to_local`](Self::block_to_local).
    pub fn local_to_block(&self, r: usize, c: usize) -> (usize, usize) {
        let side = self.sm_side;
        if side >= BLOCK_SIZE {
            let tiles_per_row = side / BLOCK_SIZE;
            let tile = (r / BLOCK_SIZE) * tiles_per_row + c / BLOCK_SIZE;
            let (rr, cc) = (r % BLOCK_SIZE, c % BLOCK_SIZE);
            (tile * BLOCK_SIZE + (rr + BLOCK_SIZE - cc) % BLOCK_SIZE, rr)
        } else {
            let p = r * side + c;
            (p / BLOCK_SIZE, p % BLOCK_SIZE)
        }
    }
}

/// Derived sizes of a container for a given layer shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub rows: usize,
    pub cols: usize,
    pub padded_rows: usize,
    pub padded_cols: usize,
    pub sms_per_row: usize,
    pub sms_per_col: usize,
}

impl Dims {
    pub fn new(rows: usize, cols: usize, geometry: &ContainerGeometry) -> Self {
        let padded_rows = geometry.padded(rows);
        let padded_cols = geometry.padded(cols);
        Self {
            rows,
            cols,
            padded_rows,
            padded_cols,
            sms_per_row: padded_cols / geometry.sm_side(),
            sms_per_col: padded_rows / geometry.sm_side(),
        }
    }

    pub fn num_sms(&self) -> usize {
        self.sms_per_row * self.sms_per_col
    }

    pub fn padded_weights(&self) -> usize {
        self.padded_rows * self.padded_cols
    }

    pub fn index_bytes(&self, bits: u8) -> usize {
        (self.padded_weights() * bits as usize).div_ceil(8)
    }

    /// Matrix (row, col) of offset `w` in block `b` of SM `sm`.
    pub fn position(&self, geometry: &ContainerGeometry, sm: usize, b: usize, w: usize) -> (usize, usize) {
        let (lr, lc) = geometry.block_to_local(b, w);
        let side = geometry.sm_side();
        ((sm / self.sms_per_row) * side + lr, (sm % self.sms_per_row) * side + lc)
    }

    /// SM, block and offset of matrix position (row, col).
    pub fn locate(&self, geometry: &ContainerGeometry, row: usize, col: usize) -> (usize, usize, usize) {
        let side = geometry.sm_side();
        let sm = (row / side) * self.sms_per_row + col / side;
        let (b, w) = geometry.local_to_block(row % side, col % side);
        (sm, b, w)
    }

    pub fn in_true_region(&self, row: usize, col: usize) -> bool {
        row < self.rows && col < self.cols
    }
}

/// One outlier as stored: block within its SM, offset within the block, value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub block: u16,
    pub offset: u8,
    pub value: f32,
}

impl Triplet {
    pub(crate) fn write(&self, geometry: &ContainerGeometry, out: &mut Vec<u8>) {
        let pos = self.block as u32 | ((self.offset as u32) << geometry.block_bits());
        out.extend_from_slice(&pos.to_le_bytes()[..geometry.position_bytes()]);
        out.extend_from_slice(&self.value.to_le_bytes());
    }

    pub(crate) fn read(geometry: &ContainerGeometry, bytes: &[u8]) -> Self {
        let n = geometry.position_bytes();
        let mut raw = [0u8; 4];
        raw[..n].copy_from_slice(&bytes[..n]);
        let pos = u32::from_le_bytes(raw);
        let bb = geometry.block_bits();
        Self {
            block: (pos & ((1 << bb) - 1)) as u16,
            offset: ((pos >> bb) & 0xf) as u8,
            value: f32::from_le_bytes(bytes[n..n + 4].try_into().unwrap()),
        }
    }
}

/// Parsed container header.
#[derive(Debug, Clone, PartialEq)]
pub struct Header {
    pub version: u16,
    pub layout: Layout,
    pub bits: u8,
    pub dims: Dims,
    pub geometry: ContainerGeometry,
    pub weights_offset: usize,
    pub outliers_offset: usize,
    pub mu: f64,
    pub sigma: f64,
    pub threshold: f64,
    pub centroids: Vec<f32>,
}

pub(crate) fn align_up(n: usize, alignment: usize) -> usize {
    n.div_ceil(alignment) * alignment
}

pub(crate) fn check_container_bits(bits: u8) -> Result<(), ContainerError> {
    if (MIN_CONTAINER_BITS..=MAX_CONTAINER_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(ContainerError::UnsupportedBits(bits))
    }
}

/// Human-readable summary of a container: header fields and per-SM outlier
/// counts.
pub fn dump(bytes: &[u8]) -> Result<String, ContainerError> {
    use std::fmt::Write;
    let view = ContainerView::parse(bytes)?;
    let h = view.header();
    let mut s = String::new();
    let _ = writeln!(s, "magic=GOBO version={} layout={} bits={}", h.version, h.layout, h.bits);
    let _ = writeln!(
        s,
        "rows={} cols={} padded_rows={} padded_cols={} sm_side={} block_size={} alignment={}",
        h.dims.rows,
        h.dims.cols,
        h.dims.padded_rows,
        h.dims.padded_cols,
        h.geometry.sm_side(),
        BLOCK_SIZE,
        h.geometry.alignment()
    );
    let _ = writeln!(
        s,
        "weights_offset={} outliers_offset={} total_bytes={}",
        h.weights_offset,
        h.outliers_offset,
        bytes.len()
    );
    let _ = writeln!(s, "mu={} sigma={} threshold={}", h.mu, h.sigma, h.threshold);
    let _ = writeln!(s, "centroids={:?}", h.centroids);
    let counts = view.sm_counts();
    let _ = writeln!(s, "num_sms={} total_outliers={}", counts.len(), counts.iter().sum::<usize>());
    for (row, chunk) in counts.chunks(h.dims.sms_per_row).enumerate() {
        let line: Vec<String> = chunk.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "sm_row {row}: {}", line.join(" "));
    }
    Ok(s)
}
