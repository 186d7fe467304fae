//! Dense single-precision weight matrices and the `.fwt` tensor file format.
//!
//! A `.fwt` file is the magic `FWT1`, then `rows` and `cols` as little-endian
//! `u32`, then `rows * cols` little-endian IEEE-754 `f32` values in row-major
//! order. Nothing follows the payload.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const FWT_MAGIC: [u8; 4] = *b"FWT1";

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("matrix data has {got} elements, expected {rows}x{cols} = {}", rows * cols)]
    ShapeMismatch { rows: usize, cols: usize, got: usize },
    #[error("non-finite weight {value} at ({row}, {col})")]
    NonFiniteWeight { row: usize, col: usize, value: f32 },
    #[error("bad magic: expected FWT1, found {0:?}")]
    BadMagic([u8; 4]),
    #[error("tensor file truncated: expected {expected} payload bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("tensor file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Row-major `f32` matrix. All elements are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl WeightMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::ShapeMismatch { rows, cols, got: data.len() });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFiniteWeight {
                row: pos / cols.max(1),
                col: pos % cols.max(1),
                value: data[pos],
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self, MatrixError> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn write_fwt<W: Write>(&self, mut out: W) -> Result<(), MatrixError> {
        out.write_all(&FWT_MAGIC)?;
        out.write_all(&(self.rows as u32).to_le_bytes())?;
        out.write_all(&(self.cols as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn to_fwt_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + self.data.len() * 4);
        self.write_fwt(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_fwt<R: Read>(mut input: R) -> Result<Self, MatrixError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_fwt_bytes(&bytes)
    }

    pub fn from_fwt_bytes(bytes: &[u8]) -> Result<Self, MatrixError> {
        if bytes.len() < 12 {
            return Err(MatrixError::Truncated { expected: 12, found: bytes.len() });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if magic != FWT_MAGIC {
            return Err(MatrixError::BadMagic(magic));
        }
        let rows = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let cols = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let payload = &bytes[12..];
        let expected = rows * cols * 4;
        if payload.len() < expected {
            return Err(MatrixError::Truncated { expected, found: payload.len() });
        }
        if payload.len() > expected {
            return Err(MatrixError::TrailingBytes(payload.len() - expected));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(rows, cols, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fwt_layout_is_bit_exact() {
        let m = WeightMatrix::new(1, 2, vec![1.0, -2.5]).unwrap();
        let bytes = m.to_fwt_bytes();
        assert_eq!(&bytes[0..4], b"FWT1");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[2, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[16..20], &(-2.5f32).to_le_bytes());
        assert_eq!(WeightMatrix::from_fwt_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn rejects_malformed_fwt() {
        let m = WeightMatrix::zeros(2, 2);
        let mut bytes = m.to_fwt_bytes();
        assert!(matches!(
            WeightMatrix::from_fwt_bytes(&bytes[..bytes.len() - 1]),
            Err(MatrixError::Truncated { .. })
        ));
        bytes.push(0);
        assert!(matches!(WeightMatrix::from_fwt_bytes(&bytes), Err(MatrixError::TrailingBytes(1))));
        bytes[0] = b'X';
        assert!(matches!(WeightMatrix::from_fwt_bytes(&bytes), Err(MatrixError::BadMagic(_))));
    }

    #[test]
    fn rejects_non_finite_and_bad_shape() {
        assert!(matches!(
            WeightMatrix::new(1, 2, vec![0.0, f32::NAN]),
            Err(MatrixError::NonFiniteWeight { row: 0, col: 1, .. })
        ));
        assert!(matches!(WeightMatrix::new(2, 2, vec![0.0]), Err(MatrixError::ShapeMismatch { .. })));
    }
}
