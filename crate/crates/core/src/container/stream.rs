//! Streaming decompression with two sequential cursors.
//!
//! One cursor walks the packed index stream and maps each index through the
//! centroid lookup table. The other walks the outlier records; whenever its
//! next triplet names the current (block, offset), the outlier value
//! replaces the looked-up centroid and the cursor advances. At most one
//! outlier is consumed per emitted weight.

use super::bitpack::BitReader;
use super::{ContainerError, ContainerGeometry, ContainerView, Dims, Triplet, BLOCK_SIZE};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamedWeight {
    pub row: usize,
    pub col: usize,
    pub value: f32,
}

/// Iterator over reconstructed weights in container (block) order. Padding
/// positions are consumed but not emitted.
pub struct StreamDecoder<'a> {
    view: ContainerView<'a>,
    lut: Vec<f32>,
    dims: Dims,
    geometry: ContainerGeometry,
    indexes: BitReader<'a>,
    sm: usize,
    block: usize,
    offset: usize,
    pending: std::vec::IntoIter<Triplet>,
    next_outlier: Option<Triplet>,
    done: bool,
}

impl<'a> StreamDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self, ContainerError> {
        let view = ContainerView::parse(bytes)?;
        let indexes = BitReader::new(view.index_stream(), view.header().bits);
        let h = view.header();
        let (lut, dims, geometry) = (h.centroids.clone(), h.dims, h.geometry);
        let mut dec = Self {
            view,
            lut,
            dims,
            geometry,
            indexes,
            sm: 0,
            block: 0,
            offset: 0,
            pending: Vec::new().into_iter(),
            next_outlier: None,
            done: false,
        };
        dec.load_sm()?;
        Ok(dec)
    }

    pub fn view(&self) -> &ContainerView<'a> {
        &self.view
    }

    fn load_sm(&mut self) -> Result<(), ContainerError> {
        if self.sm < self.dims.num_sms() {
            self.pending = self.view.triplets(self.sm)?.into_iter();
            self.next_outlier = self.pending.next();
        }
        Ok(())
    }

    fn step(&mut self) -> Result<Option<StreamedWeight>, ContainerError> {
        let (dims, geometry) = (self.dims, self.geometry);
        loop {
            if self.sm >= dims.num_sms() {
                return Ok(None);
            }
            let idx = self.indexes.next_index().ok_or(ContainerError::TruncatedStream {
                section: "quantized weights",
                needed: 0,
                available: 0,
            })?;
            let mut value = self.lut[idx as usize];
            if let Some(t) = self.next_outlier {
                if t.block as usize == self.block && t.offset as usize == self.offset {
                    value = t.value;
                    self.next_outlier = self.pending.next();
                }
            }
            let (row, col) = dims.position(&geometry, self.sm, self.block, self.offset);

            self.offset += 1;
            if self.offset == BLOCK_SIZE {
                self.offset = 0;
                self.block += 1;
                if self.block == geometry.blocks_per_sm() {
                    self.block = 0;
                    self.sm += 1;
                    self.load_sm()?;
                }
            }
            if dims.in_true_region(row, col) {
                return Ok(Some(StreamedWeight { row, col, value }));
            }
        }
    }
}

impl Iterator for StreamDecoder<'_> {
    type Item = Result<StreamedWeight, ContainerError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.step() {
            Ok(Some(w)) => Some(Ok(w)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Decodes `bytes`, calling `emit` once per true-region weight in block order.
pub fn stream_decode(bytes: &[u8], mut emit: impl FnMut(StreamedWeight)) -> Result<(), ContainerError> {
    for w in StreamDecoder::new(bytes)? {
        emit(w?);
    }
    Ok(())
}
