//! LSB-first fixed-width index packing: index 0 occupies the low bits of
//! byte 0, and an index may straddle a byte boundary.

pub(crate) struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    filled: u32,
    width: u32,
}

impl BitWriter {
    pub(crate) fn new(width: u8, capacity_indexes: usize) -> Self {
        Self {
            bytes: Vec::with_capacity((capacity_indexes * width as usize).div_ceil(8)),
            acc: 0,
            filled: 0,
            width: width as u32,
        }
    }

    pub(crate) fn push(&mut self, value: u8) {
        debug_assert!((value as u32) < (1 << self.width));
        self.acc |= (value as u64) << self.filled;
        self.filled += self.width;
        while self.filled >= 8 {
            self.bytes.push(self.acc as u8);
            self.acc >>= 8;
            self.filled -= 8;
        }
    }

    pub(crate) fn finish(mut self) -> Vec<u8> {
        if self.filled > 0 {
            self.bytes.push(self.acc as u8);
        }
        self.bytes
    }
}

/// Sequential reader over a packed index stream.
pub(crate) struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    acc: u64,
    filled: u32,
    width: u32,
    mask: u64,
}

impl<'a> BitReader<'a> {
    pub(crate) fn new(bytes: &'a [u8], width: u8) -> Self {
        Self { bytes, pos: 0, acc: 0, filled: 0, width: width as u32, mask: (1u64 << width) - 1 }
    }

    /// Next index, or `None` once fewer than `width` bits remain.
    pub(crate) fn next_index(&mut self) -> Option<u8> {
        while self.filled < self.width {
            let &b = self.bytes.get(self.pos)?;
            self.acc |= (b as u64) << self.filled;
            self.filled += 8;
            self.pos += 1;
        }
        let v = (self.acc & self.mask) as u8;
        self.acc >>= self.width;
        self.filled -= self.width;
        Some(v)
    }
}

/// Random access to the `i`-th index of a packed stream.
pub(crate) fn index_at(bytes: &[u8], width: u8, i: usize) -> u8 {
    let bit = i * width as usize;
    let byte = bit / 8;
    let shift = bit % 8;
    let lo = bytes[byte] as u16;
    let hi = bytes.get(byte + 1).copied().unwrap_or(0) as u16;
    (((lo | (hi << 8)) >> shift) & ((1u16 << width) - 1)) as u8
}
