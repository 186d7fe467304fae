//! Equal-width interval quantization of the G range.

/// Interval edges for [`linear_centroids`].
#[derive(Debug, Clone, Copy)]
pub struct LinearEdges {
    lo: f64,
    width: f64,
    bins: usize,
}

impl LinearEdges {
    /// An interior boundary belongs to the higher interval; `hi` itself
    /// belongs to the last one.
    pub fn index_of(&self, w: f32) -> u8 {
        let t = ((w as f64 - self.lo) / self.width).floor();
        (t.max(0.0) as usize).min(self.bins - 1) as u8
    }
}

/// Midpoints of `2^bits` equal-width intervals spanning `[lo, hi]`.
pub fn linear_centroids(lo: f32, hi: f32, bits: u8) -> (Vec<f32>, LinearEdges) {
    let bins = 1usize << bits;
    let lo = lo as f64;
    let width = (hi as f64 - lo) / bins as f64;
    let centroids = (0..bins).map(|k| (lo + (k as f64 + 0.5) * width) as f32).collect();
    (centroids, LinearEdges { lo, width, bins })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoints_and_membership() {
        let (c, edges) = linear_centroids(0.0, 8.0, 2);
        assert_eq!(c, vec![1.0, 3.0, 5.0, 7.0]);
        assert_eq!(edges.index_of(3.0), 1);
        assert_eq!(edges.index_of(2.0), 1);
        assert_eq!(edges.index_of(1.999), 0);
        assert_eq!(edges.index_of(8.0), 3);
        assert_eq!(edges.index_of(0.0), 0);
    }
}
