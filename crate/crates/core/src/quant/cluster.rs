//! Centroid selection over the sorted G-group weights.
//!
//! Both the L1-terminated refinement and the K-Means baseline share the
//! equal-population initialization and the two alternating steps below; they
//! differ only in when they stop.

use super::{CentroidTable, QuantError};

/// Contiguous equal-population binning of a sorted weight list.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    pub centroids: CentroidTable,
    /// Bin of each input weight, aligned with the sorted input.
    pub assignment: Vec<u8>,
}

/// Places sorted weights into `2^bits` contiguous bins of equal population and
/// sets each centroid to its bin mean. When the count does not divide evenly
/// the lowest bins take one extra weight each.
///
/// Panics if `sorted` is not ascending.
pub fn init_bins(sorted: &[f32], bits: u8) -> Result<Bins, QuantError> {
    super::check_bits(bits)?;
    assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "init_bins expects ascending weights");
    let k = 1usize << bits;
    if sorted.len() < k {
        return Err(QuantError::TooFewWeights { needed: k, got: sorted.len() });
    }
    let base = sorted.len() / k;
    let extra = sorted.len() % k;
    let mut centroids = Vec::with_capacity(k);
    let mut assignment = Vec::with_capacity(sorted.len());
    let mut start = 0;
    for bin in 0..k {
        let size = base + usize::from(bin < extra);
        let members = &sorted[start..start + size];
        let sum: f64 = members.iter().map(|&v| v as f64).sum();
        centroids.push((sum / size as f64) as f32);
        assignment.extend(std::iter::repeat_n(bin as u8, size));
        start += size;
    }
    Ok(Bins { centroids: CentroidTable::new(bits, centroids)?, assignment })
}

/// Index of the nearest centroid by absolute distance, lowest index on ties.
pub fn nearest(w: f32, centroids: &[f32]) -> u8 {
    let w = w as f64;
    let mut best = 0;
    let mut best_d = (w - centroids[0] as f64).abs();
    for (k, &c) in centroids.iter().enumerate().skip(1) {
        let d = (w - c as f64).abs();
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    best as u8
}

/// Nearest-centroid lookup that uses binary search when the table is sorted.
/// Agrees exactly with [`nearest`].
pub(crate) struct NearestLookup<'a> {
    centroids: &'a [f32],
    sorted: bool,
}

impl<'a> NearestLookup<'a> {
    pub(crate) fn new(centroids: &'a [f32]) -> Self {
        let sorted = centroids.windows(2).all(|w| w[0] <= w[1]);
        Self { centroids, sorted }
    }

    pub(crate) fn get(&self, w: f32) -> u8 {
        if !self.sorted {
            return nearest(w, self.centroids);
        }
        let c = self.centroids;
        // First centroid >= w, and the first centroid of the run just below it.
        let hi = c.partition_point(|&x| x < w);
        if hi == 0 {
            return 0;
        }
        let lo = c.partition_point(|&x| x < c[hi - 1]);
        if hi == c.len() {
            return lo as u8;
        }
        let d_lo = (w as f64 - c[lo] as f64).abs();
        let d_hi = (w as f64 - c[hi] as f64).abs();
        if d_lo <= d_hi {
            lo as u8
        } else {
            hi as u8
        }
    }
}

/// Total absolute error of an explicit assignment.
pub fn assignment_l1(values: &[f32], centroids: &[f32], assignment: &[u8]) -> f64 {
    values
        .iter()
        .zip(assignment)
        .map(|(&w, &a)| (w as f64 - centroids[a as usize] as f64).abs())
        .sum()
}

/// Total absolute error when every weight takes its nearest centroid.
pub fn nearest_l1(values: &[f32], centroids: &[f32]) -> f64 {
    let lookup = NearestLookup::new(centroids);
    values
        .iter()
        .map(|&w| (w as f64 - centroids[lookup.get(w) as usize] as f64).abs())
        .sum()
}

/// Step 1: move every weight to its nearest centroid. Returns how many moved.
pub fn reassign(values: &[f32], centroids: &[f32], assignment: &mut [u8]) -> usize {
    let lookup = NearestLookup::new(centroids);
    let mut moved = 0;
    for (a, &w) in assignment.iter_mut().zip(values) {
        let k = lookup.get(w);
        if k != *a {
            *a = k;
            moved += 1;
        }
    }
    moved
}

/// Step 2: set each centroid to the mean of its members. A centroid with no
/// members keeps its previous value. Returns the number of empty clusters.
pub fn update_centroids(values: &[f32], centroids: &mut [f32], assignment: &[u8]) -> usize {
    let mut sums = vec![0.0f64; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (&w, &a) in values.iter().zip(assignment) {
        sums[a as usize] += w as f64;
        counts[a as usize] += 1;
    }
    let mut empty = 0;
    for ((c, s), n) in centroids.iter_mut().zip(sums).zip(counts) {
        if n == 0 {
            empty += 1;
        } else {
            *c = (s / n as f64) as f32;
        }
    }
    empty
}

/// When a refinement loop stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Stop on the first iteration whose L1 exceeds the previous one and keep
    /// the best state seen; also stop at a fixed point.
    L1Increase,
    /// Stop when an iteration reassigns no weight.
    NoReassignment,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub centroids: Vec<f32>,
    pub iterations: usize,
    pub initial_l1: f64,
    pub l1_history: Vec<f64>,
    pub reassignments: Vec<usize>,
    pub empty_cluster_events: usize,
    pub cap_hit: bool,
}

/// Runs the two-step loop from the given initial bins.
///
/// L1 after each iteration is measured on the membership produced by that
/// iteration's reassignment, against the freshly updated centroids.
pub fn refine(values: &[f32], bins: Bins, rule: StopRule, cap: usize) -> Refinement {
    let Bins { centroids, mut assignment } = bins;
    let mut centroids = centroids.into_values();
    let mut l1_new = assignment_l1(values, &centroids, &assignment);
    let initial_l1 = l1_new;
    let mut best = centroids.clone();
    let mut out = Refinement {
        centroids: Vec::new(),
        iterations: 0,
        initial_l1,
        l1_history: Vec::new(),
        reassignments: Vec::new(),
        empty_cluster_events: 0,
        cap_hit: false,
    };
    loop {
        out.iterations += 1;
        let l1_old = l1_new;
        let moved = reassign(values, &centroids, &mut assignment);
        out.empty_cluster_events += update_centroids(values, &mut centroids, &assignment);
        l1_new = assignment_l1(values, &centroids, &assignment);
        out.l1_history.push(l1_new);
        out.reassignments.push(moved);

        let keep_going = match rule {
            StopRule::L1Increase => {
                if l1_new <= l1_old {
                    best.copy_from_slice(&centroids);
                }
                l1_old >= l1_new && moved > 0
            }
            StopRule::NoReassignment => {
                best.copy_from_slice(&centroids);
                moved > 0
            }
        };
        if !keep_going {
            break;
        }
        if out.iterations >= cap {
            out.cap_hit = true;
            break;
        }
    }
    out.centroids = best;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_population_of_four() {
        let bins = init_bins(&[1.0, 2.0, 3.0, 4.0], 1).unwrap();
        assert_eq!(bins.centroids.values(), &[1.5, 3.5]);
        assert_eq!(bins.assignment, vec![0, 0, 1, 1]);
    }

    #[test]
    fn equal_population_two_clumps() {
        let bins = init_bins(&[0.0, 0.0, 10.0, 10.0], 1).unwrap();
        assert_eq!(bins.centroids.values(), &[0.0, 10.0]);
    }

    #[test]
    fn remainder_goes_to_lowest_bins() {
        let sorted: Vec<f32> = (0..11).map(|v| v as f32).collect();
        let bins = init_bins(&sorted, 2).unwrap();
        let sizes: Vec<usize> =
            (0..4).map(|k| bins.assignment.iter().filter(|&&a| a == k).count()).collect();
        assert_eq!(sizes, vec![3, 3, 3, 2]);
        assert_eq!(bins.centroids.values(), &[1.0, 4.0, 7.0, 9.5]);
    }

    #[test]
    fn too_few_weights() {
        assert_eq!(
            init_bins(&[1.0, 2.0, 3.0], 2),
            Err(QuantError::TooFewWeights { needed: 4, got: 3 })
        );
    }

    #[test]
    fn nearest_breaks_ties_low() {
        assert_eq!(nearest(0.5, &[0.0, 1.0]), 0);
        assert_eq!(nearest(0.5001, &[0.0, 1.0]), 1);
    }

    #[test]
    fn sorted_lookup_matches_scan_with_duplicates() {
        let tables: [&[f32]; 4] = [
            &[0.0, 1.0, 1.0, 2.0],
            &[-1.0, -1.0, -1.0, 3.0],
            &[0.0, 0.5, 2.0, 2.0],
            &[2.0, 1.0, 0.0, -1.0],
        ];
        for table in tables {
            let lookup = NearestLookup::new(table);
            for i in -40..=40 {
                let w = i as f32 * 0.1;
                assert_eq!(lookup.get(w), nearest(w, table), "w={w} table={table:?}");
            }
        }
    }

    #[test]
    fn empty_cluster_keeps_previous_centroid() {
        let values = [0.0, 0.1, 0.2];
        let mut centroids = [0.1, 5.0];
        let mut assignment = [1, 1, 1];
        reassign(&values, &centroids, &mut assignment);
        let empty = update_centroids(&values, &mut centroids, &assignment);
        assert_eq!(empty, 1);
        assert_eq!(centroids[1], 5.0);
    }
}
