use super::{ScheduledLayer, SimError, TileConfig, TileTrace, PES_PER_TILE};
use crate::compensated::CompensatedSum;
use crate::container::{index_at, ContainerView, Triplet, BLOCK_SIZE};
use crate::kernel::{ActivationVector, KernelError};

const SM_WEIGHTS: usize = BLOCK_SIZE * BLOCK_SIZE;

/// Runs one layer on a single compute unit (one tile, or one pair for 4-bit).
pub fn simulate_tile(
    layer: &ScheduledLayer,
    words: &[ActivationVector],
    cfg: &TileConfig,
) -> Result<TileTrace, SimError> {
    if cfg.units() != 1 {
        return Err(SimError::InvalidConfig(format!(
            "simulate_tile runs one unit, configuration has {}",
            cfg.units()
        )));
    }
    run(layer, words, cfg)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ChipTrace {
    pub layers: Vec<TileTrace>,
    /// Counts summed over layers; `outputs` is left empty.
    pub total: TileTrace,
}

impl ChipTrace {
    pub fn utilization(&self) -> f64 {
        self.total.utilization()
    }
}

/// Runs layers back to back, each spread over every unit of `cfg`.
pub fn simulate_chip(
    layers: &[ScheduledLayer],
    words: &[Vec<ActivationVector>],
    cfg: &TileConfig,
) -> Result<ChipTrace, SimError> {
    if layers.len() != words.len() {
        return Err(SimError::ScheduleIncomplete(format!(
            "{} layers but activations for {}",
            layers.len(),
            words.len()
        )));
    }
    let mut chip = ChipTrace { total: TileTrace { pes: cfg.pes_per_unit() * cfg.units(), ..Default::default() }, ..Default::default() };
    for (layer, acts) in layers.iter().zip(words) {
        let t = run(layer, acts, cfg)?;
        chip.total.absorb_counts(&t);
        chip.layers.push(t);
    }
    Ok(chip)
}

/// Outlier values of one SM, indexed by `block * 16 + offset`.
fn outlier_map(triplets: &[Triplet]) -> [Option<f32>; SM_WEIGHTS] {
    let mut map = [None; SM_WEIGHTS];
    for t in triplets {
        map[t.block as usize * BLOCK_SIZE + t.offset as usize] = Some(t.value);
    }
    map
}

/// Extra cycles when several outliers share one activation (column).
fn stalls(map: &[Option<f32>; SM_WEIGHTS]) -> u64 {
    let mut per_col = [0u64; BLOCK_SIZE];
    for (p, v) in map.iter().enumerate() {
        if v.is_some() {
            let (d, w) = (p / BLOCK_SIZE, p % BLOCK_SIZE);
            per_col[(w + BLOCK_SIZE - d) % BLOCK_SIZE] += 1;
        }
    }
    per_col.iter().map(|&n| n.saturating_sub(1)).sum()
}

fn run(layer: &ScheduledLayer, words: &[ActivationVector], cfg: &TileConfig) -> Result<TileTrace, SimError> {
    cfg.validate()?;
    let plan = layer.plan();
    cfg.check_bits(plan.bits)?;
    if plan.units != cfg.units() {
        return Err(SimError::ScheduleIncomplete(format!(
            "plan spreads bands over {} units, configuration has {}",
            plan.units,
            cfg.units()
        )));
    }
    if words.len() != plan.words {
        return Err(SimError::ScheduleIncomplete(format!(
            "plan is for {} words, got {}",
            plan.words,
            words.len()
        )));
    }
    for a in words {
        if a.len() != plan.cols {
            return Err(KernelError::DimensionMismatch { expected: plan.cols, got: a.len() }.into());
        }
    }

    let view = ContainerView::parse(layer.bytes())?;
    let h = view.header();
    let dims = h.dims;
    let bits = h.bits;
    let k = 1usize << bits;
    let centroids: Vec<f64> = h.centroids.iter().map(|&c| c as f64).collect();
    let triplet_bytes = h.geometry.triplet_bytes() as u64;
    let stream = view.index_stream();
    let block_cycles = cfg.block_cycles(bits);
    let merge = if cfg.paired_for_4bit { PES_PER_TILE as u64 } else { 0 };

    let acts: Vec<Vec<f64>> = words
        .iter()
        .map(|a| {
            let mut v: Vec<f64> = a.as_slice().iter().map(|&x| x as f64).collect();
            v.resize(dims.padded_cols, 0.0);
            v
        })
        .collect();
    let mut out = vec![vec![CompensatedSum::default(); dims.padded_rows]; words.len()];
    let mut t = TileTrace { pes: cfg.pes_per_unit() * cfg.units(), ..Default::default() };

    let bands = plan.bands();
    let mut rf = vec![CompensatedSum::default(); PES_PER_TILE * k];
    for group in &plan.groups {
        let first_sm_col = group.first_col / BLOCK_SIZE;
        let sms = group.sms();
        for round in 0..plan.rounds() {
            let round_bands = round * plan.units..((round + 1) * plan.units).min(bands);
            let mut round_stalls = vec![0u64; sms];
            for band in round_bands {
                let maps = (0..sms)
                    .map(|s| Ok(outlier_map(&view.triplets(band * dims.sms_per_row + first_sm_col + s)?)))
                    .collect::<Result<Vec<_>, SimError>>()?;
                for (s, m) in maps.iter().enumerate() {
                    round_stalls[s] = round_stalls[s].max(stalls(m));
                    t.outlier_bytes_read += m.iter().flatten().count() as u64 * triplet_bytes;
                }
                t.weight_fetch_bits += (sms * SM_WEIGHTS) as u64 * bits as u64;

                for (wi, a) in acts.iter().enumerate() {
                    rf.fill(CompensatedSum::default());
                    let mut spu = [CompensatedSum::default(); PES_PER_TILE];
                    for (s, map) in maps.iter().enumerate() {
                        let sm = band * dims.sms_per_row + first_sm_col + s;
                        let col_base = (first_sm_col + s) * BLOCK_SIZE;
                        t.activation_reads += BLOCK_SIZE as u64;
                        // Cycle d: PE w sees the activation of column (w - d) mod 16.
                        for d in 0..BLOCK_SIZE {
                            for w in 0..PES_PER_TILE {
                                let x = a[col_base + (w + BLOCK_SIZE - d) % BLOCK_SIZE];
                                let p = d * BLOCK_SIZE + w;
                                if let Some(v) = map[p] {
                                    spu[w].add_product(v as f64, x);
                                    t.macs += 1;
                                } else {
                                    let idx = index_at(stream, bits, sm * SM_WEIGHTS + p) as usize;
                                    rf[w * k + idx].add(x);
                                    t.accumulations += 1;
                                }
                            }
                        }
                    }
                    for w in 0..PES_PER_TILE {
                        let acc = &mut out[wi][band * PES_PER_TILE + w];
                        for (c, r) in centroids.iter().zip(&rf[w * k..(w + 1) * k]) {
                            acc.add_scaled(*c, r);
                        }
                        acc.add_scaled(1.0, &spu[w]);
                    }
                    t.macs += (k * PES_PER_TILE) as u64;
                }
            }
            let n = words.len() as u64;
            t.phase1_cycles += n * sms as u64 * BLOCK_SIZE as u64 * block_cycles;
            t.outlier_stall_cycles += n * round_stalls.iter().sum::<u64>();
            t.phase2_cycles += n * cfg.phase2_cycles(bits);
            t.pair_merge_cycles += n * merge;
        }
    }

    t.total_cycles = t.phase1_cycles + t.outlier_stall_cycles + t.phase2_cycles;
    t.busy_pe_cycles = t.accumulations;
    t.idle_pe_cycles = t.total_cycles * t.pes as u64 - t.busy_pe_cycles;
    t.indexes_consumed = (dims.padded_weights() * words.len()) as u64;
    t.outputs = out.iter().map(|o| o[..dims.rows].iter().map(|s| s.value() as f32).collect()).collect();
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::{CentroidTable, Convergence, GaussianFit, Outlier, OutlierSet, QuantizedLayer};
    use crate::tilesim::{Dataflow, TileConfig};

    fn layer(rows: usize, cols: usize, bits: u8, outliers: Vec<Outlier>) -> QuantizedLayer {
        let k = 1usize << bits;
        let mut indexes: Vec<u8> = (0..rows * cols).map(|i| ((i * 7 + i / cols) % k) as u8).collect();
        for o in &outliers {
            indexes[o.row * cols + o.col] = 0;
        }
        QuantizedLayer {
            rows,
            cols,
            indexes,
            centroids: CentroidTable::new(bits, (0..k).map(|i| i as f32 * 0.25 - 1.0).collect()).unwrap(),
            outliers: OutlierSet { entries: outliers, threshold: -4.0 },
            fit: GaussianFit { mu: 0.0, sigma: 1.0 },
            convergence: Convergence::default(),
        }
    }

    fn acts(n: usize) -> ActivationVector {
        ActivationVector::new((0..n).map(|i| (i as f32 * 0.37).sin()).collect()).unwrap()
    }

    #[test]
    fn one_submatrix_costs() {
        let l = layer(16, 16, 3, vec![]);
        let cfg = TileConfig::single();
        let s = ScheduledLayer::from_layer(&l, 1, &cfg).unwrap();
        let t = simulate_tile(&s, &[acts(16)], &cfg).unwrap();
        assert_eq!(t.phase1_cycles, 16);
        assert_eq!(t.phase2_cycles, 128);
        assert_eq!(t.outlier_stall_cycles, 0);
        assert_eq!(t.total_cycles, 144);
        assert_eq!(t.busy_pe_cycles, 256);
        assert_eq!(t.idle_pe_cycles, 144 * 16 - 256);
        assert_eq!(t.macs, 128);
    }

    #[test]
    fn matches_kernel() {
        let l = layer(20, 40, 3, vec![Outlier { row: 3, col: 5, value: 2.5 }, Outlier { row: 19, col: 39, value: -3.0 }]);
        let cfg = TileConfig::single();
        let a = acts(40);
        let want = crate::kernel::centroid_sum_matvec(&l, &a).unwrap();
        for df in [Dataflow::default(), Dataflow::OutputStationary] {
            let s = ScheduledLayer::from_layer_with(&l, 1, &cfg, df).unwrap();
            let t = simulate_tile(&s, std::slice::from_ref(&a), &cfg).unwrap();
            assert_eq!(t.outputs[0], want);
        }
    }

    #[test]
    fn same_column_outliers_stall() {
        let o = vec![Outlier { row: 0, col: 4, value: 1.0 }, Outlier { row: 9, col: 4, value: 1.0 }];
        let l = layer(16, 16, 3, o);
        let cfg = TileConfig::single();
        let s = ScheduledLayer::from_layer(&l, 1, &cfg).unwrap();
        let t = simulate_tile(&s, &[acts(16)], &cfg).unwrap();
        assert_eq!(t.outlier_stall_cycles, 1);
        assert_eq!(t.total_cycles, 145);
        assert_eq!(t.busy_pe_cycles, 254);
    }

    #[test]
    fn paired_four_bit() {
        let l = layer(16, 32, 4, vec![]);
        let cfg = TileConfig::paired();
        let s = ScheduledLayer::from_layer(&l, 2, &cfg).unwrap();
        let words = [acts(32), acts(32)];
        let t = simulate_tile(&s, &words, &cfg).unwrap();
        assert_eq!(t.phase2_cycles, 2 * 2 * 144);
        assert_eq!(t.pair_merge_cycles, 2 * 2 * 16);
        assert_eq!(t.pes, 32);
        assert_eq!(t.outputs[1], crate::kernel::centroid_sum_matvec(&l, &words[1]).unwrap());
        assert!(matches!(simulate_tile(&s, &words, &TileConfig::single()), Err(SimError::BitsMismatch { .. })));
    }

    #[test]
    fn chip_spreads_bands() {
        let l = layer(64, 16, 2, vec![]);
        let cfg = TileConfig::single().with_tiles(4);
        let s = ScheduledLayer::from_layer(&l, 1, &cfg).unwrap();
        let chip = simulate_chip(std::slice::from_ref(&s), &[vec![acts(16)]], &cfg).unwrap();
        assert_eq!(chip.total.total_cycles, 16 + 64);
        assert!(simulate_tile(&s, &[acts(16)], &cfg).is_err());
    }
}
