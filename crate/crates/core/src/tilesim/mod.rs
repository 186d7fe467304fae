//! Functional and cycle-count model of the centroid-sum accelerator tile.
//!
//! A tile is a column of 16 processing elements (PEs), each an adder plus an
//! 8-entry register file (one entry per 3-bit index), feeding a shared
//! processing unit (SPU) that holds one output register per PE. Work on one
//! 16-row band of a 16-column submatrix proceeds in two phases:
//!
//! * Phase 1, 16 cycles per submatrix: every cycle each PE receives one
//!   weight index and the activation currently in front of it, and adds the
//!   activation into that index's register. Activations rotate by one PE per
//!   cycle, so the 16 indexes consumed in cycle `t` are exactly block `t` of
//!   the container's diagonal block order. Outlier positions disable their
//!   PE; the SPU multiplies the outlier by the activation when it reaches
//!   PE15. One outlier per activation is absorbed this way, each further
//!   outlier on the same activation stalls all PEs for one cycle.
//! * Phase 2, 16 cycles per centroid: the SPU multiplies each centroid with
//!   every PE's matching register. PEs are idle throughout.
//!
//! Four-bit layers run on a pair of tiles, the first holding indexes 0..8 and
//! the second 8..16; phase 2 runs on both SPUs in parallel and a further 16
//! cycles add the two output register files together.
//!
//! Costs are counted at block and phase granularity. Container bytes are
//! assumed resident on chip; there is no DRAM model.

mod engine;
mod plan;

pub use engine::{simulate_chip, simulate_tile, ChipTrace};
pub use plan::{plan_dataflow, plan_dataflow_with, ColumnGroup, Dataflow, DataflowPlan, ScheduledLayer};

use thiserror::Error;

use crate::container::ContainerError;
use crate::kernel::KernelError;

pub const PES_PER_TILE: usize = 16;
pub const RF_ENTRIES: usize = 8;
/// Index bits a weight bank delivers to one tile per cycle.
pub const WEIGHT_BANK_BITS_PER_CYCLE: usize = 48;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("{bits}-bit container cannot run on {config}")]
    BitsMismatch { bits: u8, config: String },
    #[error("schedule incomplete: {0}")]
    ScheduleIncomplete(String),
    #[error("invalid tile configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileConfig {
    pub pes_per_tile: usize,
    pub rf_entries: usize,
    pub spu_rf_entries: usize,
    pub tiles: usize,
    pub paired_for_4bit: bool,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self::single()
    }
}

impl TileConfig {
    pub fn single() -> Self {
        Self {
            pes_per_tile: PES_PER_TILE,
            rf_entries: RF_ENTRIES,
            spu_rf_entries: PES_PER_TILE,
            tiles: 1,
            paired_for_4bit: false,
        }
    }

    /// Two adjacent tiles acting as one 16-entry unit.
    pub fn paired() -> Self {
        Self { tiles: 2, paired_for_4bit: true, ..Self::single() }
    }

    pub fn with_tiles(mut self, tiles: usize) -> Self {
        self.tiles = tiles;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.pes_per_tile != PES_PER_TILE || self.spu_rf_entries != PES_PER_TILE {
            return bad("tiles have 16 PEs and a 16-entry SPU register file");
        }
        if self.rf_entries != RF_ENTRIES {
            return bad("PE register files have 8 entries");
        }
        if self.tiles == 0 {
            return bad("at least one tile");
        }
        if self.paired_for_4bit && !self.tiles.is_multiple_of(2) {
            return bad("paired mode needs an even tile count");
        }
        Ok(())
    }

    /// Tiles cooperating on one band.
    pub fn tiles_per_unit(&self) -> usize {
        if self.paired_for_4bit {
            2
        } else {
            1
        }
    }

    /// Independent compute units (single tiles or pairs).
    pub fn units(&self) -> usize {
        self.tiles / self.tiles_per_unit()
    }

    pub fn pes_per_unit(&self) -> usize {
        self.pes_per_tile * self.tiles_per_unit()
    }

    pub fn check_bits(&self, bits: u8) -> Result<(), SimError> {
        let ok = if self.paired_for_4bit { bits == 4 } else { (1..=3).contains(&bits) };
        if ok {
            Ok(())
        } else {
            let config = if self.paired_for_4bit { "paired tiles (4-bit)" } else { "a single tile (up to 3-bit)" };
            Err(SimError::BitsMismatch { bits, config: config.into() })
        }
    }

    /// Phase-2 cycles for one band and column group.
    pub fn phase2_cycles(&self, bits: u8) -> u64 {
        if self.paired_for_4bit {
            (RF_ENTRIES * PES_PER_TILE + PES_PER_TILE) as u64
        } else {
            ((1usize << bits) * PES_PER_TILE) as u64
        }
    }

    /// Cycles to consume one 16-index block, limited by weight-bank width.
    pub fn block_cycles(&self, bits: u8) -> u64 {
        let need = PES_PER_TILE * bits as usize;
        need.div_ceil(WEIGHT_BANK_BITS_PER_CYCLE * self.tiles_per_unit()) as u64
    }
}

/// Cycle and operation counts for a simulation, plus its functional output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TileTrace {
    pub phase1_cycles: u64,
    pub outlier_stall_cycles: u64,
    pub phase2_cycles: u64,
    /// Part of `phase2_cycles` spent adding paired output registers.
    pub pair_merge_cycles: u64,
    pub total_cycles: u64,
    pub busy_pe_cycles: u64,
    pub idle_pe_cycles: u64,
    /// PE count the utilization is measured against.
    pub pes: usize,
    pub accumulations: u64,
    /// SPU multiplies: one per centroid per output row, plus one per outlier.
    pub macs: u64,
    pub indexes_consumed: u64,
    pub weight_fetch_bits: u64,
    pub activation_reads: u64,
    pub outlier_bytes_read: u64,
    /// One output vector per word.
    pub outputs: Vec<Vec<f32>>,
}

impl TileTrace {
    pub fn utilization(&self) -> f64 {
        if self.total_cycles == 0 {
            return 0.0;
        }
        self.busy_pe_cycles as f64 / (self.total_cycles as f64 * self.pes as f64)
    }

    /// Machine-readable `key=value` lines.
    pub fn summary(&self) -> String {
        format!(
            "phase1_cycles={}\nstalls={}\nphase2_cycles={}\ntotal_cycles={}\nidle_pe_cycles={}\nutilization={:.6}\nmacs={}\naccumulations={}\nweight_fetch_bits={}\n",
            self.phase1_cycles,
            self.outlier_stall_cycles,
            self.phase2_cycles,
            self.total_cycles,
            self.idle_pe_cycles,
            self.utilization(),
            self.macs,
            self.accumulations,
            self.weight_fetch_bits,
        )
    }

    pub(crate) fn absorb_counts(&mut self, other: &TileTrace) {
        self.phase1_cycles += other.phase1_cycles;
        self.outlier_stall_cycles += other.outlier_stall_cycles;
        self.phase2_cycles += other.phase2_cycles;
        self.pair_merge_cycles += other.pair_merge_cycles;
        self.total_cycles += other.total_cycles;
        self.busy_pe_cycles += other.busy_pe_cycles;
        self.idle_pe_cycles += other.idle_pe_cycles;
        self.accumulations += other.accumulations;
        self.macs += other.macs;
        self.indexes_consumed += other.indexes_consumed;
        self.weight_fetch_bits += other.weight_fetch_bits;
        self.activation_reads += other.activation_reads;
        self.outlier_bytes_read += other.outlier_bytes_read;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rules() {
        assert!(TileConfig::single().validate().is_ok());
        assert!(TileConfig::paired().validate().is_ok());
        assert!(TileConfig::paired().with_tiles(3).validate().is_err());
        assert!(TileConfig { rf_entries: 16, ..TileConfig::single() }.validate().is_err());
        assert_eq!(TileConfig::single().phase2_cycles(3), 128);
        assert_eq!(TileConfig::paired().phase2_cycles(4), 144);
        assert_eq!(TileConfig::single().block_cycles(3), 1);
        assert_eq!(TileConfig::paired().block_cycles(4), 1);
        assert!(TileConfig::single().check_bits(4).is_err());
        assert!(TileConfig::paired().check_bits(3).is_err());
    }
}
