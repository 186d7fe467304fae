//! Dataflow planning: how a layer is cut into column groups and row bands.

use super::{SimError, TileConfig, PES_PER_TILE};
use crate::container::{encode, ContainerGeometry, ContainerView, Layout, BLOCK_SIZE};
use crate::quant::QuantizedLayer;

/// How columns are grouped between phase-2 sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dataflow {
    /// Columns in groups of `group_cols` (a multiple of 16). Each group runs
    /// both phases for every word before moving on, so a group's weights are
    /// fetched once and reused across words; groups produce partial sums.
    Blocked { group_cols: usize },
    /// One group spanning all columns: a single phase-2 sweep per band.
    OutputStationary,
}

impl Default for Dataflow {
    fn default() -> Self {
        Self::Blocked { group_cols: BLOCK_SIZE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnGroup {
    pub first_col: usize,
    pub cols: usize,
}

impl ColumnGroup {
    /// 16-column submatrices in the group.
    pub fn sms(&self) -> usize {
        self.cols / BLOCK_SIZE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataflowPlan {
    pub rows: usize,
    pub cols: usize,
    pub padded_rows: usize,
    pub padded_cols: usize,
    pub bits: u8,
    pub words: usize,
    pub dataflow: Dataflow,
    pub groups: Vec<ColumnGroup>,
    /// Compute unit owning each 16-row band (round-robin).
    pub band_owner: Vec<usize>,
    pub units: usize,
    /// Outlier-free cycle counts predicted from the plan alone.
    pub expected_phase1_cycles: u64,
    pub expected_phase2_cycles: u64,
}

impl DataflowPlan {
    pub fn bands(&self) -> usize {
        self.band_owner.len()
    }

    /// Band rounds: bands processed concurrently, one per unit.
    pub fn rounds(&self) -> usize {
        self.bands().div_ceil(self.units)
    }

    pub fn expected_total_cycles(&self) -> u64 {
        self.expected_phase1_cycles + self.expected_phase2_cycles
    }
}

pub fn plan_dataflow(rows: usize, cols: usize, bits: u8, words: usize, cfg: &TileConfig) -> DataflowPlan {
    plan_dataflow_with(rows, cols, bits, words, cfg, Dataflow::default()).expect("default dataflow is valid")
}

pub fn plan_dataflow_with(
    rows: usize,
    cols: usize,
    bits: u8,
    words: usize,
    cfg: &TileConfig,
    dataflow: Dataflow,
) -> Result<DataflowPlan, SimError> {
    cfg.validate()?;
    let padded_rows = rows.max(1).div_ceil(PES_PER_TILE) * PES_PER_TILE;
    let padded_cols = cols.max(1).div_ceil(BLOCK_SIZE) * BLOCK_SIZE;
    let group_cols = match dataflow {
        Dataflow::Blocked { group_cols } => {
            if group_cols == 0 || group_cols % BLOCK_SIZE != 0 {
                return Err(SimError::ScheduleIncomplete(format!(
                    "column group of {group_cols} is not a positive multiple of {BLOCK_SIZE}"
                )));
            }
            group_cols
        }
        Dataflow::OutputStationary => padded_cols,
    };
    let groups: Vec<ColumnGroup> = (0..padded_cols)
        .step_by(group_cols)
        .map(|first_col| ColumnGroup { first_col, cols: group_cols.min(padded_cols - first_col) })
        .collect();
    let units = cfg.units();
    let bands = padded_rows / PES_PER_TILE;
    let band_owner = (0..bands).map(|b| b % units).collect();
    let rounds = bands.div_ceil(units) as u64;
    let block_cycles = cfg.block_cycles(bits);
    let words_u = words as u64;
    let expected_phase1_cycles =
        groups.iter().map(|g| rounds * words_u * g.sms() as u64 * BLOCK_SIZE as u64 * block_cycles).sum();
    let expected_phase2_cycles = groups.len() as u64 * rounds * words_u * cfg.phase2_cycles(bits);
    Ok(DataflowPlan {
        rows,
        cols,
        padded_rows,
        padded_cols,
        bits,
        words,
        dataflow,
        groups,
        band_owner,
        units,
        expected_phase1_cycles,
        expected_phase2_cycles,
    })
}

/// Container bytes paired with the plan that will execute them.
#[derive(Debug, Clone)]
pub struct ScheduledLayer {
    bytes: Vec<u8>,
    plan: DataflowPlan,
}

impl ScheduledLayer {
    /// Checks that the plan covers the container's layer exactly.
    pub fn new(bytes: Vec<u8>, plan: DataflowPlan) -> Result<Self, SimError> {
        let view = ContainerView::parse(&bytes)?;
        let h = view.header();
        if h.geometry.sm_side() != BLOCK_SIZE {
            return Err(SimError::ScheduleIncomplete(format!(
                "tile dataflow needs 16x16 submatrices, container uses {0}x{0}",
                h.geometry.sm_side()
            )));
        }
        if (h.dims.rows, h.dims.cols) != (plan.rows, plan.cols) {
            return Err(SimError::ScheduleIncomplete(format!(
                "plan covers {}x{}, container holds {}x{}",
                plan.rows, plan.cols, h.dims.rows, h.dims.cols
            )));
        }
        if h.bits != plan.bits {
            return Err(SimError::ScheduleIncomplete(format!(
                "plan is for {}-bit indexes, container holds {}-bit",
                plan.bits, h.bits
            )));
        }
        let covered: usize = plan.groups.iter().map(|g| g.cols).sum();
        if covered != h.dims.padded_cols || plan.padded_rows != h.dims.padded_rows {
            return Err(SimError::ScheduleIncomplete("column groups do not cover the layer".into()));
        }
        Ok(Self { bytes, plan })
    }

    /// Encodes `layer` with the default geometry and plans it.
    pub fn from_layer(layer: &QuantizedLayer, words: usize, cfg: &TileConfig) -> Result<Self, SimError> {
        Self::from_layer_with(layer, words, cfg, Dataflow::default())
    }

    pub fn from_layer_with(
        layer: &QuantizedLayer,
        words: usize,
        cfg: &TileConfig,
        dataflow: Dataflow,
    ) -> Result<Self, SimError> {
        let bytes = encode(layer, &ContainerGeometry::default(), Layout::Sequential)?;
        let plan = plan_dataflow_with(layer.rows, layer.cols, layer.bits(), words, cfg, dataflow)?;
        Self::new(bytes, plan)
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn plan(&self) -> &DataflowPlan {
        &self.plan
    }
}
