//! Simulation results shared by both engines.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::matrix::DenseMatrix;
use crate::memory::{lines_spanned, DramConfig, MemoryModel, TrafficClass, TrafficStats, INDEX_BYTES, LINE_BYTES, VALUE_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Combination,
    Aggregation,
    Reencode,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Combination => "combination",
            Stage::Aggregation => "aggregation",
            Stage::Reencode => "reencode",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StallCycles {
    pub ldn_full: u64,
    pub lhs_full: u64,
    pub memory: u64,
}

impl StallCycles {
    pub fn total(&self) -> u64 {
        self.ldn_full + self.lhs_full + self.memory
    }

    pub fn add(&mut self, o: &StallCycles) {
        self.ldn_full += o.ldn_full;
        self.lhs_full += o.lhs_full;
        self.memory += o.memory;
    }
}

/// One stage of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub layer: usize,
    pub stage: Stage,
    pub cycles: u64,
    /// Cycles in which some PE did useful work, summed over PEs.
    pub busy_cycles: u64,
    pub num_pes: usize,
    pub traffic: TrafficStats,
    pub hdn_hits: u64,
    pub hdn_misses: u64,
    pub stalls: StallCycles,
    /// Largest LDN / LHS ID table occupancy seen by any PE.
    pub peak_ldn_entries: usize,
    pub peak_lhs_entries: usize,
    pub mac_ops: u64,
    pub sram_bytes: u64,
    /// Bytes the engine itself expected to read per class; cross-checks the
    /// memory model's counters.
    pub expected_read_bytes: u64,
}

impl StageRecord {
    pub fn new(layer: usize, stage: Stage) -> Self {
        Self {
            layer,
            stage,
            cycles: 0,
            busy_cycles: 0,
            num_pes: 1,
            traffic: TrafficStats::default(),
            hdn_hits: 0,
            hdn_misses: 0,
            stalls: StallCycles::default(),
            peak_ldn_entries: 0,
            peak_lhs_entries: 0,
            mac_ops: 0,
            sram_bytes: 0,
            expected_read_bytes: 0,
        }
    }

    pub fn hit_rate(&self) -> Option<f64> {
        let total = self.hdn_hits + self.hdn_misses;
        (total > 0).then(|| self.hdn_hits as f64 / total as f64)
    }
}

/// On-chip SRAM bytes touched by a row-wise or outer-product SpMM: buffer
/// fills from DRAM, one value plus index per non-zero, the dense row it
/// selects, a read-modify-write of the output row, and drains to DRAM.
pub fn spmm_sram_bytes(nnz: u64, row_elems: u64, fills: u64, drains: u64) -> u64 {
    let row = row_elems * VALUE_BYTES;
    fills + nnz * (VALUE_BYTES + INDEX_BYTES + row + 2 * row) + drains
}

/// Inter-layer handoff: the dense activations of layer `layer - 1` are
/// streamed back in and written out compressed for the next combination.
pub fn reencode_stage(layer: usize, rows: usize, cols: usize, nnz: usize, dram: &DramConfig) -> Result<StageRecord> {
    let mut mem = MemoryModel::new(*dram)?;
    let mut rec = StageRecord::new(layer, Stage::Reencode);
    let dense_bytes = (rows * cols) as u64 * VALUE_BYTES;
    if dense_bytes > 0 {
        rec.cycles = mem.read_lines(TrafficClass::Reencode, lines_spanned(0, dense_bytes), dense_bytes, 0)?;
        rec.expected_read_bytes = lines_spanned(0, dense_bytes) * LINE_BYTES;
    }
    let csr_bytes = nnz as u64 * (VALUE_BYTES + INDEX_BYTES) + (rows as u64 + 1) * INDEX_BYTES;
    mem.issue_write(TrafficClass::Reencode, 0, csr_bytes);
    rec.traffic = mem.into_stats();
    rec.sram_bytes = rec.traffic.bytes_read + rec.traffic.bytes_written;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub total_cycles: u64,
    pub stages: Vec<StageRecord>,
    pub traffic: TrafficStats,
    pub hdn_hits: u64,
    pub hdn_misses: u64,
    pub stalls: StallCycles,
    pub mac_ops: u64,
    pub sram_bytes: u64,
    pub busy_cycles: u64,
    pub num_pes: usize,
    #[serde(skip)]
    pub output: DenseMatrix,
}

impl SimResult {
    /// Stages run back to back: totals are plain sums.
    pub fn from_stages(stages: Vec<StageRecord>, output: DenseMatrix) -> Self {
        let mut traffic = TrafficStats::default();
        let mut stalls = StallCycles::default();
        let (mut cycles, mut hits, mut misses, mut macs, mut sram, mut busy) = (0, 0, 0, 0, 0, 0);
        let mut num_pes = 1;
        for s in &stages {
            cycles += s.cycles;
            hits += s.hdn_hits;
            misses += s.hdn_misses;
            macs += s.mac_ops;
            sram += s.sram_bytes;
            busy += s.busy_cycles;
            num_pes = num_pes.max(s.num_pes);
            traffic.merge(&s.traffic);
            stalls.add(&s.stalls);
        }
        Self {
            total_cycles: cycles,
            stages,
            traffic,
            hdn_hits: hits,
            hdn_misses: misses,
            stalls,
            mac_ops: macs,
            sram_bytes: sram,
            busy_cycles: busy,
            num_pes,
            output,
        }
    }

    pub fn stage_cycles(&self, stage: Stage) -> u64 {
        self.stages.iter().filter(|s| s.stage == stage).map(|s| s.cycles).sum()
    }

    pub fn stage(&self, layer: usize, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.layer == layer && s.stage == stage)
    }

    /// Traffic summed over all stages of one kind.
    pub fn stage_traffic(&self, stage: Stage) -> TrafficStats {
        let mut t = TrafficStats::default();
        for s in self.stages.iter().filter(|s| s.stage == stage) {
            t.merge(&s.traffic);
        }
        t
    }

    pub fn hit_rate(&self) -> Option<f64> {
        let total = self.hdn_hits + self.hdn_misses;
        (total > 0).then(|| self.hdn_hits as f64 / total as f64)
    }

    /// Fraction of PE-cycles spent on useful work.
    pub fn pe_utilization(&self) -> Option<f64> {
        let cap = self.total_cycles * self.num_pes as u64;
        (cap > 0).then(|| self.busy_cycles as f64 / cap as f64)
    }

    /// Checks the bookkeeping identities every simulation must satisfy: stage
    /// cycles and counters sum to the totals, traffic counters are
    /// self-consistent, and each stage read exactly what its engine expected.
    pub fn check_conservation(&self) -> std::result::Result<(), String> {
        let summed = SimResult::from_stages(self.stages.clone(), DenseMatrix::zeros(0, 0));
        if summed.total_cycles != self.total_cycles {
            return Err(format!("stage cycles {} != total {}", summed.total_cycles, self.total_cycles));
        }
        if summed.traffic != self.traffic {
            return Err("stage traffic does not sum to total traffic".into());
        }
        if (summed.hdn_hits, summed.hdn_misses) != (self.hdn_hits, self.hdn_misses) {
            return Err("stage hit/miss counters do not sum to totals".into());
        }
        if !self.traffic.is_consistent() {
            return Err("traffic totals disagree with per-class counters".into());
        }
        for s in &self.stages {
            if !s.traffic.is_consistent() {
                return Err(format!("layer {} {}: inconsistent traffic", s.layer, s.stage.as_str()));
            }
            if s.traffic.bytes_read != s.expected_read_bytes {
                return Err(format!(
                    "layer {} {}: memory model read {} bytes, engine expected {}",
                    s.layer,
                    s.stage.as_str(),
                    s.traffic.bytes_read,
                    s.expected_read_bytes
                ));
            }
        }
        Ok(())
    }
}
