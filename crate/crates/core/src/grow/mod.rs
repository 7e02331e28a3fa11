//! Row-stationary accelerator model: Gustavson SpMM over CSR with a pinned
//! high-degree-node cache, per-cluster execution and multi-row runahead.

mod engine;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Activation, GcnModelConfig};
use crate::kernels::check_model_chain;
use crate::matrix::{CsrMatrix, DenseMatrix};
use crate::memory::{DramConfig, VALUE_BYTES};
use crate::partition::{permute_rows, relabel, unpermute_rows, HdnList, Partition};
use crate::result::{reencode_stage, SimResult, Stage, StageRecord};

pub use engine::HDN_ID_BYTES;
use engine::{simulate, Mode, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CachePolicy {
    /// HDN rows prefetched per cluster and never evicted mid-cluster.
    #[default]
    Pinned,
    /// Every missed row is inserted on return, least recently used evicted.
    DemandLru,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrowConfig {
    pub num_macs: usize,
    pub mac_width_bits: u32,
    pub sparse_buf_bytes: u64,
    pub hdn_id_list_bytes: u64,
    pub hdn_cache_bytes: u64,
    pub out_buf_bytes: u64,
    pub runahead_degree: usize,
    /// `None` leaves the table unbounded.
    pub ldn_table_entries: Option<usize>,
    pub lhs_id_table_entries: Option<usize>,
    pub num_pes: usize,
    pub cache_policy: CachePolicy,
}

impl Default for GrowConfig {
    fn default() -> Self {
        Self {
            num_macs: 16,
            mac_width_bits: 64,
            sparse_buf_bytes: 12 * 1024,
            hdn_id_list_bytes: 12 * 1024,
            hdn_cache_bytes: 512 * 1024,
            out_buf_bytes: 2 * 1024,
            runahead_degree: 16,
            ldn_table_entries: Some(16),
            lhs_id_table_entries: Some(64),
            num_pes: 1,
            cache_policy: CachePolicy::Pinned,
        }
    }
}

impl GrowConfig {
    /// Removes the LDN and LHS ID table limits.
    pub fn unbounded_tables(mut self) -> Self {
        self.ldn_table_entries = None;
        self.lhs_id_table_entries = None;
        self
    }

    pub fn with_runahead(mut self, degree: usize) -> Self {
        self.runahead_degree = degree;
        self
    }

    pub fn with_pes(mut self, num_pes: usize) -> Self {
        self.num_pes = num_pes;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_macs", self.num_macs as u64),
            ("sparse_buf_bytes", self.sparse_buf_bytes),
            ("runahead_degree", self.runahead_degree as u64),
            ("num_pes", self.num_pes as u64),
            ("ldn_table_entries", self.ldn_table_entries.unwrap_or(1) as u64),
            ("lhs_id_table_entries", self.lhs_id_table_entries.unwrap_or(1) as u64),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.mac_width_bits != 64 {
            return Err(Error::Config(format!(
                "MAC width is fixed at 64 bits, got {}",
                self.mac_width_bits
            )));
        }
        Ok(())
    }

    /// IDs the HDN ID list can hold.
    pub fn hdn_list_capacity(&self) -> usize {
        (self.hdn_id_list_bytes / HDN_ID_BYTES) as usize
    }

    /// Dense rows of width `f` the HDN cache can hold.
    pub fn hdn_cache_rows(&self, f: usize) -> usize {
        if f == 0 {
            return usize::MAX;
        }
        (self.hdn_cache_bytes / (f as u64 * VALUE_BYTES)) as usize
    }

    /// Largest per-cluster HDN list usable for rows of width `f`.
    pub fn max_hdn_entries(&self, f: usize) -> usize {
        self.hdn_list_capacity().min(self.hdn_cache_rows(f))
    }

    /// The output buffer must hold one row per runahead slot.
    pub fn check_out_buf(&self, f: usize) -> Result<()> {
        let need = (self.runahead_degree * f) as u64 * VALUE_BYTES;
        if self.out_buf_bytes < need {
            return Err(Error::Config(format!(
                "output buffer of {} B cannot hold {} rows of {f} elements ({need} B)",
                self.out_buf_bytes, self.runahead_degree
            )));
        }
        Ok(())
    }
}

fn aggregation_stage(
    a: &CsrMatrix,
    xw: &DenseMatrix,
    part: &Partition,
    hdn: &HdnList,
    cfg: &GrowConfig,
    dram: &DramConfig,
    layer: usize,
) -> Result<(StageRecord, DenseMatrix)> {
    cfg.validate()?;
    if !a.is_square() || a.num_cols() != xw.num_rows() || a.num_rows() != part.num_nodes() {
        return Err(Error::Structural(format!(
            "adjacency {}x{}, dense operand {} rows, partition {} nodes",
            a.num_rows(),
            a.num_cols(),
            xw.num_rows(),
            part.num_nodes()
        )));
    }
    let f = xw.num_cols();
    if f == 0 {
        return Err(Error::Domain("dense operand has no columns".into()));
    }
    cfg.check_out_buf(f)?;
    hdn.validate(part)?;
    let limit = cfg.max_hdn_entries(f);
    if cfg.cache_policy == CachePolicy::Pinned && hdn.max_len() > limit {
        return Err(Error::Config(format!(
            "HDN list of {} IDs exceeds what the list and a {} B cache hold for {f}-wide rows ({limit})",
            hdn.max_len(),
            cfg.hdn_cache_bytes
        )));
    }
    let problem = Problem {
        lhs: a,
        rhs: xw,
        jobs: part.cluster_bounds().to_vec(),
        mode: Mode::Aggregation { hdn },
        layer,
        stage: Stage::Aggregation,
    };
    simulate(&problem, cfg, dram)
}

/// Aggregation `Â (X W)` over an adjacency matrix already relabeled by
/// `part`. Output rows are in the relabeled order.
pub fn run_aggregation(
    a: &CsrMatrix,
    xw: &DenseMatrix,
    part: &Partition,
    hdn: &HdnList,
    cfg: &GrowConfig,
    dram: &DramConfig,
) -> Result<SimResult> {
    let (rec, out) = aggregation_stage(a, xw, part, hdn, cfg, dram, 0)?;
    Ok(SimResult::from_stages(vec![rec], out))
}

/// Same as [`run_aggregation`] on `num_pes` engines.
pub fn run_multi_pe(
    a: &CsrMatrix,
    xw: &DenseMatrix,
    part: &Partition,
    hdn: &HdnList,
    cfg: &GrowConfig,
    dram: &DramConfig,
    num_pes: usize,
) -> Result<SimResult> {
    run_aggregation(a, xw, part, hdn, &cfg.with_pes(num_pes), dram)
}

fn combination_stage(
    x: &CsrMatrix,
    w: &DenseMatrix,
    jobs: Vec<(usize, usize)>,
    cfg: &GrowConfig,
    dram: &DramConfig,
    layer: usize,
) -> Result<(StageRecord, DenseMatrix)> {
    cfg.validate()?;
    if x.num_cols() != w.num_rows() {
        return Err(Error::Structural(format!(
            "features have {} columns, weights {} rows",
            x.num_cols(),
            w.num_rows()
        )));
    }
    if w.num_cols() == 0 {
        return Err(Error::Domain("weight matrix has no columns".into()));
    }
    let w_bytes = (w.num_rows() * w.num_cols()) as u64 * VALUE_BYTES;
    if w_bytes > cfg.hdn_cache_bytes {
        return Err(Error::Config(format!(
            "{}x{} weights ({w_bytes} B) do not fit the {} B on-chip cache",
            w.num_rows(),
            w.num_cols(),
            cfg.hdn_cache_bytes
        )));
    }
    let problem = Problem {
        lhs: x,
        rhs: w,
        jobs,
        mode: Mode::Resident,
        layer,
        stage: Stage::Combination,
    };
    simulate(&problem, cfg, dram)
}

/// Equal row blocks, one per PE.
fn row_blocks(n: usize, parts: usize) -> Vec<(usize, usize)> {
    let parts = parts.clamp(1, n.max(1));
    (0..parts).map(|i| (i * n / parts, (i + 1) * n / parts)).collect()
}

/// Combination `X W` with `W` resident on chip.
pub fn run_combination(x: &CsrMatrix, w: &DenseMatrix, cfg: &GrowConfig, dram: &DramConfig) -> Result<SimResult> {
    let jobs = row_blocks(x.num_rows(), cfg.num_pes);
    let (rec, out) = combination_stage(x, w, jobs, cfg, dram, 0)?;
    Ok(SimResult::from_stages(vec![rec], out))
}

/// Full GCN inference. `Â` and `X^(0)` are given in original node order;
/// the engine relabels them by `part`, truncates the HDN lists to what each
/// layer's cache holds, and returns the output in original order.
#[allow(clippy::too_many_arguments)]
pub fn run_inference(
    a_hat: &CsrMatrix,
    x0: &CsrMatrix,
    weights: &[DenseMatrix],
    model: &GcnModelConfig,
    part: &Partition,
    hdn: &HdnList,
    cfg: &GrowConfig,
    dram: &DramConfig,
) -> Result<SimResult> {
    check_model_chain(a_hat, x0, weights, model)?;
    let a = relabel(a_hat, part)?;
    let mut x = permute_rows(x0, part)?;
    let jobs = part.cluster_bounds().to_vec();
    let mut stages = Vec::new();
    let mut out = DenseMatrix::default();
    for (l, w) in weights.iter().enumerate() {
        if l > 0 {
            stages.push(reencode_stage(l, x.num_rows(), x.num_cols(), x.nnz(), dram)?);
        }
        let (comb, xw) = combination_stage(&x, w, jobs.clone(), cfg, dram, l)?;
        let lists = hdn.truncated(cfg.max_hdn_entries(w.num_cols()));
        let (agg, y) = aggregation_stage(&a, &xw, part, &lists, cfg, dram, l)?;
        stages.push(comb);
        stages.push(agg);
        if l + 1 < weights.len() {
            let act = model.activation;
            let h = if act == Activation::None { y } else { y.map(|v| act.apply(v)) };
            x = CsrMatrix::from_dense(&h);
        } else {
            out = unpermute_rows(&y, part);
        }
    }
    Ok(SimResult::from_stages(stages, out))
}
