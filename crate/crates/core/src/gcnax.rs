//! Tiled outer-product baseline over CSC-compressed sparse tiles.
//!
//! The loop nest is output-stationary: for every row tile and output column
//! tile, the engine walks the k tiles, fetching one CSC tile of the sparse
//! operand and the matching dense tile, and multiplies each sparse non-zero
//! with its dense row. Fetch of step `s + 1` overlaps compute of step `s`
//! (double buffering).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Activation, GcnModelConfig};
use crate::matrix::{CscMatrix, CsrMatrix, DenseMatrix};
use crate::memory::{
    lines_in_sorted_ranges, lines_spanned, AddressMap, DramConfig, MemoryModel, TrafficClass,
    INDEX_BYTES, LINE_BYTES, VALUE_BYTES,
};
use crate::result::{reencode_stage, spmm_sram_bytes, SimResult, Stage, StageRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TileConfig {
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// Output tile width; `None` covers the whole output row.
    pub out_tile_cols: Option<usize>,
}

impl Default for TileConfig {
    fn default() -> Self {
        Self {
            tile_rows: 1024,
            tile_cols: 1024,
            out_tile_cols: None,
        }
    }
}

impl TileConfig {
    pub fn square(size: usize) -> Self {
        Self {
            tile_rows: size,
            tile_cols: size,
            out_tile_cols: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub tile: TileConfig,
    pub num_macs: usize,
    /// Buffer capacities; `None` provisions exactly the worst-case tile.
    pub sparse_buf_bytes: Option<u64>,
    pub dense_buf_bytes: Option<u64>,
    pub out_buf_bytes: Option<u64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            tile: TileConfig::default(),
            num_macs: 16,
            sparse_buf_bytes: None,
            dense_buf_bytes: None,
            out_buf_bytes: None,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.tile;
        if t.tile_rows == 0 || t.tile_cols == 0 || t.out_tile_cols == Some(0) || self.num_macs == 0 {
            return Err(Error::Config("tile sizes and MAC count must be positive".into()));
        }
        Ok(())
    }

    /// Rejects buffers that cannot hold a fully dense tile of each operand.
    fn check_buffers(&self, rows: usize, inner: usize, f: usize) -> Result<()> {
        let tr = self.tile.tile_rows.min(rows).max(1) as u64;
        let tc = self.tile.tile_cols.min(inner).max(1) as u64;
        let tn = self.tile.out_tile_cols.unwrap_or(f).min(f).max(1) as u64;
        let needs = [
            ("sparse", self.sparse_buf_bytes, tr * tc * (VALUE_BYTES + INDEX_BYTES) + (tc + 1) * INDEX_BYTES),
            ("dense", self.dense_buf_bytes, tc * tn * VALUE_BYTES),
            ("output", self.out_buf_bytes, tr * tn * VALUE_BYTES),
        ];
        for (name, cap, need) in needs {
            if let Some(cap) = cap {
                if cap < need {
                    return Err(Error::Config(format!(
                        "{name} buffer of {cap} B cannot hold a worst-case {tr}x{tc} tile ({need} B)"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One CSC tile: per-column slices of the compressed arrays.
struct TileView {
    cols: (usize, usize),
    /// (column, first entry, end entry)
    segments: Vec<(usize, usize, usize)>,
    nnz: usize,
    lines: u64,
    effectual: u64,
}

fn tile_view(lhs: &CscMatrix, layout: &crate::memory::CsrLayout, rows: (usize, usize), cols: (usize, usize)) -> TileView {
    let (r0, r1) = rows;
    let (c0, c1) = cols;
    let ptr = lhs.col_ptr();
    let ridx = lhs.row_idx();
    let mut segments = Vec::new();
    let mut nnz = 0;
    for c in c0..c1 {
        let col = &ridx[ptr[c]..ptr[c + 1]];
        let p0 = ptr[c] + col.partition_point(|&r| r < r0);
        let p1 = ptr[c] + col.partition_point(|&r| r < r1);
        if p1 > p0 {
            segments.push((c, p0, p1));
            nnz += p1 - p0;
        }
    }
    let ptr_lines = lines_spanned(layout.pointer_addr(c0), (c1 - c0 + 1) as u64 * INDEX_BYTES);
    let idx_lines = lines_in_sorted_ranges(
        segments
            .iter()
            .map(|&(_, p0, p1)| (layout.index_addr(p0), (p1 - p0) as u64 * INDEX_BYTES)),
    );
    let val_lines = lines_in_sorted_ranges(
        segments
            .iter()
            .map(|&(_, p0, p1)| (layout.value_addr(p0), (p1 - p0) as u64 * VALUE_BYTES)),
    );
    TileView {
        cols,
        nnz,
        lines: ptr_lines + idx_lines + val_lines,
        effectual: nnz as u64 * (VALUE_BYTES + INDEX_BYTES) + segments.len() as u64 * INDEX_BYTES,
        segments,
    }
}

fn ranges(len: usize, step: usize) -> Vec<(usize, usize)> {
    (0..len).step_by(step.max(1)).map(|s| (s, (s + step).min(len))).collect()
}

/// Simulates `lhs x rhs` and labels the result with `layer` and `stage`.
pub fn simulate_stage(
    lhs: &CscMatrix,
    rhs: &DenseMatrix,
    cfg: &BaselineConfig,
    dram: &DramConfig,
    layer: usize,
    stage: Stage,
) -> Result<(StageRecord, DenseMatrix)> {
    cfg.validate()?;
    if lhs.num_cols() != rhs.num_rows() {
        return Err(Error::Structural(format!(
            "inner dimensions differ: {} vs {}",
            lhs.num_cols(),
            rhs.num_rows()
        )));
    }
    let (n, m, f) = (lhs.num_rows(), lhs.num_cols(), rhs.num_cols());
    cfg.check_buffers(n, m, f)?;
    let mut mem = MemoryModel::new(*dram)?;
    let mut map = AddressMap::new();
    let lhs_layout = map.alloc_csr(m, lhs.nnz());
    let rhs_layout = map.alloc_dense(m, f);
    let out_layout = map.alloc_dense(n, f);

    let tn = cfg.tile.out_tile_cols.unwrap_or(f).max(1);
    let row_tiles = ranges(n, cfg.tile.tile_rows);
    let k_tiles = ranges(m, cfg.tile.tile_cols);
    let col_tiles = ranges(f, tn);

    let mut out = DenseMatrix::zeros(n, f);
    let mut rec = StageRecord::new(layer, stage);
    let (mut prev_issue, mut end1, mut end2, mut last_ready) = (0u64, 0u64, 0u64, 0u64);
    let mut expected = 0u64;

    for &(r0, r1) in &row_tiles {
        let views: Vec<TileView> = k_tiles
            .iter()
            .map(|&cols| tile_view(lhs, &lhs_layout, (r0, r1), cols))
            .collect();
        for &(j0, j1) in &col_tiles {
            let width = j1 - j0;
            let per_nnz = width.div_ceil(cfg.num_macs) as u64;
            for view in &views {
                let issue = prev_issue.max(end2);
                let mut ready = issue;
                if view.lines > 0 {
                    expected += view.lines * LINE_BYTES;
                    ready = ready.max(mem.read_lines(TrafficClass::SparseLhs, view.lines, view.effectual, issue)?);
                }
                if view.nnz > 0 {
                    // The whole dense tile is fetched, used rows or not.
                    let (c0, c1) = view.cols;
                    let lines = lines_in_sorted_ranges((c0..c1).map(|c| {
                        (rhs_layout.row_addr(c) + j0 as u64 * VALUE_BYTES, width as u64 * VALUE_BYTES)
                    }));
                    let effectual = view.segments.len() as u64 * width as u64 * VALUE_BYTES;
                    expected += lines * LINE_BYTES;
                    ready = ready.max(mem.read_lines(TrafficClass::DenseRhs, lines, effectual, issue)?);
                }
                let compute = view.nnz as u64 * per_nnz;
                let start = ready.max(end1);
                rec.stalls.memory += start - end1;
                rec.busy_cycles += compute;
                end2 = end1;
                end1 = start + compute;
                prev_issue = issue;
                last_ready = last_ready.max(ready);
                rec.mac_ops += view.nnz as u64 * width as u64;
                rec.sram_bytes += spmm_sram_bytes(view.nnz as u64, width as u64, 0, 0);

                for &(c, p0, p1) in &view.segments {
                    let src = &rhs.row(c)[j0..j1];
                    for p in p0..p1 {
                        let (i, v) = (lhs.row_idx()[p], lhs.values()[p]);
                        for (o, &x) in out.row_mut(i)[j0..j1].iter_mut().zip(src) {
                            *o += v * x;
                        }
                    }
                }
            }
            if width == f {
                let bytes = (r1 - r0) as u64 * width as u64 * VALUE_BYTES;
                mem.issue_write(TrafficClass::Output, out_layout.row_addr(r0), bytes);
            } else {
                for i in r0..r1 {
                    let addr = out_layout.row_addr(i) + j0 as u64 * VALUE_BYTES;
                    mem.issue_write(TrafficClass::Output, addr, width as u64 * VALUE_BYTES);
                }
            }
        }
    }
    rec.cycles = end1.max(last_ready);
    rec.traffic = mem.into_stats();
    rec.sram_bytes += rec.traffic.bytes_read + rec.traffic.bytes_written;
    rec.expected_read_bytes = expected;
    Ok((rec, out))
}

/// Tiled outer-product SpMM of a CSC operand with a dense operand.
pub fn run_spgemm_tiled(
    lhs: &CscMatrix,
    rhs: &DenseMatrix,
    cfg: &BaselineConfig,
    dram: &DramConfig,
) -> Result<SimResult> {
    let (rec, out) = simulate_stage(lhs, rhs, cfg, dram, 0, Stage::Aggregation)?;
    Ok(SimResult::from_stages(vec![rec], out))
}

/// Full GCN inference on the baseline: per layer, combination `X W`, then
/// aggregation `Â (X W)`, with a re-encoding pass between layers.
pub fn run_gcnax_inference(
    a_hat: &CsrMatrix,
    x0: &CsrMatrix,
    weights: &[DenseMatrix],
    model: &GcnModelConfig,
    cfg: &BaselineConfig,
    dram: &DramConfig,
) -> Result<SimResult> {
    crate::kernels::check_model_chain(a_hat, x0, weights, model)?;
    let a_csc = a_hat.to_csc();
    let mut stages = Vec::new();
    let mut x = x0.clone();
    let mut out = DenseMatrix::default();
    for (l, w) in weights.iter().enumerate() {
        if l > 0 {
            stages.push(reencode_stage(l, x.num_rows(), x.num_cols(), x.nnz(), dram)?);
        }
        let (comb, xw) = simulate_stage(&x.to_csc(), w, cfg, dram, l, Stage::Combination)?;
        let (agg, y) = simulate_stage(&a_csc, &xw, cfg, dram, l, Stage::Aggregation)?;
        stages.push(comb);
        stages.push(agg);
        if l + 1 < weights.len() {
            let act = model.activation;
            let h = if act == Activation::None { y } else { y.map(|v| act.apply(v)) };
            x = CsrMatrix::from_dense(&h);
        } else {
            out = y;
        }
    }
    Ok(SimResult::from_stages(stages, out))
}

/// Non-empty tiles bucketed by their non-zero count.
pub fn tile_nnz_histogram(m: &CsrMatrix, tile: &TileConfig) -> BTreeMap<usize, usize> {
    let tr = tile.tile_rows.max(1);
    let tc = tile.tile_cols.max(1);
    let mut per_tile: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (r, c, _) in m.entries() {
        *per_tile.entry((r / tr, c / tc)).or_default() += 1;
    }
    let mut hist = BTreeMap::new();
    for count in per_tile.into_values() {
        *hist.entry(count).or_default() += 1;
    }
    hist
}

/// Number of tiles (including empty ones) of a matrix under `tile`.
pub fn tile_count(m: &CsrMatrix, tile: &TileConfig) -> usize {
    m.num_rows().div_ceil(tile.tile_rows.max(1)) * m.num_cols().div_ceil(tile.tile_cols.max(1))
}
