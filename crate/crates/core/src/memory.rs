//! Off-chip DRAM model: 64-byte access granularity, a fixed service latency
//! and one bandwidth-limited channel, with traffic and effectual-byte
//! accounting per traffic class.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LINE_BYTES: u64 = 64;
/// Bytes per stored value.
pub const VALUE_BYTES: u64 = 8;
/// Bytes per index or pointer.
pub const INDEX_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DramConfig {
    pub bandwidth_bytes_per_cycle: f64,
    pub latency_cycles: u64,
    pub line_bytes: u64,
}

impl Default for DramConfig {
    fn default() -> Self {
        Self {
            bandwidth_bytes_per_cycle: 128.0,
            latency_cycles: 100,
            line_bytes: LINE_BYTES,
        }
    }
}

impl DramConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_bytes_per_cycle.is_finite() && self.bandwidth_bytes_per_cycle > 0.0) {
            return Err(Error::Config(format!(
                "DRAM bandwidth must be positive, got {}",
                self.bandwidth_bytes_per_cycle
            )));
        }
        if self.latency_cycles == 0 {
            return Err(Error::Config("DRAM latency must be positive".into()));
        }
        if self.line_bytes != LINE_BYTES {
            return Err(Error::Config(format!(
                "DRAM line size is fixed at {LINE_BYTES} bytes, got {}",
                self.line_bytes
            )));
        }
        Ok(())
    }

    pub fn with_bandwidth(mut self, bytes_per_cycle: f64) -> Self {
        self.bandwidth_bytes_per_cycle = bytes_per_cycle;
        self
    }
}

/// What a DRAM access carries; used for the per-class traffic breakdown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficClass {
    /// Compressed sparse left-hand operand (values, indices, pointers).
    SparseLhs,
    /// Dense right-hand operand fetched by tile or whole (W, XW tiles).
    DenseRhs,
    /// Per-cluster HDN ID list.
    HdnList,
    /// Eager fetch of the HDN rows into the cache.
    HdnPrefetch,
    /// On-demand fetch of a missed dense row.
    MissFetch,
    /// Output rows or tiles.
    Output,
    /// Inter-layer re-encoding pass.
    Reencode,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 7] = [
        TrafficClass::SparseLhs,
        TrafficClass::DenseRhs,
        TrafficClass::HdnList,
        TrafficClass::HdnPrefetch,
        TrafficClass::MissFetch,
        TrafficClass::Output,
        TrafficClass::Reencode,
    ];
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTraffic {
    pub bytes_read: u64,
    pub lines_read: u64,
    pub effectual_bytes: u64,
    pub bytes_written: u64,
}

impl ClassTraffic {
    fn add(&mut self, o: &ClassTraffic) {
        self.bytes_read += o.bytes_read;
        self.lines_read += o.lines_read;
        self.effectual_bytes += o.effectual_bytes;
        self.bytes_written += o.bytes_written;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficStats {
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub lines_read: u64,
    pub effectual_bytes: u64,
    pub per_class: BTreeMap<TrafficClass, ClassTraffic>,
}

impl TrafficStats {
    pub fn class(&self, c: TrafficClass) -> ClassTraffic {
        self.per_class.get(&c).copied().unwrap_or_default()
    }

    pub fn merge(&mut self, o: &TrafficStats) {
        self.bytes_read += o.bytes_read;
        self.bytes_written += o.bytes_written;
        self.lines_read += o.lines_read;
        self.effectual_bytes += o.effectual_bytes;
        for (c, t) in &o.per_class {
            self.per_class.entry(*c).or_default().add(t);
        }
    }

    /// Totals equal the per-class sums and reads are whole lines.
    pub fn is_consistent(&self) -> bool {
        let mut sum = ClassTraffic::default();
        for t in self.per_class.values() {
            sum.add(t);
        }
        sum.bytes_read == self.bytes_read
            && sum.bytes_written == self.bytes_written
            && sum.lines_read == self.lines_read
            && sum.effectual_bytes == self.effectual_bytes
            && self.bytes_read == LINE_BYTES * self.lines_read
            && self.effectual_bytes <= self.bytes_read
    }
}

/// Effectual bytes over bytes read; `None` when nothing was read.
pub fn effective_bw_utilization(stats: &TrafficStats) -> Option<f64> {
    ratio(stats.effectual_bytes, stats.bytes_read)
}

/// Utilization restricted to one traffic class.
pub fn class_utilization(stats: &TrafficStats, class: TrafficClass) -> Option<f64> {
    let t = stats.class(class);
    ratio(t.effectual_bytes, t.bytes_read)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Number of 64-byte lines overlapping `[addr, addr + len)`.
pub fn lines_spanned(addr: u64, len: u64) -> u64 {
    if len == 0 {
        return 0;
    }
    (addr + len - 1) / LINE_BYTES - addr / LINE_BYTES + 1
}

/// Distinct lines covered by a set of byte ranges given in ascending address
/// order (ranges may share lines).
pub fn lines_in_sorted_ranges(ranges: impl IntoIterator<Item = (u64, u64)>) -> u64 {
    let mut lines = 0;
    let mut last: Option<u64> = None;
    for (addr, len) in ranges {
        if len == 0 {
            continue;
        }
        let first = addr / LINE_BYTES;
        let end = (addr + len - 1) / LINE_BYTES;
        let start = match last {
            Some(l) if l >= first => l + 1,
            _ => first,
        };
        if end >= start {
            lines += end - start + 1;
        }
        last = Some(last.map_or(end, |l| l.max(end)));
    }
    lines
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemRequest {
    pub byte_address: u64,
    pub num_bytes: u64,
    pub effectual_bytes: u64,
    pub issue_cycle: u64,
    pub tag: u64,
    pub class: TrafficClass,
}

impl MemRequest {
    pub fn new(class: TrafficClass, byte_address: u64, num_bytes: u64, issue_cycle: u64) -> Self {
        Self {
            byte_address,
            num_bytes,
            effectual_bytes: num_bytes,
            issue_cycle,
            tag: 0,
            class,
        }
    }

    pub fn effectual(mut self, bytes: u64) -> Self {
        self.effectual_bytes = bytes;
        self
    }
}

/// Single shared channel. Transfers serialize on bandwidth and overlap on
/// latency: a read completes at
/// `ceil(max(issue, channel_free) + latency + bytes / bandwidth)`.
#[derive(Debug, Clone)]
pub struct MemoryModel {
    cfg: DramConfig,
    channel_free: f64,
    stats: TrafficStats,
}

impl MemoryModel {
    pub fn new(cfg: DramConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            channel_free: 0.0,
            stats: TrafficStats::default(),
        })
    }

    pub fn config(&self) -> &DramConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &TrafficStats {
        &self.stats
    }

    pub fn into_stats(self) -> TrafficStats {
        self.stats
    }

    /// Cycle at which the channel finishes its queued transfers.
    pub fn channel_free_cycle(&self) -> f64 {
        self.channel_free
    }

    /// Line-rounded bytes a request would fetch.
    pub fn fetched_bytes(req: &MemRequest) -> u64 {
        lines_spanned(req.byte_address, req.num_bytes) * LINE_BYTES
    }

    pub fn issue_read(&mut self, req: MemRequest) -> Result<u64> {
        if req.num_bytes == 0 {
            return Err(Error::Domain("zero-byte memory request".into()));
        }
        let lines = lines_spanned(req.byte_address, req.num_bytes);
        self.read_lines(req.class, lines, req.effectual_bytes, req.issue_cycle)
    }

    /// Reads `lines` whole lines (possibly non-contiguous, e.g. a gather
    /// over several segments) as one request.
    pub fn read_lines(&mut self, class: TrafficClass, lines: u64, effectual: u64, issue: u64) -> Result<u64> {
        if lines == 0 {
            return Err(Error::Domain("zero-byte memory request".into()));
        }
        let fetched = lines * LINE_BYTES;
        if effectual > fetched {
            return Err(Error::Domain(format!(
                "{effectual} effectual bytes exceed {fetched} fetched bytes"
            )));
        }
        let start = self.channel_free.max(issue as f64);
        let transfer = fetched as f64 / self.cfg.bandwidth_bytes_per_cycle;
        self.channel_free = start + transfer;
        let done = (start + self.cfg.latency_cycles as f64 + transfer).ceil() as u64;

        self.stats.bytes_read += fetched;
        self.stats.lines_read += lines;
        self.stats.effectual_bytes += effectual;
        let c = self.stats.per_class.entry(class).or_default();
        c.bytes_read += fetched;
        c.lines_read += lines;
        c.effectual_bytes += effectual;
        Ok(done)
    }

    /// Fire-and-forget write: counted at line granularity, never stalls and
    /// does not occupy the read channel.
    pub fn issue_write(&mut self, class: TrafficClass, byte_address: u64, num_bytes: u64) {
        let bytes = lines_spanned(byte_address, num_bytes) * LINE_BYTES;
        self.stats.bytes_written += bytes;
        self.stats.per_class.entry(class).or_default().bytes_written += bytes;
    }
}

/// Bump allocator for line-aligned matrix regions.
#[derive(Debug, Clone, Default)]
pub struct AddressMap {
    next: u64,
}

impl AddressMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, bytes: u64) -> u64 {
        let base = self.next;
        self.next = (base + bytes).div_ceil(LINE_BYTES) * LINE_BYTES;
        base
    }

    pub fn alloc_csr(&mut self, rows: usize, nnz: usize) -> CsrLayout {
        let nnz = nnz as u64;
        let base = self.alloc(nnz * (VALUE_BYTES + INDEX_BYTES) + (rows as u64 + 1) * INDEX_BYTES);
        CsrLayout {
            values: base,
            indices: base + nnz * VALUE_BYTES,
            pointers: base + nnz * (VALUE_BYTES + INDEX_BYTES),
        }
    }

    pub fn alloc_dense(&mut self, rows: usize, cols: usize) -> DenseLayout {
        let row_bytes = cols as u64 * VALUE_BYTES;
        DenseLayout {
            base: self.alloc(rows as u64 * row_bytes),
            row_bytes,
        }
    }
}

/// Compressed arrays of one matrix: values, then indices, then pointers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsrLayout {
    pub values: u64,
    pub indices: u64,
    pub pointers: u64,
}

impl CsrLayout {
    pub fn value_addr(&self, k: usize) -> u64 {
        self.values + k as u64 * VALUE_BYTES
    }

    pub fn index_addr(&self, k: usize) -> u64 {
        self.indices + k as u64 * INDEX_BYTES
    }

    pub fn pointer_addr(&self, r: usize) -> u64 {
        self.pointers + r as u64 * INDEX_BYTES
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayout {
    pub base: u64,
    pub row_bytes: u64,
}

impl DenseLayout {
    pub fn row_addr(&self, r: usize) -> u64 {
        self.base + r as u64 * self.row_bytes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(bw: f64) -> MemoryModel {
        MemoryModel::new(DramConfig::default().with_bandwidth(bw)).unwrap()
    }

    #[test]
    fn aligned_request_rounds_to_lines() {
        let mut m = model(128.0);
        m.issue_read(MemRequest::new(TrafficClass::SparseLhs, 0, 100, 0)).unwrap();
        assert_eq!(m.stats().bytes_read, 128);
        assert_eq!(m.stats().lines_read, 2);
    }

    #[test]
    fn misaligned_request_spans_extra_line() {
        assert_eq!(lines_spanned(60, 8), 2);
        assert_eq!(lines_spanned(64, 64), 1);
        assert_eq!(lines_spanned(0, 0), 0);
    }

    #[test]
    fn granularity_floor() {
        let mut m = model(128.0);
        m.issue_read(MemRequest::new(TrafficClass::SparseLhs, 0, 12, 0)).unwrap();
        assert_eq!(effective_bw_utilization(m.stats()), Some(12.0 / 64.0));
    }

    #[test]
    fn back_to_back_lines() {
        let mut m = model(64.0);
        let a = m.issue_read(MemRequest::new(TrafficClass::DenseRhs, 0, 64, 0)).unwrap();
        let b = m.issue_read(MemRequest::new(TrafficClass::DenseRhs, 64, 64, 0)).unwrap();
        assert_eq!((a, b), (101, 102));
    }

    #[test]
    fn half_line_transfers_pipeline() {
        // At two lines per cycle the channel carries four lines in two cycles.
        let mut m = model(128.0);
        let done: Vec<u64> = (0..4)
            .map(|i| m.issue_read(MemRequest::new(TrafficClass::DenseRhs, i * 64, 64, 0)).unwrap())
            .collect();
        assert_eq!(done, vec![101, 101, 102, 102]);
    }

    #[test]
    fn zero_bytes_rejected() {
        let mut m = model(128.0);
        assert!(matches!(
            m.issue_read(MemRequest::new(TrafficClass::DenseRhs, 0, 0, 0)),
            Err(Error::Domain(_))
        ));
        assert!(m.read_lines(TrafficClass::DenseRhs, 1, 65, 0).is_err());
    }

    #[test]
    fn utilization_of_nothing_is_absent() {
        assert_eq!(effective_bw_utilization(&TrafficStats::default()), None);
        let s = TrafficStats {
            bytes_read: 100,
            effectual_bytes: 23,
            ..Default::default()
        };
        assert_eq!(effective_bw_utilization(&s), Some(0.23));
    }

    #[test]
    fn writes_do_not_occupy_channel() {
        let mut m = model(64.0);
        m.issue_write(TrafficClass::Output, 0, 4096);
        let done = m.issue_read(MemRequest::new(TrafficClass::DenseRhs, 0, 64, 0)).unwrap();
        assert_eq!(done, 101);
        assert_eq!(m.stats().bytes_written, 4096);
        assert!(m.stats().is_consistent());
    }

    #[test]
    fn range_union_counts_shared_lines_once() {
        assert_eq!(lines_in_sorted_ranges([(0, 8), (8, 8), (60, 8)]), 2);
        assert_eq!(lines_in_sorted_ranges([(0, 8), (640, 8)]), 2);
        assert_eq!(lines_in_sorted_ranges([(0, 200), (100, 8)]), 4);
    }

    #[test]
    fn csr_layout_order() {
        let mut map = AddressMap::new();
        let l = map.alloc_csr(3, 10);
        assert_eq!(l.values, 0);
        assert_eq!(l.indices, 80);
        assert_eq!(l.pointers, 120);
        let d = map.alloc_dense(2, 3);
        assert_eq!(d.base, 192);
        assert_eq!(d.row_addr(1), 216);
    }
}
