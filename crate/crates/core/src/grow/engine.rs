//! Event-stepped processing engines sharing one DRAM channel.
//!
//! Each PE owns one job (a cluster of output rows) at a time. A step performs
//! exactly one action at the PE's current cycle: a deferred accumulation, a
//! dispatch of the next non-zero of some window row, or an advance to the
//! next event. The global loop always steps the PE with the smallest clock,
//! so requests reach the channel in issue order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, DenseMatrix};
use crate::memory::{
    lines_spanned, AddressMap, CsrLayout, DenseLayout, DramConfig, MemoryModel, TrafficClass,
    INDEX_BYTES, LINE_BYTES, VALUE_BYTES,
};
use crate::partition::HdnList;
use crate::result::{spmm_sram_bytes, Stage, StageRecord};

use super::{CachePolicy, GrowConfig};

/// Bytes per entry of the HDN ID list.
pub const HDN_ID_BYTES: u64 = 3;

pub(crate) enum Mode<'a> {
    /// Sparse adjacency times dense XW with HDN caching and runahead.
    Aggregation { hdn: &'a HdnList },
    /// Dense operand fully resident on chip (W during combination).
    Resident,
}

pub(crate) struct Problem<'a> {
    pub lhs: &'a CsrMatrix,
    pub rhs: &'a DenseMatrix,
    /// Row ranges processed as independent jobs, in dispatch order.
    pub jobs: Vec<(usize, usize)>,
    pub mode: Mode<'a>,
    pub layer: usize,
    pub stage: Stage,
}

struct Shared<'a> {
    p: &'a Problem<'a>,
    cfg: &'a GrowConfig,
    mem: MemoryModel,
    lhs_at: CsrLayout,
    rhs_at: DenseLayout,
    out_at: DenseLayout,
    list_at: u64,
    list_offsets: Vec<u64>,
    out: DenseMatrix,
    /// Cycles per scalar-times-row accumulation.
    acc_cost: u64,
    expected: BTreeMap<TrafficClass, u64>,
    rec: StageRecord,
}

impl Shared<'_> {
    fn read(&mut self, class: TrafficClass, addr: u64, bytes: u64, effectual: u64, at: u64) -> Result<u64> {
        let lines = lines_spanned(addr, bytes);
        *self.expected.entry(class).or_default() += lines * LINE_BYTES;
        self.mem.read_lines(class, lines, effectual, at)
    }

    fn read_row(&mut self, class: TrafficClass, row: usize, at: u64) -> Result<u64> {
        let bytes = self.rhs_at.row_bytes;
        self.read(class, self.rhs_at.row_addr(row), bytes, bytes, at)
    }

    fn accumulate(&mut self, row: usize, src: usize, v: f64) {
        let f = self.p.rhs.num_cols();
        let (out, rhs) = (&mut self.out, self.p.rhs);
        for (o, &x) in out.row_mut(row)[..f].iter_mut().zip(rhs.row(src)) {
            *o += v * x;
        }
    }
}

struct RowState {
    row: usize,
    chunk: usize,
    next: usize,
    end: usize,
    pending: usize,
}

/// In-flight miss: one LDN table entry.
struct LdnEntry {
    ready: u64,
    refs: usize,
}

/// Deferred multiplication waiting in the LHS ID table.
#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct LhsEntry {
    ready: u64,
    seq: u64,
    row: usize,
    src: usize,
    value_idx: usize,
}

struct Job {
    start: usize,
    end: usize,
    chunks: Vec<(usize, usize)>,
    chunk_ready: Vec<Option<u64>>,
    /// Rows not yet admitted plus non-zeros not yet dispatched, per chunk.
    chunk_work: Vec<usize>,
    next_chunk: usize,
    next_admit: usize,
    window: Vec<RowState>,
    list: Vec<usize>,
    list_ready: Option<u64>,
    hdn_ready: HashMap<usize, u64>,
    ldn: HashMap<usize, LdnEntry>,
    lhs: BinaryHeap<Reverse<LhsEntry>>,
    seq: u64,
    retired: Vec<bool>,
    next_write: usize,
}

impl Job {
    fn done(&self) -> bool {
        self.next_write == self.end
    }
}

/// Demand-filled LRU cache of dense rows (comparison mode).
struct LruCache {
    capacity: usize,
    tick: u64,
    last_use: HashMap<usize, u64>,
    by_age: BTreeMap<u64, usize>,
}

impl LruCache {
    fn new(capacity: usize) -> Self {
        Self {
            capacity,
            tick: 0,
            last_use: HashMap::new(),
            by_age: BTreeMap::new(),
        }
    }

    fn touch(&mut self, node: usize) -> bool {
        match self.last_use.get(&node).copied() {
            Some(t) => {
                self.by_age.remove(&t);
                self.tick += 1;
                self.by_age.insert(self.tick, node);
                self.last_use.insert(node, self.tick);
                true
            }
            None => false,
        }
    }

    fn insert(&mut self, node: usize) {
        if self.capacity == 0 || self.touch(node) {
            return;
        }
        if self.last_use.len() == self.capacity {
            let (&t, &victim) = self.by_age.iter().next().unwrap();
            self.by_age.remove(&t);
            self.last_use.remove(&victim);
        }
        self.tick += 1;
        self.by_age.insert(self.tick, node);
        self.last_use.insert(node, self.tick);
    }
}

struct Pe {
    now: u64,
    job: Option<Job>,
    w_ready: Option<u64>,
    lru: Option<LruCache>,
}

enum Blocked {
    No,
    Memory,
    Lhs,
    Ldn,
}

/// Splits rows `[start, end)` into chunks of at most half the sparse buffer.
fn plan_chunks(lhs: &CsrMatrix, start: usize, end: usize, cap: u64) -> Vec<(usize, usize)> {
    let mut chunks = Vec::new();
    let mut cs = start;
    let mut bytes = 0;
    for r in start..end {
        let b = lhs.row_nnz(r) as u64 * (VALUE_BYTES + INDEX_BYTES) + INDEX_BYTES;
        if r > cs && bytes + b > cap {
            chunks.push((cs, r));
            cs = r;
            bytes = 0;
        }
        bytes += b;
    }
    if end > cs {
        chunks.push((cs, end));
    }
    chunks
}

fn start_job(sh: &mut Shared, pe: &mut Pe, job_idx: usize) -> Result<()> {
    let (start, end) = sh.p.jobs[job_idx];
    let now = pe.now;
    let chunks = plan_chunks(sh.p.lhs, start, end, sh.cfg.sparse_buf_bytes / 2);
    let row_ptr = sh.p.lhs.row_ptr();
    let chunk_work = chunks
        .iter()
        .map(|&(s, e)| (e - s) + row_ptr[e] - row_ptr[s])
        .collect();
    let mut job = Job {
        start,
        end,
        chunk_ready: vec![None; chunks.len()],
        chunks,
        chunk_work,
        next_chunk: 0,
        next_admit: start,
        window: Vec::new(),
        list: Vec::new(),
        list_ready: None,
        hdn_ready: HashMap::new(),
        ldn: HashMap::new(),
        lhs: BinaryHeap::new(),
        seq: 0,
        retired: vec![false; end - start],
        next_write: start,
    };
    match sh.p.mode {
        Mode::Aggregation { hdn } if sh.cfg.cache_policy == CachePolicy::Pinned => {
            job.list = hdn.list(job_idx).to_vec();
            if !job.list.is_empty() {
                let bytes = HDN_ID_BYTES * job.list.len() as u64;
                let addr = sh.list_at + HDN_ID_BYTES * sh.list_offsets[job_idx];
                job.list_ready = Some(sh.read(TrafficClass::HdnList, addr, bytes, bytes, now)?);
            }
        }
        Mode::Aggregation { .. } => {}
        Mode::Resident => {
            if pe.w_ready.is_none() {
                let rhs = sh.p.rhs;
                let bytes = (rhs.num_rows() * rhs.num_cols()) as u64 * VALUE_BYTES;
                pe.w_ready = Some(if bytes > 0 {
                    sh.read(TrafficClass::DenseRhs, sh.rhs_at.base, bytes, bytes, now)?
                } else {
                    now
                });
            }
        }
    }
    pe.job = Some(job);
    Ok(())
}

/// Issues chunk fetches whose buffer half has been released.
fn issue_chunks(sh: &mut Shared, job: &mut Job, now: u64) -> Result<()> {
    while job.next_chunk < job.chunks.len()
        && (job.next_chunk < 2 || job.chunk_work[job.next_chunk - 2] == 0)
    {
        let (s, e) = job.chunks[job.next_chunk];
        let ptr = sh.p.lhs.row_ptr();
        let (k0, k1) = (ptr[s], ptr[e]);
        let nnz = (k1 - k0) as u64;
        let nonempty = (s..e).filter(|&r| ptr[r + 1] > ptr[r]).count() as u64;
        let lines = lines_spanned(sh.lhs_at.value_addr(k0), nnz * VALUE_BYTES)
            + lines_spanned(sh.lhs_at.index_addr(k0), nnz * INDEX_BYTES)
            + lines_spanned(sh.lhs_at.pointer_addr(s), (e - s + 1) as u64 * INDEX_BYTES);
        let effectual = nnz * (VALUE_BYTES + INDEX_BYTES) + nonempty * INDEX_BYTES;
        *sh.expected.entry(TrafficClass::SparseLhs).or_default() += lines * LINE_BYTES;
        let ready = sh.mem.read_lines(TrafficClass::SparseLhs, lines, effectual, now)?;
        job.chunk_ready[job.next_chunk] = Some(ready);
        job.next_chunk += 1;
    }
    Ok(())
}

fn retire(sh: &mut Shared, job: &mut Job, row: usize) {
    job.retired[row - job.start] = true;
    let from = job.next_write;
    while job.next_write < job.end && job.retired[job.next_write - job.start] {
        job.next_write += 1;
    }
    if job.next_write > from {
        let bytes = (job.next_write - from) as u64 * sh.out_at.row_bytes;
        sh.mem.issue_write(TrafficClass::Output, sh.out_at.row_addr(from), bytes);
    }
}

fn chunk_of(job: &Job, row: usize) -> usize {
    job.chunks.partition_point(|&(_, e)| e <= row)
}

/// One PE action. Returns `Ok(())` after advancing `pe.now` by the cost of
/// the action or to the next event.
fn step(sh: &mut Shared, pe: &mut Pe) -> Result<()> {
    let window_cap = match sh.p.mode {
        Mode::Aggregation { .. } => sh.cfg.runahead_degree,
        Mode::Resident => 1,
    };
    let job = pe.job.as_mut().expect("step without a job");
    let now = pe.now;

    // Due events: HDN list arrival triggers the row prefetch.
    if let Some(t) = job.list_ready {
        if t <= now && job.hdn_ready.is_empty() {
            for i in 0..job.list.len() {
                let id = job.list[i];
                let ready = sh.read_row(TrafficClass::HdnPrefetch, id, now)?;
                job.hdn_ready.insert(id, ready);
            }
        }
    }
    issue_chunks(sh, job, now)?;
    // Admit rows in order once their chunk has arrived.
    while job.window.len() < window_cap && job.next_admit < job.end {
        let r = job.next_admit;
        let q = chunk_of(job, r);
        match job.chunk_ready[q] {
            Some(t) if t <= now => {}
            _ => break,
        }
        let ptr = sh.p.lhs.row_ptr();
        job.chunk_work[q] -= 1;
        job.next_admit += 1;
        if ptr[r] == ptr[r + 1] {
            retire(sh, job, r);
        } else {
            job.window.push(RowState {
                row: r,
                chunk: q,
                next: ptr[r],
                end: ptr[r + 1],
                pending: 0,
            });
        }
    }
    if job.next_chunk < job.chunks.len() && job.next_chunk >= 2 && job.chunk_work[job.next_chunk - 2] == 0 {
        issue_chunks(sh, job, now)?;
    }

    // (a) Deferred accumulation whose row has arrived.
    if let Some(Reverse(top)) = job.lhs.peek() {
        if top.ready <= now {
            let Reverse(e) = job.lhs.pop().unwrap();
            let v = sh.p.lhs.values()[e.value_idx];
            sh.accumulate(e.row, e.src, v);
            let ldn = job.ldn.get_mut(&e.src).unwrap();
            ldn.refs -= 1;
            if ldn.refs == 0 {
                job.ldn.remove(&e.src);
                if let Some(lru) = pe.lru.as_mut() {
                    lru.insert(e.src);
                }
            }
            let pos = job.window.iter().position(|w| w.row == e.row).unwrap();
            job.window[pos].pending -= 1;
            if job.window[pos].pending == 0 && job.window[pos].next == job.window[pos].end {
                job.window.remove(pos);
                retire(sh, job, e.row);
            }
            pe.now += sh.acc_cost;
            sh.rec.busy_cycles += sh.acc_cost;
            return Ok(());
        }
    }

    // (b) Dispatch the oldest row that can make progress.
    let ldn_cap = sh.cfg.ldn_table_entries.unwrap_or(usize::MAX);
    let lhs_cap = sh.cfg.lhs_id_table_entries.unwrap_or(usize::MAX);
    let mut blocked = Blocked::No;
    let mut wake: Option<u64> = None;
    let note = |b: Blocked, cur: &mut Blocked| {
        let rank = |x: &Blocked| match x {
            Blocked::No => 0,
            Blocked::Memory => 1,
            Blocked::Lhs => 2,
            Blocked::Ldn => 3,
        };
        if rank(&b) > rank(cur) {
            *cur = b;
        }
    };
    for pos in 0..job.window.len() {
        let w = &job.window[pos];
        if w.next == w.end {
            continue;
        }
        let (k, row, idx) = (sh.p.lhs.col_idx()[w.next], w.row, w.next);
        let v = sh.p.lhs.values()[idx];
        let cost;
        match sh.p.mode {
            Mode::Resident => {
                let ready = pe.w_ready.unwrap();
                if ready > now {
                    wake = Some(wake.map_or(ready, |x| x.min(ready)));
                    note(Blocked::Memory, &mut blocked);
                    continue;
                }
                sh.accumulate(row, k, v);
                cost = sh.acc_cost;
            }
            Mode::Aggregation { .. } => {
                if matches!(job.list_ready, Some(t) if t > now) {
                    // The ID list must arrive before any lookup.
                    wake = Some(wake.map_or(job.list_ready.unwrap(), |x| x.min(job.list_ready.unwrap())));
                    note(Blocked::Memory, &mut blocked);
                    break;
                }
                let hit = match pe.lru.as_mut() {
                    Some(lru) => lru.touch(k).then_some(now),
                    None => job.hdn_ready.get(&k).copied(),
                };
                if let Some(ready) = hit {
                    if ready > now {
                        wake = Some(wake.map_or(ready, |x| x.min(ready)));
                        note(Blocked::Memory, &mut blocked);
                        continue;
                    }
                    sh.rec.hdn_hits += 1;
                    sh.accumulate(row, k, v);
                    cost = 1 + sh.acc_cost;
                } else {
                    if job.lhs.len() >= lhs_cap {
                        note(Blocked::Lhs, &mut blocked);
                        continue;
                    }
                    let ready = match job.ldn.get_mut(&k) {
                        Some(entry) => {
                            entry.refs += 1;
                            entry.ready
                        }
                        None => {
                            if job.ldn.len() >= ldn_cap {
                                note(Blocked::Ldn, &mut blocked);
                                continue;
                            }
                            let ready = sh.read_row(TrafficClass::MissFetch, k, now)?;
                            job.ldn.insert(k, LdnEntry { ready, refs: 1 });
                            ready
                        }
                    };
                    sh.rec.hdn_misses += 1;
                    job.seq += 1;
                    job.lhs.push(Reverse(LhsEntry {
                        ready,
                        seq: job.seq,
                        row,
                        src: k,
                        value_idx: idx,
                    }));
                    sh.rec.peak_ldn_entries = sh.rec.peak_ldn_entries.max(job.ldn.len());
                    sh.rec.peak_lhs_entries = sh.rec.peak_lhs_entries.max(job.lhs.len());
                    job.window[pos].pending += 1;
                    cost = 1;
                }
            }
        }
        let w = &mut job.window[pos];
        w.next += 1;
        job.chunk_work[w.chunk] -= 1;
        if w.next == w.end && w.pending == 0 {
            job.window.remove(pos);
            retire(sh, job, row);
        }
        pe.now += cost;
        sh.rec.busy_cycles += cost;
        return Ok(());
    }

    // (c) Nothing to do now: advance to the next event.
    let mut next = wake;
    let mut consider = |t: u64| {
        if t > now {
            next = Some(next.map_or(t, |x: u64| x.min(t)));
        }
    };
    if let Some(Reverse(top)) = job.lhs.peek() {
        consider(top.ready);
    }
    if job.window.len() < window_cap && job.next_admit < job.end {
        if let Some(t) = job.chunk_ready[chunk_of(job, job.next_admit)] {
            consider(t);
        }
    }
    if let Some(t) = job.list_ready {
        consider(t);
    }
    if job.done() {
        return Ok(());
    }
    let Some(t) = next else {
        return Err(Error::Config(format!(
            "engine deadlock at cycle {now}: rows {}..{} of job cannot progress",
            job.next_write, job.end
        )));
    };
    let stall = t - now;
    match blocked {
        Blocked::Ldn => sh.rec.stalls.ldn_full += stall,
        Blocked::Lhs => sh.rec.stalls.lhs_full += stall,
        _ => sh.rec.stalls.memory += stall,
    }
    pe.now = t;
    Ok(())
}

/// Runs every job of `p` on `cfg.num_pes` engines sharing one channel.
pub(crate) fn simulate(p: &Problem, cfg: &GrowConfig, dram: &DramConfig) -> Result<(StageRecord, DenseMatrix)> {
    let (n, f) = (p.lhs.num_rows(), p.rhs.num_cols());
    let mut map = AddressMap::new();
    let lhs_at = map.alloc_csr(n, p.lhs.nnz());
    let rhs_at = map.alloc_dense(p.rhs.num_rows(), f);
    let out_at = map.alloc_dense(n, f);
    let mut list_offsets = Vec::new();
    let mut total_ids = 0u64;
    if let Mode::Aggregation { hdn } = p.mode {
        for l in hdn.lists() {
            list_offsets.push(total_ids);
            total_ids += l.len() as u64;
        }
    }
    let list_at = map.alloc(total_ids * HDN_ID_BYTES);
    let mut rec = StageRecord::new(p.layer, p.stage);
    rec.num_pes = cfg.num_pes;
    let mut sh = Shared {
        p,
        cfg,
        mem: MemoryModel::new(*dram)?,
        lhs_at,
        rhs_at,
        out_at,
        list_at,
        list_offsets,
        out: DenseMatrix::zeros(n, f),
        acc_cost: f.div_ceil(cfg.num_macs) as u64,
        expected: BTreeMap::new(),
        rec,
    };
    let lru_rows = if f == 0 { 0 } else { (cfg.hdn_cache_bytes / (f as u64 * VALUE_BYTES)) as usize };
    let mut pes: Vec<Pe> = (0..cfg.num_pes)
        .map(|_| Pe {
            now: 0,
            job: None,
            w_ready: None,
            lru: (matches!(p.mode, Mode::Aggregation { .. }) && cfg.cache_policy == CachePolicy::DemandLru)
                .then(|| LruCache::new(lru_rows)),
        })
        .collect();
    let mut next_job = 0;
    let mut finish = 0u64;
    let mut active: HashSet<usize> = (0..pes.len()).collect();
    while !active.is_empty() {
        let i = *active.iter().min_by_key(|&&i| (pes[i].now, i)).unwrap();
        let pe = &mut pes[i];
        if pe.job.is_none() {
            if next_job == p.jobs.len() {
                active.remove(&i);
                continue;
            }
            start_job(&mut sh, pe, next_job)?;
            next_job += 1;
        }
        step(&mut sh, pe)?;
        if pe.job.as_ref().is_some_and(Job::done) {
            pe.job = None;
            finish = finish.max(pe.now);
        }
    }
    let nnz = p.lhs.nnz() as u64;
    let mut rec = sh.rec;
    rec.cycles = finish;
    rec.mac_ops = nnz * f as u64;
    rec.expected_read_bytes = sh.expected.values().sum();
    rec.traffic = sh.mem.into_stats();
    rec.sram_bytes = spmm_sram_bytes(nnz, f as u64, rec.traffic.bytes_read, rec.traffic.bytes_written);
    Ok((rec, sh.out))
}
