//! Offline graph preprocessing: multilevel k-way partitioning, cluster
//! contiguous relabeling and per-cluster high-degree-node lists.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, DenseMatrix};

/// Maximum cluster size relative to a perfectly balanced split.
pub const BALANCE_FACTOR: f64 = 1.1;

/// HDN ID list capacity of one cluster (entries).
pub const HDN_LIST_ENTRIES: usize = 4096;

/// Clusters such that each holds about one HDN list's worth of nodes.
pub fn default_num_clusters(num_nodes: usize) -> usize {
    num_nodes.div_ceil(HDN_LIST_ENTRIES).max(1)
}

/// Largest cluster size accepted by [`partition_graph`].
pub fn balance_cap(num_nodes: usize, k: usize) -> usize {
    (BALANCE_FACTOR * num_nodes as f64 / k as f64).ceil() as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    num_clusters: usize,
    assignment: Vec<usize>,
    permutation: Vec<usize>,
    cluster_bounds: Vec<(usize, usize)>,
}

impl Partition {
    /// Builds a partition from arbitrary cluster labels. Labels are renumbered
    /// densely in order of first appearance; new IDs order nodes by
    /// (cluster, old ID).
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut dense: HashMap<usize, usize> = HashMap::new();
        let assignment: Vec<usize> = labels
            .iter()
            .map(|&l| {
                let next = dense.len();
                *dense.entry(l).or_insert(next)
            })
            .collect();
        let k = dense.len();
        let mut sizes = vec![0usize; k];
        for &c in &assignment {
            sizes[c] += 1;
        }
        let mut cluster_bounds = Vec::with_capacity(k);
        let mut start = 0;
        for &s in &sizes {
            cluster_bounds.push((start, start + s));
            start += s;
        }
        let mut cursor: Vec<usize> = cluster_bounds.iter().map(|b| b.0).collect();
        let permutation = assignment
            .iter()
            .map(|&c| {
                cursor[c] += 1;
                cursor[c] - 1
            })
            .collect();
        Self {
            num_clusters: k,
            assignment,
            permutation,
            cluster_bounds,
        }
    }

    /// A single cluster holding every node under an arbitrary relabeling.
    pub fn from_permutation(permutation: Vec<usize>) -> Result<Self> {
        let n = permutation.len();
        let mut seen = vec![false; n];
        for &p in &permutation {
            if p >= n || std::mem::replace(&mut seen[p], true) {
                return Err(Error::Structural(format!("{permutation:?} is not a permutation")));
            }
        }
        Ok(Self {
            num_clusters: 1,
            assignment: vec![0; n],
            permutation,
            cluster_bounds: vec![(0, n)],
        })
    }

    /// Every node in cluster 0, identity relabeling.
    pub fn single(num_nodes: usize) -> Self {
        Self::from_labels(&vec![0; num_nodes])
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    /// Old node ID to cluster ID.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Old node ID to new node ID.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// New node ID to old node ID.
    pub fn inverse_permutation(&self) -> Vec<usize> {
        let mut inv = vec![0; self.permutation.len()];
        for (old, &new) in self.permutation.iter().enumerate() {
            inv[new] = old;
        }
        inv
    }

    /// Half-open new-ID range of each cluster.
    pub fn cluster_bounds(&self) -> &[(usize, usize)] {
        &self.cluster_bounds
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        self.cluster_bounds.iter().map(|&(s, e)| e - s).collect()
    }

    pub fn is_identity(&self) -> bool {
        self.permutation.iter().enumerate().all(|(i, &p)| i == p)
    }
}

/// Writes one cluster ID per line, line `i` holding the cluster of old node `i`.
pub fn export_partition(p: &Partition, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(p.num_nodes() * 3);
    for &c in p.assignment() {
        writeln!(out, "{c}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn import_partition(path: &Path, num_nodes: usize) -> Result<Partition> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::with_capacity(num_nodes);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let c = line
            .parse::<usize>()
            .map_err(|_| Error::parse(path, i + 1, format!("invalid cluster id `{line}`")))?;
        labels.push(c);
    }
    if labels.len() != num_nodes {
        return Err(Error::Structural(format!(
            "{}: {} cluster ids for {num_nodes} nodes",
            path.display(),
            labels.len()
        )));
    }
    Ok(Partition::from_labels(&labels))
}

/// Symmetric permutation: `out[p(i)][p(j)] = a[i][j]`.
pub fn relabel(a: &CsrMatrix, p: &Partition) -> Result<CsrMatrix> {
    if !a.is_square() || a.num_rows() != p.num_nodes() {
        return Err(Error::Structural(format!(
            "cannot relabel a {}x{} matrix with a {}-node partition",
            a.num_rows(),
            a.num_cols(),
            p.num_nodes()
        )));
    }
    let perm = p.permutation();
    let entries: Vec<_> = a.entries().map(|(r, c, v)| (perm[r], perm[c], v)).collect();
    CsrMatrix::from_entries(a.num_rows(), a.num_cols(), &entries)
}

/// Moves row `i` of `x` to row `p(i)`.
pub fn permute_rows(x: &CsrMatrix, p: &Partition) -> Result<CsrMatrix> {
    if x.num_rows() != p.num_nodes() {
        return Err(Error::Structural(format!(
            "{} rows cannot be permuted by a {}-node partition",
            x.num_rows(),
            p.num_nodes()
        )));
    }
    let perm = p.permutation();
    let entries: Vec<_> = x.entries().map(|(r, c, v)| (perm[r], c, v)).collect();
    CsrMatrix::from_entries(x.num_rows(), x.num_cols(), &entries)
}

/// Inverse of [`permute_rows`] for dense results: row `p(i)` goes back to `i`.
pub fn unpermute_rows(y: &DenseMatrix, p: &Partition) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(y.num_rows(), y.num_cols());
    for (old, &new) in p.permutation().iter().enumerate() {
        out.row_mut(old).copy_from_slice(y.row(new));
    }
    out
}

/// Undirected edges (off-diagonal pairs) whose endpoints lie in different
/// clusters; `a` is read as a symmetric pattern.
pub fn edge_cut(a: &CsrMatrix, p: &Partition) -> usize {
    let asg = p.assignment();
    let crossing = a
        .entries()
        .filter(|&(r, c, _)| r != c && asg[r] != asg[c])
        .count();
    crossing / 2
}

/// Fraction of non-zeros of `a` whose endpoints share a cluster.
pub fn intra_cluster_fraction(a: &CsrMatrix, p: &Partition) -> f64 {
    if a.nnz() == 0 {
        return 1.0;
    }
    let asg = p.assignment();
    let inside = a.entries().filter(|&(r, c, _)| asg[r] == asg[c]).count();
    inside as f64 / a.nnz() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HdnRanking {
    /// Row non-zeros restricted to the node's own cluster.
    #[default]
    InCluster,
    /// Full row non-zero count.
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct HdnList {
    per_cluster_ids: Vec<Vec<usize>>,
}

impl HdnList {
    pub fn from_lists(per_cluster_ids: Vec<Vec<usize>>) -> Self {
        Self { per_cluster_ids }
    }

    pub fn num_clusters(&self) -> usize {
        self.per_cluster_ids.len()
    }

    pub fn list(&self, cluster: usize) -> &[usize] {
        &self.per_cluster_ids[cluster]
    }

    pub fn lists(&self) -> &[Vec<usize>] {
        &self.per_cluster_ids
    }

    pub fn max_len(&self) -> usize {
        self.per_cluster_ids.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn total_ids(&self) -> usize {
        self.per_cluster_ids.iter().map(Vec::len).sum()
    }

    /// Keeps the first `n` IDs of every list.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            per_cluster_ids: self
                .per_cluster_ids
                .iter()
                .map(|l| l[..l.len().min(n)].to_vec())
                .collect(),
        }
    }

    /// Checks list IDs against the partition's cluster ranges.
    pub fn validate(&self, p: &Partition) -> Result<()> {
        if self.num_clusters() != p.num_clusters() {
            return Err(Error::Structural(format!(
                "HDN lists cover {} clusters, partition has {}",
                self.num_clusters(),
                p.num_clusters()
            )));
        }
        for (c, (list, &(s, e))) in self.per_cluster_ids.iter().zip(p.cluster_bounds()).enumerate() {
            let mut seen = std::collections::HashSet::new();
            for &id in list {
                if id < s || id >= e {
                    return Err(Error::Structural(format!(
                        "HDN id {id} outside cluster {c} range [{s}, {e})"
                    )));
                }
                if !seen.insert(id) {
                    return Err(Error::Structural(format!("duplicate HDN id {id} in cluster {c}")));
                }
            }
        }
        Ok(())
    }
}

/// Top-`n` nodes of every cluster by degree, ties to the lower ID.
/// `a` must already be relabeled by `p`.
pub fn build_hdn_lists(a: &CsrMatrix, p: &Partition, n: usize, ranking: HdnRanking) -> Result<HdnList> {
    if a.num_rows() != p.num_nodes() {
        return Err(Error::Structural(format!(
            "matrix has {} rows, partition {} nodes",
            a.num_rows(),
            p.num_nodes()
        )));
    }
    let lists = p
        .cluster_bounds()
        .iter()
        .map(|&(s, e)| {
            let mut ranked: Vec<(usize, usize)> = (s..e)
                .map(|i| {
                    let deg = match ranking {
                        HdnRanking::Global => a.row_nnz(i),
                        HdnRanking::InCluster => a.row(i).filter(|&(c, _)| c >= s && c < e).count(),
                    };
                    (deg, i)
                })
                .collect();
            ranked.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
            ranked.truncate(n);
            ranked.into_iter().map(|(_, i)| i).collect()
        })
        .collect();
    Ok(HdnList::from_lists(lists))
}

/// One line per cluster: `cluster_id: id1,id2,...` (new IDs).
pub fn write_hdn_lists(h: &HdnList, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (c, list) in h.lists().iter().enumerate() {
        let ids: Vec<String> = list.iter().map(usize::to_string).collect();
        writeln!(out, "{c}: {}", ids.join(",")).unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_hdn_lists(path: &Path) -> Result<HdnList> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lists = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (head, tail) = line
            .split_once(':')
            .ok_or_else(|| Error::parse(path, i + 1, "expected `cluster_id: ids`"))?;
        let c: usize = head
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("invalid cluster id `{}`", head.trim())))?;
        if c != lists.len() {
            return Err(Error::parse(
                path,
                i + 1,
                format!("cluster {c} out of order, expected {}", lists.len()),
            ));
        }
        let ids = tail
            .split(',')
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::parse(path, i + 1, format!("invalid node id `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        lists.push(ids);
    }
    Ok(HdnList::from_lists(lists))
}

// ---------------------------------------------------------------------------
// Multilevel partitioning
// ---------------------------------------------------------------------------

/// Weighted undirected graph in adjacency-list (CSR) form, no self-loops.
#[derive(Debug, Clone)]
struct WGraph {
    xadj: Vec<usize>,
    adj: Vec<usize>,
    ewgt: Vec<u64>,
    vwgt: Vec<u64>,
}

impl WGraph {
    fn from_csr(a: &CsrMatrix) -> Self {
        let n = a.num_rows();
        // Symmetrize the pattern defensively; partitioning sees each
        // undirected edge once per endpoint with weight 1.
        let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (r, c, _) in a.entries() {
            if r != c {
                nbrs[r].push(c);
                nbrs[c].push(r);
            }
        }
        let mut xadj = vec![0];
        let mut adj = Vec::new();
        for list in &mut nbrs {
            list.sort_unstable();
            list.dedup();
            adj.extend_from_slice(list);
            xadj.push(adj.len());
        }
        let ewgt = vec![1; adj.len()];
        Self {
            xadj,
            adj,
            ewgt,
            vwgt: vec![1; n],
        }
    }

    fn n(&self) -> usize {
        self.vwgt.len()
    }

    fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, u64)> + '_ {
        (self.xadj[v]..self.xadj[v + 1]).map(move |e| (self.adj[e], self.ewgt[e]))
    }

    fn total_weight(&self) -> u64 {
        self.vwgt.iter().sum()
    }

    /// Heavy-edge matching; returns the coarse graph and the fine→coarse map.
    fn coarsen(&self, max_vwgt: u64, rng: &mut ChaCha8Rng) -> (WGraph, Vec<usize>) {
        let n = self.n();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut mate = vec![usize::MAX; n];
        for &v in &order {
            if mate[v] != usize::MAX {
                continue;
            }
            let mut best: Option<(u64, usize)> = None;
            for (u, w) in self.neighbors(v) {
                if mate[u] == usize::MAX
                    && self.vwgt[v] + self.vwgt[u] <= max_vwgt
                    && best.map_or(true, |(bw, _)| w > bw)
                {
                    best = Some((w, u));
                }
            }
            match best {
                Some((_, u)) => {
                    mate[v] = u;
                    mate[u] = v;
                }
                None => mate[v] = v,
            }
        }
        let mut cmap = vec![usize::MAX; n];
        let mut nc = 0;
        for v in 0..n {
            if cmap[v] == usize::MAX {
                cmap[v] = nc;
                cmap[mate[v]] = nc;
                nc += 1;
            }
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); nc];
        for v in 0..n {
            members[cmap[v]].push(v);
        }
        let mut xadj = vec![0];
        let mut adj = Vec::new();
        let mut ewgt = Vec::new();
        let mut vwgt = vec![0; nc];
        let mut slot = vec![usize::MAX; nc];
        for (c, mem) in members.iter().enumerate() {
            let start = adj.len();
            for &v in mem {
                vwgt[c] += self.vwgt[v];
                for (u, w) in self.neighbors(v) {
                    let cu = cmap[u];
                    if cu == c {
                        continue;
                    }
                    if slot[cu] == usize::MAX || slot[cu] < start {
                        slot[cu] = adj.len();
                        adj.push(cu);
                        ewgt.push(w);
                    } else {
                        ewgt[slot[cu]] += w;
                    }
                }
            }
            xadj.push(adj.len());
        }
        (WGraph { xadj, adj, ewgt, vwgt }, cmap)
    }

    fn cut(&self, part: &[usize]) -> u64 {
        let mut cut = 0;
        for v in 0..self.n() {
            for (u, w) in self.neighbors(v) {
                if part[u] != part[v] {
                    cut += w;
                }
            }
        }
        cut / 2
    }
}

/// k-way state: cluster weights and member counts.
struct KwayState {
    part: Vec<usize>,
    weight: Vec<u64>,
    count: Vec<usize>,
}

impl KwayState {
    fn new(g: &WGraph, part: Vec<usize>, k: usize) -> Self {
        let mut weight = vec![0; k];
        let mut count = vec![0; k];
        for (v, &c) in part.iter().enumerate() {
            weight[c] += g.vwgt[v];
            count[c] += 1;
        }
        Self { part, weight, count }
    }

    fn mv(&mut self, g: &WGraph, v: usize, to: usize) {
        let from = self.part[v];
        self.weight[from] -= g.vwgt[v];
        self.count[from] -= 1;
        self.weight[to] += g.vwgt[v];
        self.count[to] += 1;
        self.part[v] = to;
    }
}

/// Scratch connectivity of a vertex to each cluster.
struct Conn {
    w: Vec<u64>,
    touched: Vec<usize>,
}

impl Conn {
    fn new(k: usize) -> Self {
        Self {
            w: vec![0; k],
            touched: Vec::new(),
        }
    }

    fn load(&mut self, g: &WGraph, part: &[usize], v: usize) {
        for &c in &self.touched {
            self.w[c] = 0;
        }
        self.touched.clear();
        for (u, w) in g.neighbors(v) {
            let c = part[u];
            if self.w[c] == 0 {
                self.touched.push(c);
            }
            self.w[c] += w;
        }
    }
}

/// Greedy graph growing: clusters are grown one by one from a seed vertex,
/// absorbing the frontier vertex with the largest gain.
fn grow_initial(g: &WGraph, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = g.n();
    let total = g.total_weight();
    let mut part = vec![usize::MAX; n];
    let mut remaining = total;
    let mut unassigned = n;
    for c in 0..k - 1 {
        let clusters_left = (k - c) as u64;
        let target = remaining.div_ceil(clusters_left);
        let mut weight = 0;
        // Leave at least one vertex for each later cluster.
        let reserve = k - 1 - c;
        let mut gain: HashMap<usize, i64> = HashMap::new();
        let mut size = 0;
        while weight < target && unassigned > reserve {
            let pick = if gain.is_empty() {
                let free: Vec<usize> = (0..n).filter(|&v| part[v] == usize::MAX).collect();
                free[rng.gen_range(0..free.len())]
            } else {
                *gain
                    .iter()
                    .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                    .unwrap()
                    .0
            };
            if size > 0 && weight + g.vwgt[pick] > target && gain.len() > 0 {
                // Overshooting: stop if the cluster is already close enough.
                if (weight + g.vwgt[pick] - target) > (target - weight) {
                    break;
                }
            }
            gain.remove(&pick);
            part[pick] = c;
            weight += g.vwgt[pick];
            size += 1;
            unassigned -= 1;
            for (u, w) in g.neighbors(pick) {
                if part[u] != usize::MAX {
                    continue;
                }
                if let Some(e) = gain.get_mut(&u) {
                    *e += 2 * w as i64;
                } else {
                    let fresh = g
                        .neighbors(u)
                        .map(|(x, wx)| match part[x] {
                            p if p == c => wx as i64,
                            usize::MAX => -(wx as i64),
                            _ => 0,
                        })
                        .sum();
                    gain.insert(u, fresh);
                }
            }
        }
        remaining -= weight;
    }
    for p in part.iter_mut() {
        if *p == usize::MAX {
            *p = k - 1;
        }
    }
    part
}

/// Moves vertices out of clusters heavier than `cap`, preferring moves that
/// lose the least cut.
fn rebalance(g: &WGraph, st: &mut KwayState, k: usize, cap: u64) {
    let mut conn = Conn::new(k);
    loop {
        let over: Vec<usize> = (0..k).filter(|&c| st.weight[c] > cap).collect();
        if over.is_empty() {
            return;
        }
        let mut cands: Vec<(i64, usize, usize)> = Vec::new();
        for v in 0..g.n() {
            let from = st.part[v];
            if st.weight[from] <= cap || st.count[from] <= 1 {
                continue;
            }
            conn.load(g, &st.part, v);
            let internal = conn.w[from] as i64;
            let mut best: Option<(i64, usize)> = None;
            for t in 0..k {
                if t == from || st.weight[t] + g.vwgt[v] > cap {
                    continue;
                }
                let gain = conn.w[t] as i64 - internal;
                let better = match best {
                    None => true,
                    Some((bg, bt)) => gain > bg || (gain == bg && st.weight[t] < st.weight[bt]),
                };
                if better {
                    best = Some((gain, t));
                }
            }
            if let Some((gain, t)) = best {
                cands.push((gain, v, t));
            }
        }
        if cands.is_empty() {
            return;
        }
        cands.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut moved = false;
        for (_, v, t) in cands {
            let from = st.part[v];
            if st.weight[from] > cap && st.count[from] > 1 && st.weight[t] + g.vwgt[v] <= cap {
                st.mv(g, v, t);
                moved = true;
            }
        }
        if !moved {
            return;
        }
    }
}

/// Boundary greedy refinement: move vertices to the neighboring cluster with
/// the largest positive gain, or with zero gain when it improves balance.
fn refine(g: &WGraph, st: &mut KwayState, k: usize, cap: u64, rng: &mut ChaCha8Rng) {
    const MAX_PASSES: usize = 32;
    let mut conn = Conn::new(k);
    let mut order: Vec<usize> = (0..g.n()).collect();
    for _ in 0..MAX_PASSES {
        order.shuffle(rng);
        let mut moved = false;
        for &v in &order {
            let from = st.part[v];
            if st.count[from] <= 1 {
                continue;
            }
            conn.load(g, &st.part, v);
            if conn.touched.iter().all(|&c| c == from) {
                continue;
            }
            let internal = conn.w[from] as i64;
            let vw = g.vwgt[v];
            let mut best: Option<(i64, usize)> = None;
            for &t in &conn.touched {
                if t == from || st.weight[t] + vw > cap {
                    continue;
                }
                let gain = conn.w[t] as i64 - internal;
                let ok = gain > 0 || (gain == 0 && st.weight[t] + vw < st.weight[from]);
                if !ok {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bg, bt)) => {
                        gain > bg || (gain == bg && (st.weight[t], t) < (st.weight[bt], bt))
                    }
                };
                if better {
                    best = Some((gain, t));
                }
            }
            if let Some((_, t)) = best {
                st.mv(g, v, t);
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}

/// Gives every empty cluster one vertex taken from the largest cluster.
fn fill_empty(g: &WGraph, st: &mut KwayState, k: usize) {
    for c in 0..k {
        if st.count[c] > 0 {
            continue;
        }
        let donor = (0..k).max_by_key(|&d| (st.count[d], std::cmp::Reverse(d))).unwrap();
        let v = (0..g.n())
            .filter(|&v| st.part[v] == donor)
            .min_by_key(|&v| g.neighbors(v).filter(|&(u, _)| st.part[u] == donor).count())
            .unwrap();
        st.mv(g, v, c);
    }
}

/// Multilevel k-way partition minimizing edge cut under the balance cap
/// `ceil(1.1 n / k)`. Deterministic under `seed`.
pub fn partition_graph(a: &CsrMatrix, k: usize, seed: u64) -> Result<Partition> {
    let n = a.num_rows();
    if !a.is_square() {
        return Err(Error::Structural("partitioning needs a square adjacency matrix".into()));
    }
    if k == 0 || k > n.max(1) {
        return Err(Error::Domain(format!("cannot split {n} nodes into {k} clusters")));
    }
    if k == 1 {
        return Ok(Partition::single(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fine = WGraph::from_csr(a);
    let total = fine.total_weight();
    let max_vwgt = ((1.5 * total as f64 / (4 * k) as f64).ceil() as u64).max(1);

    let mut levels = vec![fine];
    let mut maps: Vec<Vec<usize>> = Vec::new();
    while levels.last().unwrap().n() > 4 * k {
        let g = levels.last().unwrap();
        let (coarse, cmap) = g.coarsen(max_vwgt, &mut rng);
        if coarse.n() as f64 > 0.95 * g.n() as f64 {
            break;
        }
        levels.push(coarse);
        maps.push(cmap);
    }

    let coarsest = levels.last().unwrap();
    let coarse_cap = (BALANCE_FACTOR * total as f64 / k as f64).ceil() as u64;
    let mut best: Option<(u64, u64, Vec<usize>)> = None;
    for _ in 0..4 {
        let part = grow_initial(coarsest, k, &mut rng);
        let mut st = KwayState::new(coarsest, part, k);
        rebalance(coarsest, &mut st, k, coarse_cap);
        refine(coarsest, &mut st, k, coarse_cap, &mut rng);
        let over = st.weight.iter().map(|&w| w.saturating_sub(coarse_cap)).sum::<u64>();
        let cut = coarsest.cut(&st.part);
        if best.as_ref().map_or(true, |(bo, bc, _)| (over, cut) < (*bo, *bc)) {
            best = Some((over, cut, st.part));
        }
    }
    let mut part = best.unwrap().2;

    for level in (0..maps.len()).rev() {
        let g = &levels[level];
        let cmap = &maps[level];
        part = (0..g.n()).map(|v| part[cmap[v]]).collect();
        let mut st = KwayState::new(g, part, k);
        rebalance(g, &mut st, k, coarse_cap);
        refine(g, &mut st, k, coarse_cap, &mut rng);
        part = st.part;
    }

    let g = &levels[0];
    let mut st = KwayState::new(g, part, k);
    fill_empty(g, &mut st, k);
    rebalance(g, &mut st, k, balance_cap(n, k) as u64);
    Ok(Partition::from_labels(&st.part))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{adjacency_from_edges, EdgeMode};

    fn two_triangles() -> CsrMatrix {
        adjacency_from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)], EdgeMode::Symmetrize).unwrap()
    }

    #[test]
    fn labels_are_renumbered_by_first_appearance() {
        let p = Partition::from_labels(&[2, 0, 1]);
        assert_eq!(p.assignment(), &[0, 1, 2]);
        assert_eq!(p.num_clusters(), 3);
    }

    #[test]
    fn permutation_orders_by_cluster_then_id() {
        let p = Partition::from_labels(&[1, 0, 1, 0]);
        // clusters: 0 = {0,2}, 1 = {1,3}
        assert_eq!(p.permutation(), &[0, 2, 1, 3]);
        assert_eq!(p.cluster_bounds(), &[(0, 2), (2, 4)]);
        assert_eq!(p.inverse_permutation(), vec![0, 2, 1, 3]);
    }

    #[test]
    fn disjoint_triangles_split_cleanly() {
        let a = two_triangles();
        let p = partition_graph(&a, 2, 5).unwrap();
        assert_eq!(edge_cut(&a, &p), 0);
        assert_eq!(p.cluster_sizes(), vec![3, 3]);
    }

    #[test]
    fn single_cluster_is_identity() {
        let p = partition_graph(&two_triangles(), 1, 0).unwrap();
        assert!(p.is_identity());
        assert_eq!(p.num_clusters(), 1);
    }

    #[test]
    fn too_many_clusters() {
        assert!(matches!(partition_graph(&two_triangles(), 7, 0), Err(Error::Domain(_))));
        assert!(matches!(partition_graph(&two_triangles(), 0, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn one_cluster_per_node() {
        let p = partition_graph(&two_triangles(), 6, 1).unwrap();
        assert_eq!(p.cluster_sizes(), vec![1; 6]);
    }

    #[test]
    fn relabel_figure_example_round_trips() {
        // Node 1 -> 5, 2 -> 1, 5 -> 2 on a six-node graph.
        let a = adjacency_from_edges(6, &[(0, 1), (1, 2), (2, 5), (3, 4), (4, 5)], EdgeMode::Symmetrize).unwrap();
        let p = Partition::from_permutation(vec![0, 5, 1, 3, 4, 2]).unwrap();
        let b = relabel(&a, &p).unwrap();
        assert_ne!(b, a);
        assert_eq!(b.get(5, 1), Some(1.0)); // old edge (1, 2)
        let inv = Partition::from_permutation(p.inverse_permutation()).unwrap();
        assert_eq!(relabel(&b, &inv).unwrap(), a);
    }

    #[test]
    fn from_permutation_rejects_non_bijection() {
        assert!(Partition::from_permutation(vec![0, 0, 1]).is_err());
        assert!(Partition::from_permutation(vec![0, 3]).is_err());
    }

    #[test]
    fn hdn_lists_rank_by_in_cluster_degree() {
        let a = adjacency_from_edges(
            6,
            &[(0, 1), (0, 2), (0, 3), (3, 4), (4, 5), (4, 1), (3, 5)],
            EdgeMode::Symmetrize,
        )
        .unwrap();
        let p = Partition::single(6);
        let h = build_hdn_lists(&a, &p, 3, HdnRanking::InCluster).unwrap();
        // degrees: 0:3, 1:2, 2:1, 3:3, 4:3, 5:2
        assert_eq!(h.list(0), &[0, 3, 4]);
        let all = build_hdn_lists(&a, &p, 10, HdnRanking::InCluster).unwrap();
        assert_eq!(all.list(0).len(), 6);
        assert!(build_hdn_lists(&a, &p, 0, HdnRanking::Global).unwrap().list(0).is_empty());
    }

    #[test]
    fn hdn_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("hdn.txt");
        let h = HdnList::from_lists(vec![vec![0, 3, 4], vec![], vec![7]]);
        write_hdn_lists(&h, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "0: 0,3,4\n1: \n2: 7\n");
        assert_eq!(read_hdn_lists(&path).unwrap(), h);
    }

    #[test]
    fn partition_file_import() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.txt");
        fs::write(&path, "0\n0\n1\n").unwrap();
        let p = import_partition(&path, 3).unwrap();
        assert_eq!(p.cluster_bounds(), &[(0, 2), (2, 3)]);
        assert!(matches!(import_partition(&path, 4), Err(Error::Structural(_))));
        fs::write(&path, "0\nx\n1\n").unwrap();
        assert!(matches!(import_partition(&path, 3), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn hdn_validation_catches_out_of_range() {
        let p = Partition::from_labels(&[0, 0, 1]);
        assert!(HdnList::from_lists(vec![vec![1], vec![2]]).validate(&p).is_ok());
        assert!(HdnList::from_lists(vec![vec![2], vec![]]).validate(&p).is_err());
        assert!(HdnList::from_lists(vec![vec![0, 0], vec![]]).validate(&p).is_err());
    }

    #[test]
    fn sbm_blocks_are_recovered() {
        use crate::ingest::{generate_graph_with_labels, SyntheticGraphSpec};
        let (a, blocks) = generate_graph_with_labels(&SyntheticGraphSpec::sbm(900, 10.0, 3, 20.0, 11)).unwrap();
        let p = partition_graph(&a, 3, 2).unwrap();
        let asg = p.assignment();
        let (mut same, mut together) = (0u64, 0u64);
        for i in 0..900 {
            for j in (i + 1)..900 {
                if blocks[i] == blocks[j] {
                    same += 1;
                    together += (asg[i] == asg[j]) as u64;
                }
            }
        }
        assert!(together as f64 >= 0.9 * same as f64, "{together}/{same}");
        assert!(p.cluster_sizes().iter().all(|&s| s <= balance_cap(900, 3)));
    }
}
