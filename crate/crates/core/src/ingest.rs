//! Dataset ingestion: edge lists, feature matrices, adjacency normalization
//! and synthetic graph generators.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    None,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::None => v,
        }
    }
}

/// Layer chain of a GCN, e.g. `[1433, 16, 7]` for a two-layer model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModelConfig {
    pub layer_dims: Vec<usize>,
    /// Applied between layers (not after the last one).
    pub activation: Activation,
    /// Density of the synthesized input features X^(0).
    pub feature_density: f64,
}

impl GcnModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::Domain(
                "a GCN model needs at least an input and an output dimension".into(),
            ));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::Domain("layer dimensions must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.feature_density) {
            return Err(Error::Domain(format!(
                "feature density {} outside [0,1]",
                self.feature_density
            )));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    Directed,
    Symmetrize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    PowerLaw,
    Sbm,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGraphSpec {
    pub kind: GraphKind,
    pub num_nodes: usize,
    pub avg_degree: f64,
    #[serde(default = "default_blocks")]
    pub num_blocks: usize,
    #[serde(default = "default_ratio")]
    pub intra_block_prob_ratio: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_blocks() -> usize {
    1
}

fn default_ratio() -> f64 {
    1.0
}

impl SyntheticGraphSpec {
    pub fn power_law(num_nodes: usize, avg_degree: f64, seed: u64) -> Self {
        Self {
            kind: GraphKind::PowerLaw,
            num_nodes,
            avg_degree,
            num_blocks: 1,
            intra_block_prob_ratio: 1.0,
            seed,
        }
    }

    pub fn uniform(num_nodes: usize, avg_degree: f64, seed: u64) -> Self {
        Self {
            kind: GraphKind::Uniform,
            ..Self::power_law(num_nodes, avg_degree, seed)
        }
    }

    pub fn sbm(num_nodes: usize, avg_degree: f64, num_blocks: usize, ratio: f64, seed: u64) -> Self {
        Self {
            kind: GraphKind::Sbm,
            num_nodes,
            avg_degree,
            num_blocks,
            intra_block_prob_ratio: ratio,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_nodes < 2 {
            return Err(Error::Domain("synthetic graphs need at least 2 nodes".into()));
        }
        if !(self.avg_degree >= 0.0 && self.avg_degree < self.num_nodes as f64) {
            return Err(Error::Domain(format!(
                "average degree {} must lie in [0, num_nodes)",
                self.avg_degree
            )));
        }
        if self.kind == GraphKind::Sbm {
            if self.num_blocks == 0 || self.num_blocks > self.num_nodes {
                return Err(Error::Domain(format!(
                    "block count {} invalid for {} nodes",
                    self.num_blocks, self.num_nodes
                )));
            }
            if !(self.intra_block_prob_ratio >= 1.0) {
                return Err(Error::Domain("intra-block probability ratio must be >= 1".into()));
            }
        }
        Ok(())
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a whitespace-separated `src dst` edge list (0-indexed, `#` comments).
///
/// With `num_nodes = None` the dimension is one past the largest node ID.
/// Duplicate edges collapse; self-loops are kept.
pub fn load_edge_list(path: &Path, mode: EdgeMode, num_nodes: Option<usize>) -> Result<CsrMatrix> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::parse(
                path,
                lineno + 1,
                format!("expected `src dst`, got {} fields", toks.len()),
            ));
        }
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::parse(path, lineno + 1, format!("invalid node id `{t}`")))
        };
        let (s, d) = (parse(toks[0])?, parse(toks[1])?);
        if let Some(n) = num_nodes {
            if s >= n || d >= n {
                return Err(Error::Structural(format!(
                    "{}:{}: node id {} exceeds declared bound {n}",
                    path.display(),
                    lineno + 1,
                    s.max(d)
                )));
            }
        }
        edges.push((s, d));
    }
    let n = num_nodes.unwrap_or_else(|| edges.iter().map(|&(s, d)| s.max(d) + 1).max().unwrap_or(0));
    adjacency_from_edges(n, &edges, mode)
}

/// Binary adjacency matrix from an edge list; duplicates are merged.
pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize)], mode: EdgeMode) -> Result<CsrMatrix> {
    let mut set = BTreeSet::new();
    for &(s, d) in edges {
        set.insert((s, d));
        if mode == EdgeMode::Symmetrize {
            set.insert((d, s));
        }
    }
    let entries: Vec<_> = set.into_iter().map(|(s, d)| (s, d, 1.0)).collect();
    CsrMatrix::from_entries(n, n, &entries)
}

/// A + A^T pattern (values 1.0), keeping self-loops.
pub fn symmetrize(a: &CsrMatrix) -> Result<CsrMatrix> {
    let edges: Vec<_> = a.entries().map(|(r, c, _)| (r, c)).collect();
    adjacency_from_edges(a.num_rows(), &edges, EdgeMode::Symmetrize)
}

/// A + I, adding 1.0 on the diagonal (merging with existing self-loops).
pub fn add_self_loops(a: &CsrMatrix) -> Result<CsrMatrix> {
    if !a.is_square() {
        return Err(Error::Structural("self-loops need a square matrix".into()));
    }
    let mut entries: Vec<_> = a.entries().filter(|&(r, c, _)| r != c).collect();
    for i in 0..a.num_rows() {
        let v = a.get(i, i).unwrap_or(0.0) + 1.0;
        if v != 0.0 {
            entries.push((i, i, v));
        }
    }
    CsrMatrix::from_entries(a.num_rows(), a.num_cols(), &entries)
}

/// Symmetric GCN normalization `D^-1/2 (A + I) D^-1/2`, with `D` the row
/// sums of `A + I`.
pub fn normalize_adjacency(a: &CsrMatrix) -> Result<CsrMatrix> {
    let a_tilde = add_self_loops(a)?;
    let degree: Vec<f64> = (0..a_tilde.num_rows())
        .map(|r| a_tilde.row(r).map(|(_, v)| v).sum())
        .collect();
    let entries: Vec<_> = a_tilde
        .entries()
        .map(|(r, c, v)| (r, c, v / (degree[r] * degree[c]).sqrt()))
        .collect();
    CsrMatrix::from_entries(a_tilde.num_rows(), a_tilde.num_cols(), &entries)
}

/// Loads `row,col,value` triples into an `num_nodes x feature_len` matrix.
pub fn load_features_csv(path: &Path, num_nodes: usize, feature_len: usize) -> Result<CsrMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let mut entries = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(i + 1, |p| p.line() as usize);
            Error::parse(path, line, e.to_string())
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.len() != 3 {
            return Err(Error::parse(path, line, "expected `row,col,value`"));
        }
        let r: usize = rec[0]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid row `{}`", &rec[0])))?;
        let c: usize = rec[1]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid column `{}`", &rec[1])))?;
        let v: f64 = rec[2]
            .parse()
            .map_err(|_| Error::parse(path, line, format!("invalid value `{}`", &rec[2])))?;
        if v != 0.0 {
            entries.push((r, c, v));
        }
    }
    CsrMatrix::from_entries(num_nodes, feature_len, &entries)
}

/// Synthesizes a feature matrix with exactly `round(density * n * f)`
/// non-zeros at uniformly random positions, values uniform in (0, 1].
pub fn synthesize_features(
    num_nodes: usize,
    feature_len: usize,
    density: f64,
    seed: u64,
) -> Result<CsrMatrix> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::Domain(format!("feature density {density} outside [0,1]")));
    }
    let cells = num_nodes * feature_len;
    let nnz = ((density * cells as f64).round() as usize).min(cells);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = if nnz == cells {
        (0..cells).collect::<Vec<_>>()
    } else {
        index::sample(&mut rng, cells, nnz).into_vec()
    };
    positions.sort_unstable();
    let mut row_ptr = vec![0usize; num_nodes + 1];
    let mut col_idx = Vec::with_capacity(nnz);
    let mut values = Vec::with_capacity(nnz);
    for p in positions {
        row_ptr[p / feature_len + 1] += 1;
        col_idx.push(p % feature_len);
        values.push(1.0 - rng.gen::<f64>());
    }
    for r in 0..num_nodes {
        row_ptr[r + 1] += row_ptr[r];
    }
    CsrMatrix::from_raw_parts(num_nodes, feature_len, row_ptr, col_idx, values)
}

/// Either a CSV feature file or synthesis parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSource<'a> {
    Csv(&'a Path),
    Synthetic { density: f64, seed: u64 },
}

pub fn load_features(source: FeatureSource<'_>, num_nodes: usize, feature_len: usize) -> Result<CsrMatrix> {
    match source {
        FeatureSource::Csv(p) => load_features_csv(p, num_nodes, feature_len),
        FeatureSource::Synthetic { density, seed } => {
            synthesize_features(num_nodes, feature_len, density, seed)
        }
    }
}

/// Generates a symmetric, loop-free synthetic adjacency matrix.
pub fn generate_graph(spec: &SyntheticGraphSpec) -> Result<CsrMatrix> {
    Ok(generate_graph_with_labels(spec)?.0)
}

/// Like [`generate_graph`], also returning each node's generator block
/// (all zeros for non-SBM kinds).
pub fn generate_graph_with_labels(spec: &SyntheticGraphSpec) -> Result<(CsrMatrix, Vec<usize>)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_nodes;
    let (edges, labels) = match spec.kind {
        GraphKind::PowerLaw => (preferential_attachment(n, spec.avg_degree, &mut rng), vec![0; n]),
        GraphKind::Uniform => {
            let p = spec.avg_degree / (n - 1) as f64;
            let mut edges = Vec::new();
            sample_triangle(n, p, &mut rng, |i, j| edges.push((i, j)));
            (edges, vec![0; n])
        }
        GraphKind::Sbm => stochastic_block(spec, &mut rng)?,
    };
    // Relabel so that node IDs carry no generator order (hub age, block id).
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let edges: Vec<_> = edges.into_iter().map(|(u, v)| (perm[u], perm[v])).collect();
    let mut relabeled = vec![0; n];
    for (old, &new) in perm.iter().enumerate() {
        relabeled[new] = labels[old];
    }
    Ok((adjacency_from_edges(n, &edges, EdgeMode::Symmetrize)?, relabeled))
}

/// Barabási–Albert growth with `m = round(avg_degree / 2)` edges per new node,
/// seeded from an (m+1)-clique.
fn preferential_attachment(n: usize, avg_degree: f64, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let m = ((avg_degree / 2.0).round() as usize).clamp(1, n - 1);
    let core = (m + 1).min(n);
    let mut edges = Vec::new();
    // Each endpoint appears once per incident edge: sampling uniformly from
    // this list is sampling proportional to degree.
    let mut endpoints = Vec::new();
    for i in 0..core {
        for j in (i + 1)..core {
            edges.push((i, j));
            endpoints.push(i);
            endpoints.push(j);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for v in core..n {
        targets.clear();
        while targets.len() < m {
            let t = endpoints[rng.gen_range(0..endpoints.len())];
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((v, t));
            endpoints.push(v);
            endpoints.push(t);
        }
    }
    edges
}

fn stochastic_block(
    spec: &SyntheticGraphSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<(usize, usize)>, Vec<usize>)> {
    let n = spec.num_nodes;
    let k = spec.num_blocks;
    let block_size = n as f64 / k as f64;
    let ratio = spec.intra_block_prob_ratio;
    // Expected degree = p_in (b - 1) + p_out (n - b) with p_in = ratio * p_out.
    let p_out = spec.avg_degree / (ratio * (block_size - 1.0) + (n as f64 - block_size));
    let p_in = ratio * p_out;
    if !(p_in <= 1.0) {
        return Err(Error::Domain(format!(
            "SBM intra-block probability {p_in:.3} exceeds 1: expected degree too large for block size {block_size:.1}"
        )));
    }
    // Contiguous blocks here; the caller's relabeling scatters them.
    let bounds: Vec<usize> = (0..=k).map(|b| b * n / k).collect();
    let labels: Vec<usize> = (0..k)
        .flat_map(|b| std::iter::repeat(b).take(bounds[b + 1] - bounds[b]))
        .collect();
    let mut edges = Vec::new();
    for a in 0..k {
        let (a0, a1) = (bounds[a], bounds[a + 1]);
        sample_triangle(a1 - a0, p_in, rng, |i, j| edges.push((a0 + i, a0 + j)));
        for b in (a + 1)..k {
            let (b0, b1) = (bounds[b], bounds[b + 1]);
            sample_rectangle(a1 - a0, b1 - b0, p_out, rng, |i, j| edges.push((a0 + i, b0 + j)));
        }
    }
    Ok((edges, labels))
}

/// Geometric skip length for Bernoulli(p) sampling: the number of failures
/// before the next success.
fn skip(p: f64, rng: &mut ChaCha8Rng) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    let u: f64 = 1.0 - rng.gen::<f64>();
    (u.ln() / (1.0 - p).ln()).floor() as u64
}

/// Includes each unordered pair `i < j` of `0..n` independently with
/// probability `p`.
fn sample_triangle(n: usize, p: f64, rng: &mut ChaCha8Rng, mut emit: impl FnMut(usize, usize)) {
    if p <= 0.0 || n < 2 {
        return;
    }
    let total = (n as u64) * (n as u64 - 1) / 2;
    let mut idx = skip(p, rng);
    // Walk rows j = 1.. with i < j; row j holds j pairs.
    let (mut j, mut row_start) = (1u64, 0u64);
    while idx < total {
        while idx >= row_start + j {
            row_start += j;
            j += 1;
        }
        emit((idx - row_start) as usize, j as usize);
        idx += 1 + skip(p, rng);
    }
}

fn sample_rectangle(
    rows: usize,
    cols: usize,
    p: f64,
    rng: &mut ChaCha8Rng,
    mut emit: impl FnMut(usize, usize),
) {
    if p <= 0.0 || rows == 0 || cols == 0 {
        return;
    }
    let total = rows as u64 * cols as u64;
    let mut idx = skip(p, rng);
    while idx < total {
        emit((idx / cols as u64) as usize, (idx % cols as u64) as usize);
        idx += 1 + skip(p, rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::compute_stats;
    use std::io::Write;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn directed_edge_list() {
        let f = write_tmp("0 1\n1 0\n");
        let a = load_edge_list(f.path(), EdgeMode::Directed, None).unwrap();
        assert_eq!((a.num_rows(), a.nnz()), (2, 2));
    }

    #[test]
    fn symmetrized_edge_list() {
        let f = write_tmp("# comment\n0 1\n\n");
        let a = load_edge_list(f.path(), EdgeMode::Symmetrize, None).unwrap();
        assert_eq!(a.nnz(), 2);
        assert!(a.is_symmetric());
    }

    #[test]
    fn edge_list_keeps_self_loops_and_dedups() {
        let f = write_tmp("2 2\n0 1\n0 1\n");
        let a = load_edge_list(f.path(), EdgeMode::Directed, None).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(2, 2), Some(1.0));
    }

    #[test]
    fn malformed_edge_line_reports_line() {
        let f = write_tmp("0 1\n1 x\n");
        match load_edge_list(f.path(), EdgeMode::Directed, None) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("0 1 2\n");
        assert!(matches!(
            load_edge_list(f.path(), EdgeMode::Directed, None),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn edge_list_bound_violation() {
        let f = write_tmp("0 5\n");
        assert!(matches!(
            load_edge_list(f.path(), EdgeMode::Directed, Some(3)),
            Err(Error::Structural(_))
        ));
    }

    #[test]
    fn empty_edge_list() {
        let f = write_tmp("# nothing\n");
        let a = load_edge_list(f.path(), EdgeMode::Directed, None).unwrap();
        assert_eq!(a.num_rows(), 0);
        let s = compute_stats(&a).unwrap();
        assert_eq!(s.num_edges, 0);
    }

    #[test]
    fn normalize_two_nodes() {
        let a = adjacency_from_edges(2, &[(0, 1)], EdgeMode::Symmetrize).unwrap();
        let n = normalize_adjacency(&a).unwrap();
        for (_, _, v) in n.entries() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        assert_eq!(n.nnz(), 4);
    }

    #[test]
    fn normalize_isolated_node() {
        let n = normalize_adjacency(&CsrMatrix::zeros(1, 1)).unwrap();
        assert_eq!(n.get(0, 0), Some(1.0));
    }

    #[test]
    fn feature_csv() {
        let f = write_tmp("0,1,0.5\n2,0,1.5\n");
        let x = load_features_csv(f.path(), 3, 2).unwrap();
        assert_eq!(x.nnz(), 2);
        assert_eq!(x.get(2, 0), Some(1.5));
        let bad = write_tmp("0,1\n");
        assert!(matches!(load_features_csv(bad.path(), 3, 2), Err(Error::Parse { .. })));
    }

    #[test]
    fn feature_density_bounds() {
        assert!(matches!(synthesize_features(4, 4, 1.5, 0), Err(Error::Domain(_))));
        assert_eq!(synthesize_features(4, 4, 0.0, 0).unwrap().nnz(), 0);
        let dense = synthesize_features(5, 7, 1.0, 0).unwrap();
        assert_eq!(dense.nnz(), 35);
        assert!(dense.values().iter().all(|&v| v > 0.0 && v <= 1.0));
    }

    #[test]
    fn cora_feature_count_rounds_exactly() {
        // round(0.0127 * 2708 * 1433) = round(49283.16)
        let x = synthesize_features(2708, 1433, 0.0127, 3).unwrap();
        assert_eq!(x.nnz(), 49_283);
    }

    #[test]
    fn features_are_seeded() {
        let a = synthesize_features(50, 20, 0.2, 9).unwrap();
        let b = synthesize_features(50, 20, 0.2, 9).unwrap();
        let c = synthesize_features(50, 20, 0.2, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sbm_infeasible_is_domain_error() {
        let spec = SyntheticGraphSpec::sbm(20, 15.0, 10, 50.0, 1);
        assert!(matches!(generate_graph(&spec), Err(Error::Domain(_))));
    }

    #[test]
    fn spec_validation() {
        assert!(generate_graph(&SyntheticGraphSpec::uniform(1, 0.0, 0)).is_err());
        assert!(generate_graph(&SyntheticGraphSpec::uniform(10, 10.0, 0)).is_err());
    }

    #[test]
    fn triangle_sampler_full_probability() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pairs = Vec::new();
        sample_triangle(5, 1.0, &mut rng, |i, j| pairs.push((i, j)));
        assert_eq!(pairs.len(), 10);
        assert!(pairs.iter().all(|&(i, j)| i < j && j < 5));
        let mut dedup = pairs.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 10);
    }
}
