//! Sparse (CSR/CSC) and dense matrix containers.
//!
//! All containers validate their invariants at construction and are immutable
//! afterwards, so they can be shared read-only between concurrent simulations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compressed sparse row matrix with sorted, duplicate-free column indices
/// and finite non-zero values.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    num_rows: usize,
    num_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Compressed sparse column matrix; the column-major mirror of [`CsrMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    num_rows: usize,
    num_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Row-major dense matrix.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenseMatrix {
    num_rows: usize,
    num_cols: usize,
    values: Vec<f64>,
}

fn check_value(v: f64, r: usize, c: usize) -> Result<()> {
    if !v.is_finite() || v == 0.0 {
        return Err(Error::Domain(format!(
            "entry ({r},{c}) has value {v}; stored values must be finite and non-zero"
        )));
    }
    Ok(())
}

/// Shared validation for the compressed layouts: `ptr` over `major` lanes,
/// `idx` entries bounded by `minor`.
fn validate_compressed(
    major: usize,
    minor: usize,
    ptr: &[usize],
    idx: &[usize],
    values: &[f64],
    lane: &str,
) -> Result<()> {
    if ptr.len() != major + 1 {
        return Err(Error::Structural(format!(
            "{lane} pointer array has length {}, expected {}",
            ptr.len(),
            major + 1
        )));
    }
    if ptr[0] != 0 {
        return Err(Error::Structural(format!("{lane} pointer array must start at 0")));
    }
    if idx.len() != values.len() || ptr[major] != idx.len() {
        return Err(Error::Structural(format!(
            "{lane} pointer end {} does not match index/value lengths {}/{}",
            ptr[major],
            idx.len(),
            values.len()
        )));
    }
    for m in 0..major {
        if ptr[m] > ptr[m + 1] {
            return Err(Error::Structural(format!("{lane} pointer array decreases at {m}")));
        }
        let lane_idx = &idx[ptr[m]..ptr[m + 1]];
        for (pos, &i) in lane_idx.iter().enumerate() {
            if i >= minor {
                return Err(Error::Structural(format!(
                    "index {i} in {lane} {m} is out of range (bound {minor})"
                )));
            }
            if pos > 0 && lane_idx[pos - 1] >= i {
                return Err(Error::Structural(format!(
                    "indices in {lane} {m} are not strictly increasing"
                )));
            }
            check_value(values[ptr[m] + pos], m, i)?;
        }
    }
    Ok(())
}

impl CsrMatrix {
    /// Builds a CSR matrix from unordered `(row, col, value)` triples.
    ///
    /// Out-of-range indices and duplicate coordinates are structural errors;
    /// zero or non-finite values are domain errors.
    pub fn from_entries(
        num_rows: usize,
        num_cols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, f64)> = entries.to_vec();
        for &(r, c, v) in &sorted {
            if r >= num_rows || c >= num_cols {
                return Err(Error::Structural(format!(
                    "entry ({r},{c}) outside {num_rows}x{num_cols} matrix"
                )));
            }
            check_value(v, r, c)?;
        }
        sorted.sort_unstable_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = sorted
            .windows(2)
            .find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1)
        {
            return Err(Error::Structural(format!(
                "duplicate coordinate ({},{})",
                w[0].0, w[0].1
            )));
        }
        let mut row_ptr = vec![0usize; num_rows + 1];
        for &(r, _, _) in &sorted {
            row_ptr[r + 1] += 1;
        }
        for r in 0..num_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col_idx = sorted.iter().map(|e| e.1).collect();
        let values = sorted.iter().map(|e| e.2).collect();
        Ok(Self {
            num_rows,
            num_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn from_raw_parts(
        num_rows: usize,
        num_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        validate_compressed(num_rows, num_cols, &row_ptr, &col_idx, &values, "row")?;
        Ok(Self {
            num_rows,
            num_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Square identity matrix.
    pub fn identity(n: usize) -> Self {
        Self {
            num_rows: n,
            num_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(num_rows: usize, num_cols: usize) -> Self {
        Self {
            num_rows,
            num_cols,
            row_ptr: vec![0; num_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Sparsifies a dense matrix, dropping exact zeros.
    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut row_ptr = Vec::with_capacity(d.num_rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for r in 0..d.num_rows {
            for (c, &v) in d.row(r).iter().enumerate() {
                if v != 0.0 {
                    col_idx.push(c);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            num_rows: d.num_rows,
            num_cols: d.num_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_nnz(&self, r: usize) -> usize {
        self.row_ptr[r + 1] - self.row_ptr[r]
    }

    /// `(col, value)` pairs of row `r` in increasing column order.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.num_rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .binary_search(&c)
            .ok()
            .map(|p| self.values[span.start + p])
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.num_rows, self.num_cols);
        for (r, c, v) in self.entries() {
            d.set(r, c, v);
        }
        d
    }

    pub fn to_csc(&self) -> CscMatrix {
        let mut col_ptr = vec![0usize; self.num_cols + 1];
        for &c in &self.col_idx {
            col_ptr[c + 1] += 1;
        }
        for c in 0..self.num_cols {
            col_ptr[c + 1] += col_ptr[c];
        }
        let mut next = col_ptr.clone();
        let mut row_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Rows are visited in increasing order, so each column's row indices
        // come out sorted.
        for (r, c, v) in self.entries() {
            let slot = next[c];
            row_idx[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        CscMatrix {
            num_rows: self.num_rows,
            num_cols: self.num_cols,
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let csc = self.to_csc();
        CsrMatrix {
            num_rows: self.num_cols,
            num_cols: self.num_rows,
            row_ptr: csc.col_ptr,
            col_idx: csc.row_idx,
            values: csc.values,
        }
    }

    pub fn is_square(&self) -> bool {
        self.num_rows == self.num_cols
    }

    /// Structural and numerical symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.is_square() && self.transpose() == *self
    }
}

impl CscMatrix {
    pub fn from_raw_parts(
        num_rows: usize,
        num_cols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        validate_compressed(num_cols, num_rows, &col_ptr, &row_idx, &values, "column")?;
        Ok(Self {
            num_rows,
            num_cols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(row, value)` pairs of column `c` in increasing row order.
    pub fn col(&self, c: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.col_ptr[c]..self.col_ptr[c + 1];
        self.row_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn to_csr(&self) -> CsrMatrix {
        // The CSC arrays of M are the CSR arrays of M^T.
        let t = CsrMatrix {
            num_rows: self.num_cols,
            num_cols: self.num_rows,
            row_ptr: self.col_ptr.clone(),
            col_idx: self.row_idx.clone(),
            values: self.values.clone(),
        };
        t.transpose()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.num_rows, self.num_cols);
        for c in 0..self.num_cols {
            for (r, v) in self.col(c) {
                d.set(r, c, v);
            }
        }
        d
    }
}

impl DenseMatrix {
    pub fn zeros(num_rows: usize, num_cols: usize) -> Self {
        Self {
            num_rows,
            num_cols,
            values: vec![0.0; num_rows * num_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut d = Self::zeros(n, n);
        for i in 0..n {
            d.set(i, i, 1.0);
        }
        d
    }

    pub fn from_vec(num_rows: usize, num_cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_rows * num_cols {
            return Err(Error::Structural(format!(
                "dense {num_rows}x{num_cols} needs {} values, got {}",
                num_rows * num_cols,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("dense value {v} is not finite")));
        }
        Ok(Self {
            num_rows,
            num_cols,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_cols) {
            return Err(Error::Structural("ragged dense rows".into()));
        }
        Self::from_vec(rows.len(), num_cols, rows.concat())
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.num_cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.num_cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.num_cols..(r + 1) * self.num_cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.num_cols..(r + 1) * self.num_cols]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            num_rows: self.num_rows,
            num_cols: self.num_cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Maximum absolute elementwise difference divided by the largest
    /// magnitude in `reference` (norm-wise relative error). Dimension
    /// mismatches report infinity.
    pub fn relative_error(&self, reference: &DenseMatrix) -> f64 {
        if self.num_rows != reference.num_rows || self.num_cols != reference.num_cols {
            return f64::INFINITY;
        }
        let scale = reference
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = self
            .values
            .iter()
            .zip(&reference.values)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Structural statistics of a square adjacency matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub density: f64,
    pub avg_degree: f64,
    /// Row degree -> number of nodes with that degree.
    pub degree_histogram: BTreeMap<usize, usize>,
}

pub fn compute_stats(m: &CsrMatrix) -> Result<GraphStats> {
    if !m.is_square() {
        return Err(Error::Domain(format!(
            "graph statistics need a square adjacency matrix, got {}x{}",
            m.num_rows(),
            m.num_cols()
        )));
    }
    let n = m.num_rows();
    let e = m.nnz();
    let mut degree_histogram = BTreeMap::new();
    for r in 0..n {
        *degree_histogram.entry(m.row_nnz(r)).or_insert(0) += 1;
    }
    let (density, avg_degree) = if n == 0 {
        (0.0, 0.0)
    } else {
        let nf = n as f64;
        (e as f64 / (nf * nf), e as f64 / nf)
    };
    Ok(GraphStats {
        num_nodes: n,
        num_edges: e,
        density,
        avg_degree,
        degree_histogram,
    })
}
