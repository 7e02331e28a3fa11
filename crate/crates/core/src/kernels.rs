//! Untimed reference kernels: row-wise SpMM, the GCN layer and the
//! execution-order MAC analysis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Activation, GcnModelConfig};
use crate::matrix::{CsrMatrix, DenseMatrix};

fn check_chain(lhs_cols: usize, rhs_rows: usize) -> Result<()> {
    if lhs_cols != rhs_rows {
        return Err(Error::Structural(format!(
            "inner dimensions differ: {lhs_cols} vs {rhs_rows}"
        )));
    }
    Ok(())
}

/// Gustavson row-wise product: output row `i` is the sum of `v * rhs[k]`
/// over the non-zeros `(i, k, v)` of `lhs`. Rows are computed in parallel.
pub fn spmm_rowwise(lhs: &CsrMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    check_chain(lhs.num_cols(), rhs.num_rows())?;
    let f = rhs.num_cols();
    let mut out = DenseMatrix::zeros(lhs.num_rows(), f);
    if f == 0 {
        return Ok(out);
    }
    out.values_mut()
        .par_chunks_mut(f)
        .enumerate()
        .for_each(|(i, row)| {
            for (k, v) in lhs.row(i) {
                for (o, &x) in row.iter_mut().zip(rhs.row(k)) {
                    *o += v * x;
                }
            }
        });
    Ok(out)
}

/// Inner-product formulation: `out[i][j] = sum_k lhs[i][k] * rhs[k][j]`,
/// walking row `i` of `lhs` once per output column.
pub fn spmm_inner(lhs: &CsrMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    check_chain(lhs.num_cols(), rhs.num_rows())?;
    let mut out = DenseMatrix::zeros(lhs.num_rows(), rhs.num_cols());
    for i in 0..lhs.num_rows() {
        for j in 0..rhs.num_cols() {
            let dot = lhs.row(i).map(|(k, v)| v * rhs.get(k, j)).sum();
            out.set(i, j, dot);
        }
    }
    Ok(out)
}

/// Outer-product formulation: column `k` of `lhs` times row `k` of `rhs`,
/// accumulated over `k`.
pub fn spmm_outer(lhs: &CsrMatrix, rhs: &DenseMatrix) -> Result<DenseMatrix> {
    check_chain(lhs.num_cols(), rhs.num_rows())?;
    let csc = lhs.to_csc();
    let mut out = DenseMatrix::zeros(lhs.num_rows(), rhs.num_cols());
    for k in 0..csc.num_cols() {
        for (i, v) in csc.col(k) {
            for (o, &x) in out.row_mut(i).iter_mut().zip(rhs.row(k)) {
                *o += v * x;
            }
        }
    }
    Ok(out)
}

/// `σ(Â · (X · W))`, evaluated as two sparse-dense products.
pub fn gcn_layer_forward(
    a_hat: &CsrMatrix,
    x: &CsrMatrix,
    w: &DenseMatrix,
    activation: Activation,
) -> Result<DenseMatrix> {
    if !a_hat.is_square() || a_hat.num_cols() != x.num_rows() {
        return Err(Error::Structural(format!(
            "adjacency {}x{} does not match {} feature rows",
            a_hat.num_rows(),
            a_hat.num_cols(),
            x.num_rows()
        )));
    }
    let xw = spmm_rowwise(x, w)?;
    let out = spmm_rowwise(a_hat, &xw)?;
    Ok(match activation {
        Activation::None => out,
        act => out.map(|v| act.apply(v)),
    })
}

/// Multi-layer forward pass; the activation is applied between layers and
/// not after the last one.
pub fn gcn_forward(
    a_hat: &CsrMatrix,
    x0: &CsrMatrix,
    weights: &[DenseMatrix],
    activation: Activation,
) -> Result<DenseMatrix> {
    let Some((last, hidden)) = weights.split_last() else {
        return Err(Error::Structural("a GCN needs at least one weight matrix".into()));
    };
    let mut x = x0.clone();
    for w in hidden {
        let h = gcn_layer_forward(a_hat, &x, w, activation)?;
        x = CsrMatrix::from_dense(&h);
    }
    gcn_layer_forward(a_hat, &x, last, Activation::None)
}

/// Validates `Â`, `X^(0)` and the weight chain against a model description.
pub fn check_model_chain(
    a_hat: &CsrMatrix,
    x0: &CsrMatrix,
    weights: &[DenseMatrix],
    model: &GcnModelConfig,
) -> Result<()> {
    model.validate()?;
    if !a_hat.is_square() || a_hat.num_rows() != x0.num_rows() {
        return Err(Error::Structural(format!(
            "adjacency {}x{} does not match {} feature rows",
            a_hat.num_rows(),
            a_hat.num_cols(),
            x0.num_rows()
        )));
    }
    if weights.len() != model.num_layers() {
        return Err(Error::Structural(format!(
            "{} weight matrices for a {}-layer model",
            weights.len(),
            model.num_layers()
        )));
    }
    if x0.num_cols() != model.layer_dims[0] {
        return Err(Error::Structural(format!(
            "features have {} columns, model expects {}",
            x0.num_cols(),
            model.layer_dims[0]
        )));
    }
    for (l, w) in weights.iter().enumerate() {
        let (fi, fo) = (model.layer_dims[l], model.layer_dims[l + 1]);
        if (w.num_rows(), w.num_cols()) != (fi, fo) {
            return Err(Error::Structural(format!(
                "layer {l} weights are {}x{}, expected {fi}x{fo}",
                w.num_rows(),
                w.num_cols()
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacCountReport {
    pub order_ax_w: u64,
    pub order_a_xw: u64,
    /// `order_ax_w / order_a_xw`, absent when the denominator is zero.
    pub ratio: Option<f64>,
}

/// MAC counts of the two execution orders of `A · X · W`. The `(A X) W`
/// order treats `A X` as fully dense.
pub fn mac_count(nnz_a: u64, nnz_x: u64, n: u64, f_in: u64, f_out: u64) -> MacCountReport {
    let order_ax_w = nnz_a * f_in + n * f_in * f_out;
    let order_a_xw = nnz_x * f_out + nnz_a * f_out;
    MacCountReport {
        order_ax_w,
        order_a_xw,
        ratio: (order_a_xw > 0).then(|| order_ax_w as f64 / order_a_xw as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_lhs() -> CsrMatrix {
        CsrMatrix::from_entries(3, 3, &[(0, 1, 2.0), (2, 0, 1.0), (2, 2, 3.0)]).unwrap()
    }

    fn example_rhs() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 0.0], vec![0.0, 5.0]]).unwrap()
    }

    #[test]
    fn rowwise_example() {
        let out = spmm_rowwise(&example_lhs(), &example_rhs()).unwrap();
        let want = DenseMatrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 0.0], vec![1.0, 16.0]]).unwrap();
        assert_eq!(out, want);
        assert_eq!(spmm_inner(&example_lhs(), &example_rhs()).unwrap(), want);
        assert_eq!(spmm_outer(&example_lhs(), &example_rhs()).unwrap(), want);
    }

    #[test]
    fn identity_lhs() {
        let b = example_rhs();
        assert_eq!(spmm_rowwise(&CsrMatrix::identity(3), &b).unwrap(), b);
    }

    #[test]
    fn dimension_mismatch() {
        let b = DenseMatrix::zeros(2, 2);
        assert!(matches!(spmm_rowwise(&example_lhs(), &b), Err(Error::Structural(_))));
        assert!(matches!(spmm_outer(&example_lhs(), &b), Err(Error::Structural(_))));
    }

    #[test]
    fn relu_clamps() {
        let a = CsrMatrix::identity(2);
        let x = CsrMatrix::from_entries(2, 1, &[(0, 0, 1.0), (1, 0, 2.0)]).unwrap();
        let w = DenseMatrix::from_rows(&[vec![-1.0, 1.0]]).unwrap();
        let out = gcn_layer_forward(&a, &x, &w, Activation::Relu).unwrap();
        assert!(out.values().iter().all(|&v| v >= 0.0));
        assert_eq!(out.get(1, 1), 2.0);
    }

    #[test]
    fn double_identity() {
        let x = CsrMatrix::from_entries(3, 3, &[(0, 2, 1.5), (2, 1, -2.0)]).unwrap();
        let out = gcn_layer_forward(&CsrMatrix::identity(3), &x, &DenseMatrix::identity(3), Activation::None).unwrap();
        assert_eq!(out, x.to_dense());
    }

    #[test]
    fn cora_layer_one_counts() {
        let r = mac_count(13_264, 49_280, 2708, 1433, 16);
        assert_eq!(r.order_a_xw, 1_000_704);
        assert_eq!(r.order_ax_w, 13_264 * 1433 + 62_089_024);
        assert_eq!(r.order_ax_w, 81_096_336);
        assert!((r.ratio.unwrap() - 81.04).abs() < 0.01);
    }

    #[test]
    fn zero_adjacency_counts() {
        let r = mac_count(0, 40, 10, 8, 4);
        assert_eq!(r.order_a_xw, 160);
        assert_eq!(mac_count(0, 0, 5, 3, 2).ratio, None);
    }
}
