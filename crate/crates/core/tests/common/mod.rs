//! Untimed reference computations shared by the integration suites.
#![allow(dead_code)]

use grow_core::ingest::Activation;
use grow_core::{CsrMatrix, DenseMatrix};

/// Straight triple loop over dense copies.
pub fn dense_matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.num_rows(), b.num_cols());
    for i in 0..a.num_rows() {
        for k in 0..a.num_cols() {
            let x = a.get(i, k);
            if x == 0.0 {
                continue;
            }
            for (o, &y) in out.row_mut(i).iter_mut().zip(b.row(k)) {
                *o += x * y;
            }
        }
    }
    out
}

/// Dense GCN forward pass: `Â (X W)` per layer, activation between layers.
pub fn dense_gcn(a_hat: &CsrMatrix, x0: &CsrMatrix, weights: &[DenseMatrix], act: Activation) -> DenseMatrix {
    let a = a_hat.to_dense();
    let mut x = x0.to_dense();
    for (l, w) in weights.iter().enumerate() {
        let y = dense_matmul(&a, &dense_matmul(&x, w));
        x = if l + 1 < weights.len() { y.map(|v| act.apply(v)) } else { y };
    }
    x
}

/// Multiply-accumulates performed by the two association orders of
/// `A · X · W`, counted by running them. A sparse left operand contributes
/// one MAC per stored entry and output column; `A X` is materialized dense.
pub fn instrumented_counts(a: &CsrMatrix, x: &CsrMatrix, f_out: usize) -> (u64, u64) {
    let n = a.num_rows();
    let f_in = x.num_cols();
    let w = DenseMatrix::from_vec(f_in, f_out, vec![1.0; f_in * f_out]).unwrap();
    let xd = x.to_dense();
    let mut macs = 0u64;

    let mut ax = DenseMatrix::zeros(n, f_in);
    for (i, k, v) in a.entries() {
        for j in 0..f_in {
            let cur = ax.get(i, j);
            ax.set(i, j, cur + v * xd.get(k, j));
            macs += 1;
        }
    }
    let mut axw = DenseMatrix::zeros(n, f_out);
    for i in 0..n {
        for k in 0..f_in {
            for j in 0..f_out {
                let cur = axw.get(i, j);
                axw.set(i, j, cur + ax.get(i, k) * w.get(k, j));
                macs += 1;
            }
        }
    }
    let order_ax_w = macs;

    macs = 0;
    let mut xw = DenseMatrix::zeros(n, f_out);
    for (i, k, v) in x.entries() {
        for j in 0..f_out {
            let cur = xw.get(i, j);
            xw.set(i, j, cur + v * w.get(k, j));
            macs += 1;
        }
    }
    let mut out = DenseMatrix::zeros(n, f_out);
    for (i, k, v) in a.entries() {
        for j in 0..f_out {
            let cur = out.get(i, j);
            out.set(i, j, cur + v * xw.get(k, j));
            macs += 1;
        }
    }
    assert!(out.relative_error(&axw) <= 1e-9, "both orders compute the same product");
    (order_ax_w, macs)
}
