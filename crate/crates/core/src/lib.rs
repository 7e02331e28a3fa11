//! Cycle-level simulation of sparse-dense GCN inference accelerators.
//!
//! The crate models a row-stationary engine with high-degree-node caching,
//! graph partitioning and runahead execution ([`grow`]), next to a tiled
//! outer-product baseline ([`gcnax`]). Both share the DRAM model in
//! [`memory`] and the energy accounting in [`energy`].

pub mod driver;
pub mod energy;
pub mod error;
pub mod gcnax;
pub mod grow;
pub mod ingest;
pub mod kernels;
pub mod matrix;
pub mod memory;
pub mod partition;
pub mod result;

pub use error::{Error, Result};
pub use matrix::{compute_stats, CscMatrix, CsrMatrix, DenseMatrix, GraphStats};
