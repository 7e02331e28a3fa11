//! Named benchmark workloads.

use super::config::{GraphConfig, SimConfig};
use crate::error::{Error, Result};
use crate::ingest::SyntheticGraphSpec;

/// 12-block SBM, 12k nodes: the ablation and traffic benchmark.
pub fn sbm_benchmark() -> SimConfig {
    let mut c = SimConfig::default();
    c.graph = GraphConfig::synthetic(&SyntheticGraphSpec::sbm(12_000, 10.0, 12, 20.0, 0));
    c
}

/// Preferential-attachment graph, 10k nodes, average degree 8.
pub fn power_law_benchmark() -> SimConfig {
    let mut c = SimConfig::default();
    c.graph = GraphConfig::synthetic(&SyntheticGraphSpec::power_law(10_000, 8.0, 0));
    c
}

/// Power-law graph with 64-wide outputs and half-dense features. The output
/// buffer is widened so 16 runahead rows of 64 elements fit.
pub fn bandwidth_contrast() -> SimConfig {
    let mut c = power_law_benchmark();
    c.model.layer_dims = vec![128, 64];
    c.model.feature_density = 0.5;
    c.grow.out_buf_bytes = 16 * 64 * 8;
    c
}

/// Very high average degree, where HDN caching stops paying off.
pub fn dense_graph() -> SimConfig {
    let mut c = SimConfig::default();
    c.graph = GraphConfig::synthetic(&SyntheticGraphSpec::power_law(10_000, 200.0, 0));
    c
}

/// Small 3-block SBM with 32-entry HDN lists.
pub fn partition_effect() -> SimConfig {
    let mut c = SimConfig::default();
    c.graph = GraphConfig::synthetic(&SyntheticGraphSpec::sbm(900, 10.0, 3, 20.0, 0));
    c.model.layer_dims = vec![32, 16];
    c.partition.num_clusters = Some(3);
    c.partition.hdn_entries = Some(32);
    c
}

/// 16-block SBM partitioned into 16 clusters, DRAM bandwidth scaled with
/// the PE count.
pub fn multi_pe() -> SimConfig {
    let mut c = SimConfig::default();
    c.graph = GraphConfig::synthetic(&SyntheticGraphSpec::sbm(16_000, 10.0, 16, 20.0, 0));
    c.partition.num_clusters = Some(16);
    c.scale_bandwidth_with_pes = true;
    c
}

pub const PRESETS: [&str; 6] = [
    "sbm_benchmark",
    "power_law_benchmark",
    "bandwidth_contrast",
    "dense_graph",
    "partition_effect",
    "multi_pe",
];

pub fn preset(name: &str) -> Result<SimConfig> {
    Ok(match name {
        "sbm_benchmark" => sbm_benchmark(),
        "power_law_benchmark" => power_law_benchmark(),
        "bandwidth_contrast" => bandwidth_contrast(),
        "dense_graph" => dense_graph(),
        "partition_effect" => partition_effect(),
        "multi_pe" => multi_pe(),
        other => {
            return Err(Error::Usage(format!(
                "unknown preset '{other}' (known: {})",
                PRESETS.join(", ")
            )))
        }
    })
}
