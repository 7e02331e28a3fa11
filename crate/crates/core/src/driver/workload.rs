//! Builds the matrices of one run from a [`SimConfig`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SimConfig;
use crate::error::{Error, Result};
use crate::ingest::{
    generate_graph_with_labels, load_edge_list, load_features, normalize_adjacency, FeatureSource,
    GcnModelConfig,
};
use crate::matrix::{CsrMatrix, DenseMatrix};
use crate::partition::{
    build_hdn_lists, default_num_clusters, import_partition, partition_graph, read_hdn_lists, relabel, HdnList,
    Partition,
};

// Independent streams derived from the run seed.
const FEATURE_STREAM: u64 = 0x5eed_0001;
const WEIGHT_STREAM: u64 = 0x5eed_0002;
const PARTITION_STREAM: u64 = 0x5eed_0003;

#[derive(Debug, Clone)]
pub struct Workload {
    /// Adjacency as loaded or generated, before self-loops.
    pub adjacency: CsrMatrix,
    /// `D^-1/2 (A + I) D^-1/2`.
    pub a_hat: CsrMatrix,
    pub features: CsrMatrix,
    pub weights: Vec<DenseMatrix>,
    pub model: GcnModelConfig,
    /// Generator blocks for synthetic SBM graphs.
    pub block_labels: Option<Vec<usize>>,
}

impl Workload {
    pub fn num_nodes(&self) -> usize {
        self.a_hat.num_rows()
    }
}

/// Graph plus, for synthetic inputs, each node's generator block.
pub fn load_graph(cfg: &SimConfig) -> Result<(CsrMatrix, Option<Vec<usize>>)> {
    let g = &cfg.graph;
    match &g.path {
        Some(path) => Ok((load_edge_list(path, g.edge_mode, g.num_nodes)?, None)),
        None => {
            let (a, labels) = generate_graph_with_labels(&g.synthetic_spec(cfg.seed))?;
            Ok((a, Some(labels)))
        }
    }
}

/// Dense weights uniform in `[-s, s]` with `s = sqrt(6 / (f_in + f_out))`.
pub fn synthesize_weights(f_in: usize, f_out: usize, seed: u64) -> DenseMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (6.0 / (f_in + f_out) as f64).sqrt();
    let values = (0..f_in * f_out).map(|_| rng.gen_range(-s..=s)).collect();
    DenseMatrix::from_vec(f_in, f_out, values).expect("shape matches")
}

pub fn build_workload(cfg: &SimConfig) -> Result<Workload> {
    cfg.validate()?;
    let (adjacency, block_labels) = load_graph(cfg)?;
    let a_hat = normalize_adjacency(&adjacency)?;
    let model = cfg.model_config();
    let n = a_hat.num_rows();
    let source = match &cfg.graph.features {
        Some(path) => FeatureSource::Csv(path),
        None => FeatureSource::Synthetic {
            density: model.feature_density,
            seed: cfg.seed ^ FEATURE_STREAM,
        },
    };
    let features = load_features(source, n, model.layer_dims[0])?;
    let weights = model
        .layer_dims
        .windows(2)
        .enumerate()
        .map(|(l, d)| synthesize_weights(d[0], d[1], (cfg.seed ^ WEIGHT_STREAM).wrapping_add(l as u64)))
        .collect();
    Ok(Workload {
        adjacency,
        a_hat,
        features,
        weights,
        model,
        block_labels,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessed {
    pub partition: Partition,
    /// Lists in relabeled node IDs.
    pub hdn: HdnList,
}

/// Partition and HDN lists for the row-stationary engine, from files when
/// configured, otherwise computed.
pub fn preprocess(a_hat: &CsrMatrix, cfg: &SimConfig) -> Result<Preprocessed> {
    let n = a_hat.num_rows();
    let pc = &cfg.partition;
    let partition = match &pc.partition_file {
        Some(path) => import_partition(path, n)?,
        None if pc.enabled => {
            let k = pc.num_clusters.unwrap_or_else(|| default_num_clusters(n));
            partition_graph(a_hat, k, cfg.seed ^ PARTITION_STREAM)?
        }
        None => Partition::single(n),
    };
    let hdn = match &pc.hdn_file {
        Some(path) => {
            let h = read_hdn_lists(path)?;
            h.validate(&partition)?;
            h
        }
        None => {
            let entries = pc.hdn_entries.unwrap_or_else(|| cfg.grow.hdn_list_capacity());
            if entries > cfg.grow.hdn_list_capacity() {
                return Err(Error::Config(format!(
                    "{entries} HDN entries exceed the {}-entry ID list",
                    cfg.grow.hdn_list_capacity()
                )));
            }
            build_hdn_lists(&relabel(a_hat, &partition)?, &partition, entries, pc.ranking)?
        }
    };
    Ok(Preprocessed { partition, hdn })
}
