//! Run configuration, loadable from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::EnergyCoefficients;
use crate::error::{Error, Result};
use crate::gcnax::BaselineConfig;
use crate::grow::GrowConfig;
use crate::ingest::{Activation, EdgeMode, GcnModelConfig, GraphKind, SyntheticGraphSpec};
use crate::memory::DramConfig;
use crate::partition::HdnRanking;

/// Directory searched for `default.toml` when no config file is given.
pub const CONFIG_DIR_ENV: &str = "GROWSIM_CONFIG_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    #[default]
    Grow,
    Gcnax,
}

impl Arch {
    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Grow => "grow",
            Arch::Gcnax => "gcnax",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grow" => Ok(Arch::Grow),
            "gcnax" => Ok(Arch::Gcnax),
            other => Err(Error::Usage(format!("unknown architecture '{other}' (expected grow or gcnax)"))),
        }
    }
}

/// Graph input: an edge-list file, or synthesis parameters when `path` is
/// unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub path: Option<PathBuf>,
    pub edge_mode: EdgeMode,
    /// Node count for edge-list files; inferred from the largest ID if unset.
    pub num_nodes: Option<usize>,
    /// CSV feature triples; synthesized at `model.feature_density` if unset.
    pub features: Option<PathBuf>,
    pub kind: GraphKind,
    pub synthetic_nodes: usize,
    pub avg_degree: f64,
    pub num_blocks: usize,
    pub intra_block_prob_ratio: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            path: None,
            edge_mode: EdgeMode::Symmetrize,
            num_nodes: None,
            features: None,
            kind: GraphKind::PowerLaw,
            synthetic_nodes: 1000,
            avg_degree: 8.0,
            num_blocks: 1,
            intra_block_prob_ratio: 1.0,
        }
    }
}

impl GraphConfig {
    pub fn synthetic(spec: &SyntheticGraphSpec) -> Self {
        Self {
            kind: spec.kind,
            synthetic_nodes: spec.num_nodes,
            avg_degree: spec.avg_degree,
            num_blocks: spec.num_blocks,
            intra_block_prob_ratio: spec.intra_block_prob_ratio,
            ..Self::default()
        }
    }

    pub fn from_file(path: impl Into<PathBuf>) -> Self {
        Self {
            path: Some(path.into()),
            ..Self::default()
        }
    }

    pub fn synthetic_spec(&self, seed: u64) -> SyntheticGraphSpec {
        SyntheticGraphSpec {
            kind: self.kind,
            num_nodes: self.synthetic_nodes,
            avg_degree: self.avg_degree,
            num_blocks: self.num_blocks,
            intra_block_prob_ratio: self.intra_block_prob_ratio,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    /// When false the graph runs as one cluster with a global HDN list.
    pub enabled: bool,
    /// `None` picks one cluster per HDN list's worth of nodes.
    pub num_clusters: Option<usize>,
    /// Per-cluster HDN list length; `None` fills the ID list.
    pub hdn_entries: Option<usize>,
    pub ranking: HdnRanking,
    /// Precomputed preprocessing outputs.
    pub partition_file: Option<PathBuf>,
    pub hdn_file: Option<PathBuf>,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            num_clusters: None,
            hdn_entries: None,
            ranking: HdnRanking::InCluster,
            partition_file: None,
            hdn_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub feature_density: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            layer_dims: vec![128, 16, 16],
            activation: Activation::Relu,
            feature_density: 0.1,
        }
    }
}

impl From<&ModelSection> for GcnModelConfig {
    fn from(m: &ModelSection) -> Self {
        GcnModelConfig {
            layer_dims: m.layer_dims.clone(),
            activation: m.activation,
            feature_density: m.feature_density,
        }
    }
}

impl From<&GcnModelConfig> for ModelSection {
    fn from(m: &GcnModelConfig) -> Self {
        ModelSection {
            layer_dims: m.layer_dims.clone(),
            activation: m.activation,
            feature_density: m.feature_density,
        }
    }
}

/// Everything one simulation needs besides the architecture choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Root of every random stream (graph, features, weights, partitioner).
    pub seed: u64,
    /// Multiply DRAM bandwidth by the PE count.
    pub scale_bandwidth_with_pes: bool,
    pub dram: DramConfig,
    pub grow: GrowConfig,
    pub gcnax: BaselineConfig,
    pub energy: EnergyCoefficients,
    pub model: ModelSection,
    pub graph: GraphConfig,
    pub partition: PartitionConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            scale_bandwidth_with_pes: false,
            dram: DramConfig::default(),
            grow: GrowConfig::default(),
            gcnax: BaselineConfig::default(),
            energy: EnergyCoefficients::default(),
            model: ModelSection::default(),
            graph: GraphConfig::default(),
            partition: PartitionConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// `$GROWSIM_CONFIG_DIR/default.toml` if present, else built-in defaults.
    pub fn load_default() -> Result<Self> {
        match std::env::var_os(CONFIG_DIR_ENV) {
            Some(dir) => {
                let path = Path::new(&dir).join("default.toml");
                if path.is_file() {
                    Self::from_file(&path)
                } else {
                    Ok(Self::default())
                }
            }
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_config(&self) -> GcnModelConfig {
        (&self.model).into()
    }

    pub fn validate(&self) -> Result<()> {
        self.dram.validate()?;
        self.grow.validate()?;
        self.gcnax.validate()?;
        self.energy.validate()?;
        self.model_config().validate()?;
        if self.partition.num_clusters == Some(0) {
            return Err(Error::Config("partition.num_clusters must be positive".into()));
        }
        Ok(())
    }

    /// DRAM as seen by the engine, after optional per-PE scaling.
    pub fn effective_dram(&self, arch: Arch) -> DramConfig {
        let pes = match arch {
            Arch::Grow => self.grow.num_pes,
            Arch::Gcnax => 1,
        };
        if self.scale_bandwidth_with_pes && pes > 1 {
            self.dram.with_bandwidth(self.dram.bandwidth_bytes_per_cycle * pes as f64)
        } else {
            self.dram
        }
    }

    /// Converts GB/s at the configured clock into bytes per cycle.
    pub fn gbps_to_bytes_per_cycle(&self, gbps: f64) -> f64 {
        gbps * 1e9 / self.energy.clock_hz
    }
}
