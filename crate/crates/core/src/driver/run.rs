//! Single runs, comparisons, parameter sweeps and the ablation preset.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Arch, SimConfig};
use super::workload::{build_workload, preprocess, Preprocessed, Workload};
use crate::energy::{compute_energy, energy_from_counters, EnergyCounters, EnergyReport};
use crate::error::{Error, Result};
use crate::gcnax::{run_gcnax_inference, TileConfig};
use crate::grow::run_inference;
use crate::memory::VALUE_BYTES;
use crate::result::SimResult;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSpec {
    pub label: String,
    pub arch: Arch,
    pub config: SimConfig,
}

impl RunSpec {
    pub fn new(label: impl Into<String>, arch: Arch, config: SimConfig) -> Self {
        Self {
            label: label.into(),
            arch,
            config,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub label: String,
    pub arch: Arch,
    pub result: SimResult,
    pub energy: EnergyReport,
    /// One report per entry of `result.stages`.
    pub stage_energy: Vec<EnergyReport>,
}

/// Runs `spec` on a prebuilt workload. `pre` supplies partition and HDN
/// lists for the row-stationary engine; they are computed when absent.
pub fn run_on_workload(spec: &RunSpec, w: &Workload, pre: Option<&Preprocessed>) -> Result<RunOutcome> {
    let cfg = &spec.config;
    cfg.validate()?;
    let dram = cfg.effective_dram(spec.arch);
    let result = match spec.arch {
        Arch::Grow => {
            let owned;
            let pre = match pre {
                Some(p) => p,
                None => {
                    owned = preprocess(&w.a_hat, cfg)?;
                    &owned
                }
            };
            run_inference(
                &w.a_hat,
                &w.features,
                &w.weights,
                &w.model,
                &pre.partition,
                &pre.hdn,
                &cfg.grow,
                &dram,
            )?
        }
        Arch::Gcnax => run_gcnax_inference(&w.a_hat, &w.features, &w.weights, &w.model, &cfg.gcnax, &dram)?,
    };
    let energy = compute_energy(&result, &cfg.energy);
    let stage_energy = result
        .stages
        .iter()
        .map(|s| {
            let counters = EnergyCounters {
                mac_ops: s.mac_ops,
                sram_bytes: s.sram_bytes,
                dram_bytes: s.traffic.bytes_read + s.traffic.bytes_written,
                cycles: s.cycles,
            };
            energy_from_counters(counters, &cfg.energy)
        })
        .collect();
    Ok(RunOutcome {
        label: spec.label.clone(),
        arch: spec.arch,
        result,
        energy,
        stage_energy,
    })
}

pub fn simulate(spec: &RunSpec) -> Result<RunOutcome> {
    let w = build_workload(&spec.config)?;
    run_on_workload(spec, &w, None)
}

/// Runs every spec (concurrently); results keep the input order.
pub fn compare(specs: &[RunSpec]) -> Result<Vec<RunOutcome>> {
    specs.par_iter().map(simulate).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    RunaheadDegree,
    /// GB/s at the configured clock.
    Bandwidth,
    NumPes,
    HdnCacheBytes,
    /// Cluster count `k`.
    NumClusters,
    /// HDN list length `n`.
    HdnEntries,
    /// Square tiles of the baseline.
    TileSize,
    TileRows,
    TileCols,
}

impl SweepParam {
    pub const ALL: [SweepParam; 9] = [
        SweepParam::RunaheadDegree,
        SweepParam::Bandwidth,
        SweepParam::NumPes,
        SweepParam::HdnCacheBytes,
        SweepParam::NumClusters,
        SweepParam::HdnEntries,
        SweepParam::TileSize,
        SweepParam::TileRows,
        SweepParam::TileCols,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::RunaheadDegree => "runahead_degree",
            SweepParam::Bandwidth => "bandwidth",
            SweepParam::NumPes => "num_pes",
            SweepParam::HdnCacheBytes => "hdn_cache_bytes",
            SweepParam::NumClusters => "k",
            SweepParam::HdnEntries => "n",
            SweepParam::TileSize => "tile_size",
            SweepParam::TileRows => "tile_rows",
            SweepParam::TileCols => "tile_cols",
        }
    }

    /// Writes `value` into the matching config field.
    pub fn apply(self, cfg: &mut SimConfig, value: f64) -> Result<()> {
        if self == SweepParam::Bandwidth {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Usage(format!("bandwidth must be positive, got {value}")));
            }
            cfg.dram.bandwidth_bytes_per_cycle = cfg.gbps_to_bytes_per_cycle(value);
            return Ok(());
        }
        if !(value.is_finite() && value >= 1.0 && value.fract() == 0.0) {
            return Err(Error::Usage(format!("{} takes positive integers, got {value}", self.name())));
        }
        let v = value as usize;
        match self {
            SweepParam::RunaheadDegree => {
                // The output buffer grows with the window it must hold.
                let widest = cfg.model.layer_dims[1..].iter().copied().max().unwrap_or(0);
                cfg.grow.runahead_degree = v;
                cfg.grow.out_buf_bytes = cfg.grow.out_buf_bytes.max((v * widest) as u64 * VALUE_BYTES);
            }
            SweepParam::NumPes => cfg.grow.num_pes = v,
            SweepParam::HdnCacheBytes => cfg.grow.hdn_cache_bytes = v as u64,
            SweepParam::NumClusters => {
                cfg.partition.enabled = true;
                cfg.partition.num_clusters = Some(v);
            }
            SweepParam::HdnEntries => cfg.partition.hdn_entries = Some(v),
            SweepParam::TileSize => cfg.gcnax.tile = TileConfig::square(v),
            SweepParam::TileRows => cfg.gcnax.tile.tile_rows = v,
            SweepParam::TileCols => cfg.gcnax.tile.tile_cols = v,
            SweepParam::Bandwidth => unreachable!(),
        }
        Ok(())
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let p = match s {
            "runahead_degree" | "runahead" => SweepParam::RunaheadDegree,
            "bandwidth" => SweepParam::Bandwidth,
            "num_pes" | "pes" => SweepParam::NumPes,
            "hdn_cache_bytes" => SweepParam::HdnCacheBytes,
            "k" | "num_clusters" => SweepParam::NumClusters,
            "n" | "hdn_entries" => SweepParam::HdnEntries,
            "tile_size" | "tile" => SweepParam::TileSize,
            "tile_rows" => SweepParam::TileRows,
            "tile_cols" => SweepParam::TileCols,
            other => {
                let known: Vec<_> = SweepParam::ALL.iter().map(|p| p.name()).collect();
                return Err(Error::Usage(format!(
                    "unknown sweep parameter '{other}' (known: {})",
                    known.join(", ")
                )));
            }
        };
        Ok(p)
    }
}

/// `name=v1,v2,...`
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl FromStr for SweepSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, list) = s
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("sweep '{s}' is not of the form param=v1,v2,...")))?;
        let param: SweepParam = name.trim().parse()?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Usage(format!("bad sweep value '{}' for {param}", v.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(Error::Usage(format!("sweep over {param} has no values")));
        }
        Ok(SweepSpec { param, values })
    }
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Runs `base` once per value. The workload is built once; configurations
/// run concurrently and come back in value order.
pub fn sweep(base: &RunSpec, spec: &SweepSpec) -> Result<Vec<RunOutcome>> {
    let runs = spec
        .values
        .iter()
        .map(|&v| {
            let mut cfg = base.config.clone();
            spec.param.apply(&mut cfg, v)?;
            cfg.validate()?;
            let label = format!("{}={}", spec.param, format_value(v));
            Ok(RunSpec::new(label, base.arch, cfg))
        })
        .collect::<Result<Vec<_>>>()?;
    let w = build_workload(&base.config)?;
    run_batch(&runs, &w)
}

/// Runs specs sharing one workload, preprocessing each distinct partition
/// setup only once.
pub fn run_batch(runs: &[RunSpec], w: &Workload) -> Result<Vec<RunOutcome>> {
    let mut cache: HashMap<String, Preprocessed> = HashMap::new();
    let mut keys = Vec::with_capacity(runs.len());
    for r in runs {
        if r.arch != Arch::Grow {
            keys.push(None);
            continue;
        }
        let key = serde_json::to_string(&(
            &r.config.partition,
            r.config.seed,
            r.config.grow.hdn_id_list_bytes,
        ))
        .expect("partition config serializes");
        if !cache.contains_key(&key) {
            cache.insert(key.clone(), preprocess(&w.a_hat, &r.config)?);
        }
        keys.push(Some(key));
    }
    runs.par_iter()
        .zip(keys.par_iter())
        .map(|(r, k)| run_on_workload(r, w, k.as_ref().map(|k| &cache[k])))
        .collect()
}

/// Incremental optimizations on the row-stationary engine: HDN caching
/// alone, then runahead, then graph partitioning.
pub fn ablation_specs(cfg: &SimConfig) -> Vec<RunSpec> {
    let runahead = cfg.grow.runahead_degree.max(1);
    let mut base = cfg.clone();
    base.grow.runahead_degree = 1;
    base.partition.enabled = false;
    base.partition.partition_file = None;
    base.partition.hdn_file = None;
    let mut ra = base.clone();
    ra.grow.runahead_degree = runahead;
    let mut full = ra.clone();
    full.partition.enabled = true;
    full.partition.partition_file = cfg.partition.partition_file.clone();
    full.partition.hdn_file = cfg.partition.hdn_file.clone();
    vec![
        RunSpec::new("base", Arch::Grow, base),
        RunSpec::new("base+runahead", Arch::Grow, ra),
        RunSpec::new("base+runahead+partitioning", Arch::Grow, full),
    ]
}

pub fn ablation(cfg: &SimConfig) -> Result<Vec<RunOutcome>> {
    let w = build_workload(cfg)?;
    run_batch(&ablation_specs(cfg), &w)
}
