//! CSV and JSON renderings of runs, plus the stats and preprocess commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{Arch, SimConfig};
use super::run::RunOutcome;
use super::workload::{load_graph, preprocess};
use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::ingest::load_features_csv;
use crate::matrix::{compute_stats, GraphStats};
use crate::partition::{edge_cut, export_partition, intra_cluster_fraction, write_hdn_lists};
use crate::result::{StageRecord, StallCycles};
use crate::memory::TrafficStats;

/// Per-stage columns of the simulate CSV, in order.
pub const STAGE_HEADER: [&str; 17] = [
    "layer",
    "stage",
    "cycles",
    "bytes_read",
    "bytes_written",
    "effectual_bytes",
    "hdn_hits",
    "hdn_misses",
    "stall_ldn",
    "stall_lhs",
    "stall_mem",
    "mac_ops",
    "energy_mac_pj",
    "energy_sram_pj",
    "energy_dram_pj",
    "energy_static_pj",
    "energy_total_pj",
];

/// Columns of the compare/sweep CSV, in order.
pub const SUMMARY_HEADER: [&str; 18] = [
    "label",
    "arch",
    "cycles",
    "bytes_read",
    "bytes_written",
    "effectual_bytes",
    "hdn_hits",
    "hdn_misses",
    "stall_ldn",
    "stall_lhs",
    "stall_mem",
    "mac_ops",
    "energy_mac_pj",
    "energy_sram_pj",
    "energy_dram_pj",
    "energy_static_pj",
    "energy_total_pj",
    "normalized_speedup",
];

struct Counters<'a> {
    cycles: u64,
    traffic: &'a TrafficStats,
    hits: u64,
    misses: u64,
    stalls: StallCycles,
    macs: u64,
    energy: &'a EnergyReport,
}

impl Counters<'_> {
    fn fields(&self) -> Vec<String> {
        let e = self.energy;
        vec![
            self.cycles.to_string(),
            self.traffic.bytes_read.to_string(),
            self.traffic.bytes_written.to_string(),
            self.traffic.effectual_bytes.to_string(),
            self.hits.to_string(),
            self.misses.to_string(),
            self.stalls.ldn_full.to_string(),
            self.stalls.lhs_full.to_string(),
            self.stalls.memory.to_string(),
            self.macs.to_string(),
            e.dynamic_mac_pj.to_string(),
            e.dynamic_sram_pj.to_string(),
            e.dynamic_dram_pj.to_string(),
            e.static_pj.to_string(),
            e.total_pj.to_string(),
        ]
    }

    fn of_stage<'a>(s: &'a StageRecord, energy: &'a EnergyReport) -> Counters<'a> {
        Counters {
            cycles: s.cycles,
            traffic: &s.traffic,
            hits: s.hdn_hits,
            misses: s.hdn_misses,
            stalls: s.stalls,
            macs: s.mac_ops,
            energy,
        }
    }

    fn of_run(o: &RunOutcome) -> Counters<'_> {
        let r = &o.result;
        Counters {
            cycles: r.total_cycles,
            traffic: &r.traffic,
            hits: r.hdn_hits,
            misses: r.hdn_misses,
            stalls: r.stalls,
            macs: r.mac_ops,
            energy: &o.energy,
        }
    }
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// One row per stage followed by an `all,total` row.
pub fn stage_csv(o: &RunOutcome) -> String {
    let mut rows: Vec<Vec<String>> = o
        .result
        .stages
        .iter()
        .zip(&o.stage_energy)
        .map(|(s, e)| {
            let mut row = vec![s.layer.to_string(), s.stage.as_str().to_string()];
            row.extend(Counters::of_stage(s, e).fields());
            row
        })
        .collect();
    let mut total = vec!["all".to_string(), "total".to_string()];
    total.extend(Counters::of_run(o).fields());
    rows.push(total);
    write_csv(&STAGE_HEADER, rows)
}

/// Speedup of every run over `outcomes[baseline]` (cycles ratio); the
/// baseline entry is exactly 1.
pub fn normalized_speedups(outcomes: &[RunOutcome], baseline: usize) -> Vec<f64> {
    let base = outcomes[baseline].result.total_cycles;
    outcomes
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let c = o.result.total_cycles;
            if i == baseline || c == base {
                1.0
            } else if c == 0 {
                f64::INFINITY
            } else {
                base as f64 / c as f64
            }
        })
        .collect()
}

/// Index of the run labelled `name`, or the first run when `None`.
pub fn baseline_index(outcomes: &[RunOutcome], name: Option<&str>) -> Result<usize> {
    if outcomes.is_empty() {
        return Err(Error::Usage("no runs to compare".into()));
    }
    match name {
        None => Ok(0),
        Some(n) => outcomes
            .iter()
            .position(|o| o.label == n)
            .ok_or_else(|| Error::Usage(format!("baseline '{n}' is not one of the runs"))),
    }
}

pub fn summary_csv(outcomes: &[RunOutcome], baseline: usize) -> String {
    let speedups = normalized_speedups(outcomes, baseline);
    let rows = outcomes.iter().zip(speedups).map(|(o, s)| {
        let mut row = vec![o.label.clone(), o.arch.as_str().to_string()];
        row.extend(Counters::of_run(o).fields());
        row.push(s.to_string());
        row
    });
    write_csv(&SUMMARY_HEADER, rows)
}

#[derive(Serialize)]
struct RunJson<'a> {
    label: &'a str,
    arch: Arch,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalized_speedup: Option<f64>,
    total_cycles: u64,
    hit_rate: Option<f64>,
    pe_utilization: Option<f64>,
    energy: &'a EnergyReport,
    result: &'a crate::result::SimResult,
    stage_energy: &'a [EnergyReport],
}

fn run_json(o: &RunOutcome, speedup: Option<f64>) -> RunJson<'_> {
    RunJson {
        label: &o.label,
        arch: o.arch,
        normalized_speedup: speedup,
        total_cycles: o.result.total_cycles,
        hit_rate: o.result.hit_rate(),
        pe_utilization: o.result.pe_utilization(),
        energy: &o.energy,
        result: &o.result,
        stage_energy: &o.stage_energy,
    }
}

pub fn run_to_json(o: &RunOutcome, cfg: &SimConfig) -> String {
    #[derive(Serialize)]
    struct Doc<'a> {
        config: &'a SimConfig,
        run: RunJson<'a>,
    }
    let doc = Doc {
        config: cfg,
        run: run_json(o, None),
    };
    serde_json::to_string_pretty(&doc).expect("report serializes")
}

pub fn summary_to_json(outcomes: &[RunOutcome], baseline: usize) -> String {
    let speedups = normalized_speedups(outcomes, baseline);
    let runs: Vec<_> = outcomes.iter().zip(speedups).map(|(o, s)| run_json(o, Some(s))).collect();
    #[derive(Serialize)]
    struct Doc<'a> {
        baseline: &'a str,
        runs: Vec<RunJson<'a>>,
    }
    let doc = Doc {
        baseline: &outcomes[baseline].label,
        runs,
    };
    serde_json::to_string_pretty(&doc).expect("report serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    #[serde(flatten)]
    pub graph: GraphStats,
    pub max_degree: usize,
    pub feature_density: Option<f64>,
}

/// Statistics of the configured graph, optionally with one self-loop per
/// node, and the density of a feature file of width `feature_len`.
pub fn cmd_stats(cfg: &SimConfig, features: Option<(&Path, usize)>, self_loops: bool) -> Result<StatsReport> {
    let (mut a, _) = load_graph(cfg)?;
    if self_loops {
        a = crate::ingest::add_self_loops(&a)?;
    }
    let graph = compute_stats(&a)?;
    let max_degree = graph.degree_histogram.keys().next_back().copied().unwrap_or(0);
    let feature_density = match features {
        Some((path, f)) => {
            let x = load_features_csv(path, a.num_rows(), f)?;
            let cells = (x.num_rows() * x.num_cols()) as f64;
            Some(if cells > 0.0 { x.nnz() as f64 / cells } else { 0.0 })
        }
        None => None,
    };
    Ok(StatsReport {
        graph,
        max_degree,
        feature_density,
    })
}

pub fn stats_csv(r: &StatsReport) -> String {
    let row = vec![
        r.graph.num_nodes.to_string(),
        r.graph.num_edges.to_string(),
        r.graph.density.to_string(),
        r.graph.avg_degree.to_string(),
        r.max_degree.to_string(),
        r.feature_density.map(|d| d.to_string()).unwrap_or_default(),
    ];
    write_csv(
        &["num_nodes", "num_edges", "density", "avg_degree", "max_degree", "feature_density"],
        [row],
    )
}

pub fn degree_histogram_csv(r: &StatsReport) -> String {
    let rows = r
        .graph
        .degree_histogram
        .iter()
        .map(|(d, c)| vec![d.to_string(), c.to_string()]);
    write_csv(&["degree", "count"], rows)
}

pub fn stats_to_json(r: &StatsReport) -> String {
    serde_json::to_string_pretty(r).expect("report serializes")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreprocessSummary {
    pub num_clusters: usize,
    pub edge_cut: usize,
    pub intra_cluster_fraction: f64,
    pub cluster_sizes: Vec<usize>,
    pub hdn_list_lengths: Vec<usize>,
    pub partition_file: PathBuf,
    pub hdn_file: PathBuf,
}

pub const PARTITION_FILE: &str = "partition.txt";
pub const HDN_FILE: &str = "hdn.txt";

/// Partitions the configured graph into `k` clusters, picks `n` HDNs per
/// cluster and writes both files to `out_dir`.
pub fn cmd_preprocess(cfg: &SimConfig, k: usize, n: usize, out_dir: &Path) -> Result<PreprocessSummary> {
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    let (a, _) = load_graph(cfg)?;
    let a_hat = crate::ingest::normalize_adjacency(&a)?;
    let mut c = cfg.clone();
    c.partition.enabled = true;
    c.partition.num_clusters = Some(k);
    c.partition.hdn_entries = Some(n);
    c.partition.partition_file = None;
    c.partition.hdn_file = None;
    let pre = preprocess(&a_hat, &c)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let partition_file = out_dir.join(PARTITION_FILE);
    let hdn_file = out_dir.join(HDN_FILE);
    export_partition(&pre.partition, &partition_file)?;
    write_hdn_lists(&pre.hdn, &hdn_file)?;
    Ok(PreprocessSummary {
        num_clusters: pre.partition.num_clusters(),
        edge_cut: edge_cut(&a, &pre.partition),
        intra_cluster_fraction: intra_cluster_fraction(&a, &pre.partition),
        cluster_sizes: pre.partition.cluster_sizes(),
        hdn_list_lengths: pre.hdn.lists().iter().map(Vec::len).collect(),
        partition_file,
        hdn_file,
    })
}

/// Degree histogram collapsed into power-of-two buckets, `[2^i, 2^(i+1))`.
pub fn log2_buckets(hist: &BTreeMap<usize, usize>) -> BTreeMap<usize, usize> {
    let mut out = BTreeMap::new();
    for (&d, &c) in hist {
        let lo = if d == 0 { 0 } else { 1usize << d.ilog2() };
        *out.entry(lo).or_default() += c;
    }
    out
}
