use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use grow_core::driver::{
    self, ablation, baseline_index, cmd_preprocess, cmd_stats, compare, degree_histogram_csv, run_to_json,
    simulate, stage_csv, stats_csv, stats_to_json, summary_csv, summary_to_json, sweep, Arch, RunOutcome, RunSpec,
    SimConfig, SweepSpec,
};
use grow_core::ingest::EdgeMode;
use grow_core::Error;

#[derive(Parser)]
#[command(name = "growsim", version, about = "Cycle-level GCN accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Graph (and feature) statistics.
    Stats(StatsArgs),
    /// Partition the graph and write the partition and HDN list files.
    Preprocess(PreprocessArgs),
    /// Run one engine end to end and report per-stage counters.
    Simulate(SimulateArgs),
    /// Run several architectures or the ablation preset on one workload.
    Compare(CompareArgs),
    /// Run one configuration per value of a parameter.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file (defaults: $GROWSIM_CONFIG_DIR/default.toml).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named benchmark workload instead of a config file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Edge-list file; replaces the configured graph.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Treat the edge list as directed instead of symmetrizing it.
    #[arg(long)]
    directed: bool,
    /// Node count of the edge list (inferred from the largest ID otherwise).
    #[arg(long)]
    num_nodes: Option<usize>,
    /// Feature CSV of (row,col,value) triples.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV and JSON reports.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> anyhow::Result<SimConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => SimConfig::from_file(path)?,
            (None, Some(name)) => driver::presets::preset(name)?,
            (None, None) => SimConfig::load_default()?,
        };
        if let Some(path) = &self.graph {
            cfg.graph.path = Some(path.clone());
        }
        if self.directed {
            cfg.graph.edge_mode = EdgeMode::Directed;
        }
        if self.num_nodes.is_some() {
            cfg.graph.num_nodes = self.num_nodes;
        }
        if let Some(path) = &self.features {
            cfg.graph.features = Some(path.clone());
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct StatsArgs {
    #[command(flatten)]
    common: Common,
    /// Count one self-loop per node, i.e. report A + I.
    #[arg(long)]
    self_loops: bool,
}

#[derive(Args)]
struct PreprocessArgs {
    #[command(flatten)]
    common: Common,
    /// Number of clusters.
    #[arg(short, long)]
    k: usize,
    /// HDN list length per cluster.
    #[arg(short, long)]
    n: usize,
}

#[derive(Args)]
struct Engine {
    /// Precomputed partition file (one cluster ID per line).
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Precomputed HDN list file.
    #[arg(long)]
    hdn: Option<PathBuf>,
}

impl Engine {
    fn apply(&self, cfg: &mut SimConfig) {
        if let Some(p) = &self.partition {
            cfg.partition.partition_file = Some(p.clone());
        }
        if let Some(h) = &self.hdn {
            cfg.partition.hdn_file = Some(h.clone());
        }
    }
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    engine: Engine,
    #[arg(long, default_value = "grow")]
    arch: Arch,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    engine: Engine,
    /// Architectures to run, in row order (repeatable).
    #[arg(long = "arch", default_values = ["gcnax", "grow"])]
    archs: Vec<Arch>,
    /// Run base, +runahead and +partitioning instead of `--arch`.
    #[arg(long)]
    ablation: bool,
    /// Label of the row every speedup is normalized to (default: first).
    #[arg(long)]
    baseline: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    engine: Engine,
    /// `param=v1,v2,...`; bandwidth values are GB/s.
    #[arg(long)]
    param: SweepSpec,
    /// Architectures to sweep (repeatable).
    #[arg(long = "arch", default_values = ["grow"])]
    archs: Vec<Arch>,
    #[arg(long)]
    baseline: Option<String>,
}

fn write_out(dir: &Path, files: &[(&str, &str)]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, text) in files {
        let path = dir.join(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn stats(a: StatsArgs) -> anyhow::Result<()> {
    let cfg = a.common.load()?;
    let features = cfg.graph.features.clone();
    let report = cmd_stats(&cfg, features.as_deref().map(|p| (p, cfg.model.layer_dims[0])), a.self_loops)?;
    let csv = stats_csv(&report);
    print!("{csv}");
    if let Some(dir) = &a.common.out {
        write_out(
            dir,
            &[
                ("stats.csv", &csv),
                ("degree_histogram.csv", &degree_histogram_csv(&report)),
                ("stats.json", &stats_to_json(&report)),
            ],
        )?;
    }
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> anyhow::Result<()> {
    let cfg = a.common.load()?;
    let Some(dir) = &a.common.out else {
        bail!(Error::Usage("preprocess needs --out <dir>".into()));
    };
    let s = cmd_preprocess(&cfg, a.k, a.n, dir)?;
    println!("clusters: {}", s.num_clusters);
    println!("edge_cut: {}", s.edge_cut);
    println!("intra_cluster_fraction: {:.4}", s.intra_cluster_fraction);
    let sizes: Vec<String> = s.cluster_sizes.iter().map(usize::to_string).collect();
    println!("cluster_sizes: {}", sizes.join(","));
    println!("partition: {}", s.partition_file.display());
    println!("hdn: {}", s.hdn_file.display());
    Ok(())
}

fn check(outcomes: &[RunOutcome]) -> anyhow::Result<()> {
    for o in outcomes {
        if let Err(msg) = o.result.check_conservation() {
            bail!("{}: accounting check failed: {msg}", o.label);
        }
    }
    Ok(())
}

fn simulate_cmd(a: SimulateArgs) -> anyhow::Result<()> {
    let mut cfg = a.common.load()?;
    a.engine.apply(&mut cfg);
    let o = simulate(&RunSpec::new(a.arch.as_str(), a.arch, cfg.clone()))?;
    check(std::slice::from_ref(&o))?;
    let csv = stage_csv(&o);
    print!("{csv}");
    if let Some(dir) = &a.common.out {
        write_out(dir, &[("result.csv", &csv), ("result.json", &run_to_json(&o, &cfg))])?;
    }
    Ok(())
}

fn report_many(outcomes: &[RunOutcome], baseline: Option<&str>, out: Option<&Path>) -> anyhow::Result<()> {
    check(outcomes)?;
    let base = baseline_index(outcomes, baseline)?;
    let csv = summary_csv(outcomes, base);
    print!("{csv}");
    if let Some(dir) = out {
        write_out(dir, &[("summary.csv", &csv), ("summary.json", &summary_to_json(outcomes, base))])?;
    }
    Ok(())
}

fn compare_cmd(a: CompareArgs) -> anyhow::Result<()> {
    let mut cfg = a.common.load()?;
    a.engine.apply(&mut cfg);
    let outcomes = if a.ablation {
        ablation(&cfg)?
    } else {
        let specs: Vec<RunSpec> = a
            .archs
            .iter()
            .map(|&arch| RunSpec::new(arch.as_str(), arch, cfg.clone()))
            .collect();
        compare(&specs)?
    };
    report_many(&outcomes, a.baseline.as_deref(), a.common.out.as_deref())
}

fn sweep_cmd(a: SweepArgs) -> anyhow::Result<()> {
    let mut cfg = a.common.load()?;
    a.engine.apply(&mut cfg);
    let mut outcomes = Vec::new();
    let multi = a.archs.len() > 1;
    for &arch in &a.archs {
        for mut o in sweep(&RunSpec::new(arch.as_str(), arch, cfg.clone()), &a.param)? {
            if multi {
                o.label = format!("{arch}:{}", o.label);
            }
            outcomes.push(o);
        }
    }
    report_many(&outcomes, a.baseline.as_deref(), a.common.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Stats(a) => stats(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Compare(a) => compare_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Usage(_)) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
