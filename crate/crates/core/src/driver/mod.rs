//! Configuration, workload construction and report generation shared by
//! the command-line front end and the test suites.

mod config;
pub mod presets;
mod report;
mod run;
mod workload;

pub use config::{Arch, GraphConfig, ModelSection, PartitionConfig, SimConfig, CONFIG_DIR_ENV};
pub use report::{
    baseline_index, cmd_preprocess, cmd_stats, degree_histogram_csv, log2_buckets, normalized_speedups, run_to_json,
    stage_csv, stats_csv, stats_to_json, summary_csv, summary_to_json, PreprocessSummary, StatsReport, HDN_FILE,
    PARTITION_FILE, STAGE_HEADER, SUMMARY_HEADER,
};
pub use run::{
    ablation, ablation_specs, compare, run_batch, run_on_workload, simulate, sweep, RunOutcome, RunSpec, SweepParam,
    SweepSpec,
};
pub use workload::{build_workload, load_graph, preprocess, synthesize_weights, Preprocessed, Workload};
