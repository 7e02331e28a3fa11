use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use grow_core::driver::{GraphConfig, SimConfig};
use grow_core::ingest::SyntheticGraphSpec;
use tempfile::TempDir;

fn growsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_growsim"))
        .args(args)
        .env_remove("GROWSIM_CONFIG_DIR")
        .output()
        .expect("growsim runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// A 300-node power-law workload small enough for a debug build.
fn small_config(dir: &Path) -> PathBuf {
    let mut c = SimConfig::default();
    c.graph = GraphConfig::synthetic(&SyntheticGraphSpec::power_law(300, 5.0, 3));
    c.model.layer_dims = vec![16, 8, 4];
    c.partition.num_clusters = Some(2);
    write(dir, "small.toml", &c.to_toml_string())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_identical_files_on_rerun() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = growsim(&["simulate", "--config", s(&cfg), "--arch", "grow", "--out", s(out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["result.csv", "result.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("result.csv")).unwrap();
    assert!(csv.starts_with("layer,stage,cycles,bytes_read,bytes_written,effectual_bytes,hdn_hits,hdn_misses"));
}

#[test]
fn compare_and_sweep_print_one_row_per_configuration() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let o = growsim(&["compare", "--config", s(&cfg), "--baseline", "gcnax"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = growsim(&["sweep", "--config", s(&cfg), "--param", "runahead=1,2,4,8,16,32"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 7);
    assert!(text.lines().nth(1).unwrap().ends_with(",1"));
}

#[test]
fn preprocess_two_triangles_cuts_no_edges() {
    let tmp = TempDir::new().unwrap();
    let g = write(tmp.path(), "tri.edges", "0 1\n1 2\n2 0\n3 4\n4 5\n5 3\n");
    let out = tmp.path().join("pre");
    let o = growsim(&["preprocess", "--graph", s(&g), "-k", "2", "-n", "3", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("edge_cut: 0"), "{text}");
    assert!(text.contains("cluster_sizes: 3,3"), "{text}");
    assert_eq!(fs::read_to_string(out.join("partition.txt")).unwrap().lines().count(), 6);
    assert_eq!(fs::read_to_string(out.join("hdn.txt")).unwrap().lines().count(), 2);
}

#[test]
fn preprocess_single_cluster_writes_one_hdn_line() {
    let tmp = TempDir::new().unwrap();
    let g = write(tmp.path(), "tri.edges", "0 1\n1 2\n2 0\n3 4\n");
    let out = tmp.path().join("pre");
    let o = growsim(&["preprocess", "--graph", s(&g), "-k", "1", "-n", "2", "--out", s(&out)]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(out.join("hdn.txt")).unwrap().lines().count(), 1);
    let labels = fs::read_to_string(out.join("partition.txt")).unwrap();
    assert!(labels.lines().all(|l| l.trim() == "0"));
}

#[test]
fn stats_of_an_empty_graph_file_succeeds() {
    let tmp = TempDir::new().unwrap();
    let g = write(tmp.path(), "empty.edges", "# no edges\n");
    let o = growsim(&["stats", "--graph", s(&g), "--num-nodes", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let field = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(field("num_nodes"), "10");
    assert_eq!(field("num_edges"), "0");
    assert_eq!(field("density").parse::<f64>().unwrap(), 0.0);
    assert_eq!(field("avg_degree").parse::<f64>().unwrap(), 0.0);

    let o = growsim(&["stats", "--graph", s(&g)]);
    assert!(o.status.success());
}

#[test]
fn usage_errors_exit_with_code_two() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let g = write(tmp.path(), "tri.edges", "0 1\n1 2\n");
    let cases: [&[&str]; 4] = [
        &["sweep", "--config", s(&cfg), "--param", "warp_factor=1,2"],
        &["compare", "--preset", "no_such_preset"],
        &["compare", "--config", s(&cfg), "--baseline", "missing"],
        &["preprocess", "--graph", s(&g), "-k", "1", "-n", "1"],
    ];
    for args in cases {
        let o = growsim(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn missing_graph_file_is_reported_with_its_path() {
    let o = growsim(&["stats", "--graph", "/nonexistent/graph.edges"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/graph.edges"));
}
