use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL: &str = r#"
[datagen]
num_nodes = 600
avg_degree = 8.0
feature_dim = 8
feature_noise = 1.0

[partitioner]
num_parts = 3

[gnn]
hidden = 16
lr = 0.01

[sampler]
batch_size = 64
fanouts = [5, 5]

[trainer]
num_workers = 3
phase0_max_epochs = 6
phase1_max_epochs = 3
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_entropart"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn entropart")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "entropart {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("small.toml"), SMALL).unwrap();
        Workspace { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self) -> PathBuf {
        self.path("small.toml")
    }

    fn gen(&self, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let cfg = self.config();
        let mut args = vec!["gen", "--config", s(&cfg), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }

    fn partition(&self, ds: &Path, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let cfg = self.config();
        let mut args = vec!["partition", "--config", s(&cfg), "--dataset", s(ds), "--out", s(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }

    fn train(&self, ds: &Path, part: &Path, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.path(name);
        let cfg = self.config();
        let assignment = part.join("assignment.bin");
        let mut args = vec![
            "train",
            "--config",
            s(&cfg),
            "--dataset",
            s(ds),
            "--assignment",
            s(&assignment),
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

fn read(p: PathBuf) -> Vec<u8> {
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn json(p: PathBuf) -> serde_json::Value {
    serde_json::from_slice(&read(p)).unwrap()
}

#[test]
fn gen_writes_dataset_files() {
    let ws = Workspace::new();
    let ds = ws.gen("ds", &[]);
    for f in ["meta.json", "edges.bin", "features.bin", "labels.bin", "splits.json"] {
        assert!(ds.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn gen_seed_is_deterministic() {
    let ws = Workspace::new();
    let a = ws.gen("a", &["--seed", "3"]);
    let b = ws.gen("b", &["--seed", "3"]);
    let c = ws.gen("c", &["--seed", "4"]);
    assert_eq!(read(a.join("edges.bin")), read(b.join("edges.bin")));
    assert_ne!(read(a.join("edges.bin")), read(c.join("edges.bin")));
}

#[test]
fn gen_into_missing_parent_fails_with_path() {
    let ws = Workspace::new();
    let out = ws.path("no/such/dir");
    let res = run(&["gen", "--config", s(&ws.config()), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("no/such"));
}

#[test]
fn partition_report_is_consistent() {
    let ws = Workspace::new();
    let ds = ws.gen("ds", &[]);
    let p = ws.partition(&ds, "p", &["--scheme", "ew"]);
    let r = json(p.join("partition_report.json"));
    let sizes: u64 = r["per_part_sizes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .sum();
    assert_eq!(sizes, 600);
    assert_eq!(read(p.join("assignment.bin")).len(), 600 * 4);
    let csv = String::from_utf8(read(p.join("partition_parts.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn single_part_has_graph_entropy_and_no_cut() {
    let ws = Workspace::new();
    let ds = ws.gen("ds", &[]);
    let p = ws.partition(&ds, "p", &["--num-parts", "1", "--scheme", "unit"]);
    let r = json(p.join("partition_report.json"));
    assert_eq!(r["edge_cut"], 0);
    assert!((r["total_entropy"].as_f64().unwrap() - r["graph_entropy"].as_f64().unwrap()).abs() < 1e-12);
}

#[test]
fn baseline_has_only_phase0_rows() {
    let ws = Workspace::new();
    let ds = ws.gen("ds", &[]);
    let p = ws.partition(&ds, "p", &[]);
    let run = ws.train(&ds, &p, "run", &["--baseline"]);
    let history = String::from_utf8(read(run.join("history.csv"))).unwrap();
    assert!(history.lines().skip(1).all(|l| l.starts_with("0,")));
    let m = json(run.join("metrics.json"));
    assert_eq!(m["mode"], "baseline");
    assert!(m["phase1"].is_null());
    assert!(run.join("checkpoints/global.ckpt").is_file());
}

#[test]
fn two_phase_run_marks_the_switch_and_is_reproducible() {
    let ws = Workspace::new();
    let ds = ws.gen("ds", &[]);
    let p = ws.partition(&ds, "p", &[]);
    let a = ws.train(&ds, &p, "a", &[]);
    let b = ws.train(&ds, &p, "b", &[]);
    let history = String::from_utf8(read(a.join("history.csv"))).unwrap();
    let switch: Vec<&str> = history.lines().filter(|l| l.starts_with("switch,")).collect();
    assert_eq!(switch.len(), 1);
    assert!(history.lines().any(|l| l.starts_with("1,")));
    assert_eq!(read(a.join("metrics.json")), read(b.join("metrics.json")));
    assert_eq!(read(a.join("history.csv")), read(b.join("history.csv")));
    let m = json(a.join("metrics.json"));
    assert_eq!(m["phase1"]["messages"], 0);
    for w in 0..3 {
        assert!(a.join(format!("checkpoints/worker_{w}.ckpt")).is_file());
    }
}

#[test]
fn report_tables() {
    let ws = Workspace::new();
    let ds = ws.gen("ds", &[]);
    let p = ws.partition(&ds, "p", &[]);
    let a = ws.train(&ds, &p, "a", &["--baseline"]);
    let b = ws.train(&ds, &p, "b", &["--baseline", "--override", "sampler.fanouts=[3, 3]"]);

    let one = ok(&["report", s(&a)]);
    let text = String::from_utf8(one.stdout).unwrap();
    assert!(!text.contains("speedup"));

    let out = ws.path("rep");
    let two = ok(&["report", s(&a), s(&b), "--partition", s(&p), "--out", s(&out)]);
    let text = String::from_utf8(two.stdout).unwrap();
    assert!(text.lines().next().unwrap().contains("speedup"));
    assert!(text.contains("total_entropy"));
    let runs = String::from_utf8(read(out.join("runs.csv"))).unwrap();
    assert_eq!(runs.lines().count(), 3);
    assert!(out.join("partitions.csv").is_file() && out.join("parts.csv").is_file());
}

#[test]
fn malformed_metrics_names_the_file() {
    let ws = Workspace::new();
    let dir = ws.path("broken");
    std::fs::create_dir(&dir).unwrap();
    std::fs::write(dir.join("metrics.json"), "{").unwrap();
    let res = run(&["report", s(&dir)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("metrics.json"));
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let out = ws.path("x");
    let bad_key = run(&["gen", "--out", s(&out), "--override", "datagen.nodes=5"]);
    assert_eq!(bad_key.status.code(), Some(2));
    let bad_value = run(&["gen", "--out", s(&out), "--override", "datagen.homophily=2"]);
    assert_eq!(bad_value.status.code(), Some(2));
    let threads = bin()
        .args(["gen", "--out", s(&out)])
        .env("ENTROPART_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
}

#[test]
fn worker_count_must_match_assignment() {
    let ws = Workspace::new();
    let ds = ws.gen("ds", &[]);
    let p = ws.partition(&ds, "p", &[]);
    let res = run(&[
        "train",
        "--config",
        s(&ws.config()),
        "--dataset",
        s(&ds),
        "--assignment",
        s(&p.join("assignment.bin")),
        "--out",
        s(&ws.path("r")),
        "--num-workers",
        "2",
    ]);
    assert_eq!(res.status.code(), Some(2));
}
