use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use entropart::datagen::generate;
use entropart::io::{read_json, write_atomic, write_json};
use entropart::metrics::total_entropy;
use entropart::partition::{assign_edge_weights, edge_cut, max_part_weight, partition};
use entropart::trainer::{self, TrainOutcome};
use entropart::{Dataset, EdgeWeights, EvalReport, HistoryRecord, PartitionAssignment, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Scheme};

pub const ASSIGNMENT_FILE: &str = "assignment.bin";
pub const PARTITION_REPORT_FILE: &str = "partition_report.json";
pub const PARTS_CSV_FILE: &str = "partition_parts.csv";
pub const HISTORY_FILE: &str = "history.csv";
pub const METRICS_FILE: &str = "metrics.json";
pub const TIMING_FILE: &str = "timing.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

fn ensure_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn csv_bytes(rows: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    rows(&mut w)?;
    Ok(w.into_inner().map_err(|e| e.into_error())?)
}

pub fn gen(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let ds = generate(&cfg.datagen)?;
    ds.save(out)?;
    println!(
        "wrote {} ({} nodes, {} edges, {} classes)",
        out.display(),
        ds.graph.num_nodes(),
        ds.graph.num_edges() / if ds.graph.is_undirected() { 2 } else { 1 },
        ds.labels.num_classes()
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub scheme: Scheme,
    pub num_parts: usize,
    /// Number of edges whose endpoints lie in different parts.
    pub edge_cut: u64,
    /// Sum of the partitioner's edge weights over cut edges.
    pub weighted_cut: u64,
    pub per_part_sizes: Vec<usize>,
    pub per_part_entropy: Vec<f64>,
    pub total_entropy: f64,
    pub graph_entropy: f64,
    pub log_base: u32,
    pub max_part_size: usize,
    pub balance_cap: usize,
    pub wall_time_seconds: f64,
}

pub fn partition_cmd(cfg: &RunConfig, dataset: &Path, out: &Path) -> anyhow::Result<PartitionReport> {
    let ds = Dataset::load(dataset)?;
    let pc = &cfg.partitioner;
    let start = Instant::now();
    let weights = match pc.scheme {
        Scheme::Unit => EdgeWeights::unit(&ds.graph),
        Scheme::Ew => assign_edge_weights(&ds.graph, &ds.features, pc.c, pc.fanout_k),
    };
    let assignment = partition(&ds.graph, &weights, &pc.partitioner())?;
    let wall_time_seconds = start.elapsed().as_secs_f64();

    let entropy = total_entropy(&ds.labels, &assignment);
    let report = PartitionReport {
        scheme: pc.scheme,
        num_parts: pc.num_parts,
        edge_cut: edge_cut(&ds.graph, &EdgeWeights::unit(&ds.graph), &assignment),
        weighted_cut: edge_cut(&ds.graph, &weights, &assignment),
        max_part_size: entropy.per_part_sizes.iter().copied().max().unwrap_or(0),
        balance_cap: max_part_weight(ds.num_nodes() as i64, pc.num_parts, pc.imbalance_epsilon) as usize,
        per_part_sizes: entropy.per_part_sizes,
        per_part_entropy: entropy.per_part_entropy,
        total_entropy: entropy.total_entropy,
        graph_entropy: entropy.graph_entropy,
        log_base: entropy.log_base,
        wall_time_seconds,
    };

    ensure_dir(out)?;
    assignment.save(&out.join(ASSIGNMENT_FILE))?;
    write_json(&out.join(PARTITION_REPORT_FILE), &report)?;
    write_atomic(&out.join(PARTS_CSV_FILE), &parts_csv(&[("", &report)])?)?;
    println!(
        "{} partition into {} parts: cut {} edges, total entropy {:.4} (whole graph {:.4}), {:.2}s",
        pc.scheme.name(),
        pc.num_parts,
        report.edge_cut,
        report.total_entropy,
        report.graph_entropy,
        wall_time_seconds
    );
    Ok(report)
}

fn parts_csv(reports: &[(&str, &PartitionReport)]) -> anyhow::Result<Vec<u8>> {
    let labelled = reports.iter().any(|(name, _)| !name.is_empty());
    csv_bytes(|w| {
        if labelled {
            w.write_record(["partition", "part", "size", "entropy"])?;
        } else {
            w.write_record(["part", "size", "entropy"])?;
        }
        for (name, r) in reports {
            for (p, (size, h)) in r.per_part_sizes.iter().zip(&r.per_part_entropy).enumerate() {
                let mut row = vec![p.to_string(), size.to_string(), h.to_string()];
                if labelled {
                    row.insert(0, name.to_string());
                }
                w.write_record(&row)?;
            }
        }
        Ok(())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase0Metrics {
    pub mini_epochs: usize,
    pub iterations: usize,
    pub best_val_micro_f1: f64,
    pub messages: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase1Metrics {
    pub mini_epochs: Vec<usize>,
    pub best_val_micro_f1: Vec<f64>,
    pub messages: u64,
}

/// Scores of a training run. Holds nothing time-dependent, so identical
/// runs produce identical files; timings live in [`Timing`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: String,
    pub num_workers: usize,
    pub config: TrainConfig,
    pub phase0: Phase0Metrics,
    pub phase1: Option<Phase1Metrics>,
    /// Phase-0 model on every worker's test split.
    pub global_test: EvalReport,
    /// Personalised models on their own test splits.
    pub personalized_test: Option<EvalReport>,
    /// Final model of each worker on its own test split.
    pub test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTiming {
    pub phase: u8,
    pub worker_id: usize,
    pub mini_epoch: usize,
    pub wall_time: f64,
    pub step_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub phase0_seconds: f64,
    pub phase1_seconds: f64,
    pub total_train_seconds: f64,
    pub mini_epochs: Vec<EpochTiming>,
}

pub fn train_cmd(
    cfg: &RunConfig,
    dataset: &Path,
    assignment: &Path,
    baseline: bool,
    out: &Path,
) -> anyhow::Result<Metrics> {
    let ds = Dataset::load(dataset)?;
    let assignment = PartitionAssignment::load(assignment)?;
    let tc = cfg.train_config(baseline);
    let start = Instant::now();
    let outcome = trainer::train(&ds, &assignment, &tc)?;
    let total = start.elapsed().as_secs_f64();

    let metrics = metrics_of(&tc, &outcome);
    ensure_dir(out)?;
    write_atomic(&out.join(HISTORY_FILE), &history_csv(&outcome)?)?;
    write_json(&out.join(METRICS_FILE), &metrics)?;
    write_json(&out.join(TIMING_FILE), &timing_of(&outcome, total))?;
    let ckpt = out.join(CHECKPOINT_DIR);
    ensure_dir(&ckpt)?;
    outcome.phase0.params.save(&ckpt.join("global.ckpt"))?;
    if let Some(p1) = &outcome.phase1 {
        for (i, p) in p1.params.iter().enumerate() {
            p.save(&ckpt.join(format!("worker_{i}.ckpt")))?;
        }
    }
    println!(
        "{} run on {} workers: phase 0 {} mini-epochs, test micro-F1 {:.4} (mean per worker {:.4}), weighted-F1 {:.4}, {:.2}s",
        metrics.mode,
        tc.num_workers,
        metrics.phase0.mini_epochs,
        metrics.test.micro_f1,
        metrics.test.mean_micro_f1,
        metrics.test.weighted_f1,
        total
    );
    Ok(metrics)
}

fn metrics_of(tc: &TrainConfig, o: &TrainOutcome) -> Metrics {
    Metrics {
        mode: if tc.baseline { "baseline" } else { "two-phase" }.to_string(),
        num_workers: tc.num_workers,
        config: tc.clone(),
        phase0: Phase0Metrics {
            mini_epochs: o.phase0.epochs,
            iterations: o.phase0.iterations,
            best_val_micro_f1: o.phase0.best_score,
            messages: o.phase0.messages,
        },
        phase1: o.phase1.as_ref().map(|p1| Phase1Metrics {
            mini_epochs: (0..tc.num_workers)
                .map(|w| p1.history.iter().filter(|r| r.worker_id == w).count())
                .collect(),
            best_val_micro_f1: p1.best_scores.clone(),
            messages: p1.messages,
        }),
        global_test: o.global_eval.clone(),
        personalized_test: o.personal_eval.clone(),
        test: o.final_eval().clone(),
    }
}

fn timing_of(o: &TrainOutcome, total: f64) -> Timing {
    let records = o.phase0.history.iter().chain(o.phase1.iter().flat_map(|p| &p.history));
    Timing {
        phase0_seconds: o.phase0.wall_time,
        phase1_seconds: o.phase1.as_ref().map_or(0.0, |p| p.wall_time),
        total_train_seconds: total,
        mini_epochs: records
            .map(|r| EpochTiming {
                phase: r.phase,
                worker_id: r.worker_id,
                mini_epoch: r.mini_epoch,
                wall_time: r.wall_time,
                step_time: r.step_time,
            })
            .collect(),
    }
}

/// One row per worker and mini-epoch. A `switch` row marks the hand-over
/// from phase 0 to phase 1; its `mini_epoch` is the number of phase-0
/// mini-epochs run.
fn history_csv(o: &TrainOutcome) -> anyhow::Result<Vec<u8>> {
    let row = |r: &HistoryRecord| {
        [
            r.phase.to_string(),
            r.worker_id.to_string(),
            r.mini_epoch.to_string(),
            r.train_loss.to_string(),
            r.val_micro_f1.to_string(),
        ]
    };
    csv_bytes(|w| {
        w.write_record(["phase", "worker_id", "mini_epoch", "train_loss", "val_micro_f1"])?;
        for r in &o.phase0.history {
            w.write_record(row(r))?;
        }
        if let Some(p1) = &o.phase1 {
            w.write_record(["switch", "", &o.phase0.epochs.to_string(), "", ""])?;
            for r in &p1.history {
                w.write_record(row(r))?;
            }
        }
        Ok(())
    })
}

fn run_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Formatted columns: header plus rows, left-aligned.
fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut width: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&width)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn report_cmd(run_dirs: &[PathBuf], partition_dirs: &[PathBuf], out: Option<&Path>) -> anyhow::Result<()> {
    let mut runs_header = vec![
        "run",
        "mode",
        "micro_f1",
        "weighted_f1",
        "mean_worker_micro_f1",
        "train_seconds",
    ];
    let ratios = run_dirs.len() > 1;
    if ratios {
        runs_header.push("speedup");
    }
    let mut runs = Vec::new();
    let mut reference_time = None;
    for dir in run_dirs {
        let m: Metrics = read_json(&dir.join(METRICS_FILE))?;
        let t: Timing = read_json(&dir.join(TIMING_FILE))?;
        let reference = *reference_time.get_or_insert(t.total_train_seconds);
        let mut row = vec![
            run_name(dir),
            m.mode,
            format!("{:.4}", m.test.micro_f1),
            format!("{:.4}", m.test.weighted_f1),
            format!("{:.4}", m.test.mean_micro_f1),
            format!("{:.2}", t.total_train_seconds),
        ];
        if ratios {
            row.push(format!("{:.2}", reference / t.total_train_seconds));
        }
        runs.push(row);
    }

    let partitions_header = vec![
        "partition",
        "scheme",
        "num_parts",
        "edge_cut",
        "total_entropy",
        "graph_entropy",
        "wall_seconds",
    ];
    let mut partitions = Vec::new();
    let mut reports = Vec::new();
    for dir in partition_dirs {
        let r: PartitionReport = read_json(&dir.join(PARTITION_REPORT_FILE))?;
        partitions.push(vec![
            run_name(dir),
            r.scheme.name().to_string(),
            r.num_parts.to_string(),
            r.edge_cut.to_string(),
            format!("{:.4}", r.total_entropy),
            format!("{:.4}", r.graph_entropy),
            format!("{:.2}", r.wall_time_seconds),
        ]);
        reports.push((run_name(dir), r));
    }

    if !runs.is_empty() {
        print!("{}", text_table(&runs_header, &runs));
    }
    if !partitions.is_empty() {
        if !runs.is_empty() {
            println!();
        }
        print!("{}", text_table(&partitions_header, &partitions));
    }
    if let Some(out) = out {
        ensure_dir(out)?;
        let table = |header: &[&str], rows: &[Vec<String>]| {
            csv_bytes(|w| {
                w.write_record(header)?;
                for r in rows {
                    w.write_record(r)?;
                }
                Ok(())
            })
        };
        if !runs.is_empty() {
            write_atomic(&out.join("runs.csv"), &table(&runs_header, &runs)?)?;
        }
        if !partitions.is_empty() {
            write_atomic(&out.join("partitions.csv"), &table(&partitions_header, &partitions)?)?;
            let named: Vec<(&str, &PartitionReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
            write_atomic(&out.join("parts.csv"), &parts_csv(&named)?)?;
        }
    }
    Ok(())
}
