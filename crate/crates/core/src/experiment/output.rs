//! File writers. Everything except `timing.csv` is deterministic.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::{ExperimentReport, ScalingRow};
use crate::error::{Error, Result};
use crate::iasg::VerificationReport;
use crate::netgraph::Graph;
use crate::ofw::RegretReport;
use crate::scalar::Scalar;

pub const SNAPSHOT_DIR: &str = "snapshots";

#[derive(Serialize)]
#[serde(bound = "T: Scalar")]
struct RegretEntry<'a, T> {
    pair_id: usize,
    source: usize,
    sink: usize,
    eta: T,
    #[serde(flatten)]
    report: &'a RegretReport<T>,
    within_bound: bool,
    max_violation: T,
    oracle_calls: usize,
    clamped_entries: usize,
    clamped_calls: usize,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn to_json<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_graph(g: &Graph, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_file(&dir.join("graph.json"), &(g.to_json() + "\n"))
}

/// `trace.csv`, `regret.json`, `graph.json`, `timing.csv`, snapshots, and
/// the sampling files when intervals are present.
pub fn write_run_outputs<T: Scalar>(report: &ExperimentReport<T>, dir: &Path) -> Result<()> {
    write_graph(&report.graph, dir)?;

    let mut trace = String::from("pair_id,t,cost,cum_cost,clamps\n");
    for p in &report.pairs {
        let mut cum = T::zero();
        for row in &p.trace {
            cum = cum + row.loss;
            writeln!(trace, "{},{},{},{},{}", p.pair_id, row.t, row.loss, cum, row.clamps).unwrap();
        }
    }
    write_file(&dir.join("trace.csv"), &trace)?;

    let entries: Vec<RegretEntry<T>> = report
        .pairs
        .iter()
        .map(|p| RegretEntry {
            pair_id: p.pair_id,
            source: p.source,
            sink: p.sink,
            eta: p.eta,
            report: &p.regret,
            within_bound: p.regret.within_bound(),
            max_violation: p.max_violation,
            oracle_calls: p.diagnostics.calls,
            clamped_entries: p.diagnostics.clamped_entries,
            clamped_calls: p.diagnostics.clamped_calls,
        })
        .collect();
    write_file(&dir.join("regret.json"), &to_json(&entries))?;

    let snapshots: Vec<_> = report
        .pairs
        .iter()
        .flat_map(|p| p.snapshots.iter().map(move |s| (p.pair_id, s)))
        .collect();
    if !snapshots.is_empty() {
        let snap_dir = dir.join(SNAPSHOT_DIR);
        ensure_dir(&snap_dir)?;
        let width = report.horizon.to_string().len().max(4);
        for (pair, s) in snapshots {
            let name = format!("pair{pair:02}_step{:0width$}.dot", s.step);
            write_file(&snap_dir.join(name), &s.dot)?;
        }
    }

    if report.intervals.is_some() {
        write_interval_files(report, dir)?;
    }
    write_timing(report, dir)
}

/// `ci.json`, `costs.csv`, `graph.json` and `timing.csv` of a sampling run.
pub fn write_sampling_outputs<T: Scalar>(report: &ExperimentReport<T>, dir: &Path) -> Result<()> {
    write_graph(&report.graph, dir)?;
    write_interval_files(report, dir)?;
    write_timing(report, dir)
}

fn write_interval_files<T: Scalar>(report: &ExperimentReport<T>, dir: &Path) -> Result<()> {
    let intervals = report.intervals.as_deref().unwrap_or_default();
    write_file(&dir.join("ci.json"), &to_json(&intervals))?;
    let mut costs = String::from("pair_id,replica,cost\n");
    for iv in intervals {
        for (l, c) in iv.report.costs.iter().enumerate() {
            writeln!(costs, "{},{},{}", iv.pair_id, l, c).unwrap();
        }
    }
    write_file(&dir.join("costs.csv"), &costs)
}

fn write_timing<T>(report: &ExperimentReport<T>, dir: &Path) -> Result<()> {
    let t = &report.timing;
    let mut out = String::from("phase,seconds\n");
    for (name, d) in [
        ("setup", t.setup),
        ("weights", t.weights),
        ("optimization", t.optimization),
        ("oracle", t.oracle),
        ("sampling", t.sampling),
        ("total", t.total),
    ] {
        writeln!(out, "{name},{}", d.as_secs_f64()).unwrap();
    }
    for p in &report.pairs {
        writeln!(out, "pair{}_oracle,{}", p.pair_id, p.diagnostics.elapsed.as_secs_f64()).unwrap();
    }
    write_file(&dir.join("timing.csv"), &out)
}

pub fn write_scaling_table(rows: &[ScalingRow], dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    let mut out =
        String::from("nodes,total_seconds,oracle_seconds,horizon,oracle_calls,per_iteration_oracle_seconds\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.nodes, r.total_seconds, r.oracle_seconds, r.horizon, r.oracle_calls, r.per_iteration_oracle_seconds
        )
        .unwrap();
    }
    write_file(&dir.join("timing.csv"), &out)
}

pub fn write_iasg_report(report: &VerificationReport, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    write_file(&dir.join("iasg.json"), &to_json(report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{run_experiment, ExperimentConfig, PairSpec, SamplerSection};

    fn read(dir: &Path, name: &str) -> String {
        fs::read_to_string(dir.join(name)).unwrap()
    }

    #[test]
    fn writes_every_file() {
        let cfg = ExperimentConfig::<f64> {
            horizon: 12,
            pairs: Some(PairSpec::Count(2)),
            snapshot_steps: vec![3, 12],
            sampler: Some(SamplerSection {
                replicas: 5,
                ..Default::default()
            }),
            ..Default::default()
        };
        let report = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_run_outputs(&report, dir.path()).unwrap();

        let trace = read(dir.path(), "trace.csv");
        let lines: Vec<&str> = trace.lines().collect();
        assert_eq!(lines[0], "pair_id,t,cost,cum_cost,clamps");
        assert_eq!(lines.len(), 1 + 2 * 12);
        let last: Vec<&str> = lines[12].split(',').collect();
        let cum: f64 = last[3].parse().unwrap();
        assert!((cum - report.pairs[0].regret.realized_loss).abs() <= 1e-9);

        let regret: serde_json::Value = serde_json::from_str(&read(dir.path(), "regret.json")).unwrap();
        assert_eq!(regret.as_array().unwrap().len(), 2);
        assert_eq!(regret[1]["pair_id"], 1);
        assert!(regret[0]["bound"].as_f64().unwrap() > 0.0);

        let ci: serde_json::Value = serde_json::from_str(&read(dir.path(), "ci.json")).unwrap();
        assert_eq!(ci[0]["L"], 5);
        assert_eq!(read(dir.path(), "costs.csv").lines().count(), 1 + 2 * 5);
        assert!(Graph::from_json(&read(dir.path(), "graph.json")).is_ok());
        assert!(read(dir.path(), "timing.csv").starts_with("phase,seconds\n"));
        for name in ["pair00_step0003.dot", "pair01_step0012.dot"] {
            assert!(dir.path().join(SNAPSHOT_DIR).join(name).exists(), "{name}");
        }
    }

    #[test]
    fn unwritable_path_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let report = run_experiment(&ExperimentConfig::<f64> {
            horizon: 2,
            ..Default::default()
        })
        .unwrap();
        let err = write_run_outputs(&report, &blocker.join("sub")).unwrap_err();
        assert!(err.to_string().contains("sub"), "{err}");
    }
}
