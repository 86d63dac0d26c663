//! The command surface end to end: simulate artifact layout, analyze as
//! an independent recomputation, sweep aggregation and isolation, and
//! the compiled binary's flag wiring.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use manet_cli::{
    analyze, load_scenario, report_row, reports_agree, run_sweep, run_with_trace, simulate,
    SweepSpec, REPORT_HEADER,
};

const SMALL: &str = "nodes=10\nduration=15\nseed=3\nprotocol=aodv\n";

fn write_scenario(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("scenario.txt");
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn simulate_writes_every_artifact_and_analyze_agrees() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let out = tmp.path().join("run");
    let output = simulate(&scenario, Some(9), &out).unwrap();

    for name in [
        "trace.tr",
        "report.csv",
        "routes.csv",
        "connectivity.csv",
        "positions.csv",
        "flows.csv",
        "delivery.csv",
    ] {
        assert!(out.join(name).exists(), "{name} missing");
    }
    assert!(
        !out.join("switches.csv").exists(),
        "switch log is for supervised runs only"
    );

    let report_csv = fs::read_to_string(out.join("report.csv")).unwrap();
    let mut lines = report_csv.lines();
    assert_eq!(lines.next(), Some(REPORT_HEADER));
    let row = lines.next().unwrap();
    assert!(row.starts_with("scenario,9,aodv,10,5,"), "row was {row}");

    let recomputed = analyze(&out.join("trace.tr"), Some(15.0)).unwrap();
    assert!(
        reports_agree(&output.report, &recomputed),
        "engine {:?} vs trace {recomputed:?}",
        output.report
    );
}

#[test]
fn supervised_runs_write_the_switch_log() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(
        tmp.path(),
        "nodes=12\nduration=20\nseed=4\nprotocol=mrp\nmrp_policy=forced_alternate\nmrp_min_dwell=1\n",
    );
    let out = tmp.path().join("run");
    let output = simulate(&scenario, None, &out).unwrap();
    assert!(!output.switches.is_empty());
    let log = fs::read_to_string(out.join("switches.csv")).unwrap();
    assert!(log.starts_with("time,from,to,trigger\n"));
    assert_eq!(log.lines().count(), output.switches.len() + 1);
}

#[test]
fn sweep_runs_every_cell_and_reruns_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let base = load_scenario(&write_scenario(tmp.path(), SMALL)).unwrap();
    let spec = SweepSpec {
        base,
        param: "nodes".into(),
        values: vec!["8".into(), "12".into()],
        seeds: 2,
    };
    let out_a = tmp.path().join("sweep-a");
    let outcome = run_sweep(&spec, &out_a).unwrap();
    assert_eq!(outcome.runs, 4);
    assert_eq!(fs::read_dir(out_a.join("runs")).unwrap().count(), 4);

    let reports = fs::read_to_string(&outcome.reports_path).unwrap();
    assert_eq!(reports.lines().count(), 5, "header plus one row per run");
    let aggregate = fs::read_to_string(&outcome.aggregate_path).unwrap();
    assert_eq!(aggregate.lines().count(), 3, "header plus one row per value");

    let out_b = tmp.path().join("sweep-b");
    run_sweep(&spec, &out_b).unwrap();
    assert_eq!(
        aggregate,
        fs::read_to_string(out_b.join("aggregate.csv")).unwrap()
    );
}

#[test]
fn any_sweep_cell_rerun_alone_reproduces_its_row() {
    let tmp = tempfile::tempdir().unwrap();
    let base = load_scenario(&write_scenario(tmp.path(), SMALL)).unwrap();
    let spec = SweepSpec {
        base: base.clone(),
        param: "nodes".into(),
        values: vec!["8".into(), "12".into()],
        seeds: 2,
    };
    let outcome = run_sweep(&spec, &tmp.path().join("sweep")).unwrap();
    let reports = fs::read_to_string(&outcome.reports_path).unwrap();

    // The nodes=12, second-seed cell is the last row.
    let mut cfg = base;
    cfg.apply_override("nodes", "12").unwrap();
    cfg.seed += 1;
    let output = run_with_trace(&cfg, &tmp.path().join("cell.tr")).unwrap();
    let expected = report_row("nodes=12", &cfg, &output.report);
    assert_eq!(reports.lines().last().unwrap(), expected);
}

#[test]
fn single_seed_aggregate_equals_the_run_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let base = load_scenario(&write_scenario(tmp.path(), SMALL)).unwrap();
    let spec = SweepSpec {
        base: base.clone(),
        param: "nodes".into(),
        values: vec!["10".into()],
        seeds: 1,
    };
    let outcome = run_sweep(&spec, &tmp.path().join("sweep")).unwrap();
    let output = run_with_trace(&base, &tmp.path().join("solo.tr")).unwrap();

    let aggregate = fs::read_to_string(&outcome.aggregate_path).unwrap();
    let row = aggregate.lines().nth(1).unwrap();
    let r = &output.report;
    assert!(row.contains(&format!(",{:.6},0.000000", r.routing_overhead as f64)));
    assert!(row.contains(&format!(",{:.6},0.000000", r.pdr.unwrap())));
    assert!(row.contains(&format!(",{:.6},0.000000", r.throughput_bps)));
}

#[test]
fn the_binary_wires_all_four_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = write_scenario(tmp.path(), SMALL);
    let bin = env!("CARGO_BIN_EXE_manet");
    let run = |args: Vec<String>| {
        let out = Command::new(bin).args(&args).output().unwrap();
        assert!(
            out.status.success(),
            "manet {args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    };
    let arg = |p: &Path| p.to_str().unwrap().to_string();

    let run_dir = tmp.path().join("run");
    let stdout = run(vec![
        "simulate".into(),
        "--scenario".into(),
        arg(&scenario),
        "--seed".into(),
        "3".into(),
        "--out".into(),
        arg(&run_dir),
    ]);
    assert!(stdout.contains("delivery ratio"));

    let stdout = run(vec![
        "analyze".into(),
        "--trace".into(),
        arg(&run_dir.join("trace.tr")),
        "--duration".into(),
        "15".into(),
    ]);
    assert!(stdout.contains("data sent"));

    let sweep_dir = tmp.path().join("sweep");
    run(vec![
        "sweep".into(),
        "--scenario".into(),
        arg(&scenario),
        "--param".into(),
        "nodes=8,12".into(),
        "--seeds".into(),
        "1".into(),
        "--out".into(),
        arg(&sweep_dir),
    ]);

    let svg_path = tmp.path().join("pdr.svg");
    run(vec![
        "plot".into(),
        "--csv".into(),
        arg(&sweep_dir.join("aggregate.csv")),
        "--metric".into(),
        "pdr".into(),
        "--out".into(),
        arg(&svg_path),
    ]);
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert!(svg.starts_with("<svg"));

    let out = Command::new(bin)
        .args([
            "plot",
            "--csv",
            &arg(&sweep_dir.join("aggregate.csv")),
            "--metric",
            "latency",
            "--out",
            &arg(&tmp.path().join("x.svg")),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("valid metrics"));
}
