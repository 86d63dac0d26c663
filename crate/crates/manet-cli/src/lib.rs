//! Library half of the `manet` binary: scenario loading, single runs,
//! parameter sweeps with CSV aggregation, and trace analysis. Plotting
//! lives in [`svgplot`].

pub mod svgplot;

use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use manet_core::engine::SimTime;
use manet_core::metrics::{analyze_events, MetricsReport};
use manet_core::scenario::{ProtocolChoice, ScenarioConfig};
use manet_core::trace::{parse_trace, TraceSink, WriterSink};
use manet_core::{switches_csv, RunOutput, Simulator};

/// Column names shared by per-run report CSVs.
pub const REPORT_HEADER: &str =
    "scenario,seed,protocol,nodes,speed,routing_overhead,data_sent,data_received,pdr,avg_delay_s,throughput_bps";

/// One run as a CSV row: identity columns then the metric columns.
pub fn report_row(scenario_id: &str, cfg: &ScenarioConfig, report: &MetricsReport) -> String {
    format!(
        "{},{},{},{},{},{}",
        scenario_id,
        cfg.seed,
        cfg.protocol.name(),
        cfg.nodes,
        cfg.speeds.max,
        report.csv_fields()
    )
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading scenario file {}", path.display()))?;
    let cfg = ScenarioConfig::parse(&text)
        .with_context(|| format!("in scenario file {}", path.display()))?;
    Ok(cfg)
}

/// Runs one scenario, streaming its trace to `trace_path`.
pub fn run_with_trace(cfg: &ScenarioConfig, trace_path: &Path) -> Result<RunOutput> {
    let file = fs::File::create(trace_path)
        .with_context(|| format!("creating {}", trace_path.display()))?;
    let mut sim = Simulator::new(cfg.clone(), WriterSink::new(BufWriter::new(file)))?;
    let output = sim.run().context("simulation failed")?;
    finish_trace(sim.sink, trace_path)?;
    Ok(output)
}

fn finish_trace(sink: WriterSink<BufWriter<fs::File>>, path: &Path) -> Result<()> {
    if let Some(e) = &sink.error {
        bail!("writing {}: {e}", path.display());
    }
    sink.into_inner()
        .flush()
        .with_context(|| format!("flushing {}", path.display()))
}

/// Runs one scenario into a directory, persisting the trace plus the
/// debugging artifacts: report row, final routing tables, connectivity
/// edges, node positions, flow definitions, per-packet delivery table,
/// and (for supervised runs) the switch log.
pub fn run_into_dir(cfg: &ScenarioConfig, scenario_id: &str, dir: &Path) -> Result<RunOutput> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let trace_path = dir.join("trace.tr");
    let file = fs::File::create(&trace_path)
        .with_context(|| format!("creating {}", trace_path.display()))?;
    let mut sim = Simulator::new(cfg.clone(), WriterSink::new(BufWriter::new(file)))?;
    let output = sim.run().context("simulation failed")?;

    let end = SimTime::from_secs(cfg.duration_s);
    write_artifact(dir, "report.csv", {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        s.push_str(&report_row(scenario_id, cfg, &output.report));
        s.push('\n');
        s
    })?;
    write_artifact(dir, "routes.csv", sim.snapshot_csv(end))?;
    write_artifact(dir, "connectivity.csv", sim.connectivity_csv())?;
    write_artifact(dir, "positions.csv", positions_csv(&sim, cfg.duration_s))?;
    write_artifact(dir, "flows.csv", flows_csv(&sim))?;
    write_artifact(dir, "delivery.csv", delivery_csv(&sim))?;
    if cfg.protocol == ProtocolChoice::Mrp {
        write_artifact(dir, "switches.csv", switches_csv(&output.switches))?;
    }

    finish_trace(sim.sink, &trace_path)?;
    Ok(output)
}

fn write_artifact(dir: &Path, name: &str, contents: String) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn positions_csv<S: TraceSink>(sim: &Simulator<S>, time_s: f64) -> String {
    let mut s = String::from("time,node,x,y\n");
    for (i, p) in sim.positions().iter().enumerate() {
        s.push_str(&format!("{time_s:.3},{i},{:.3},{:.3}\n", p.x, p.y));
    }
    s
}

fn flows_csv<S: TraceSink>(sim: &Simulator<S>) -> String {
    let mut s = String::from("flow,src,dst,rate_pps,start_s,stop_s\n");
    for f in sim.flows() {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            f.id, f.src.0, f.dst.0, f.rate, f.start_s, f.stop_s
        ));
    }
    s
}

fn delivery_csv<S: TraceSink>(sim: &Simulator<S>) -> String {
    let mut s = String::from("pkt_id,sent_at_s,received_at_s,delay_s,payload_bytes\n");
    for (id, rec) in sim.delivery_log().records() {
        let sent = rec.sent_at.secs();
        match rec.received_at {
            Some(at) => {
                let recv = at.secs();
                s.push_str(&format!(
                    "{id},{sent:.9},{recv:.9},{:.9},{}\n",
                    recv - sent,
                    rec.payload_bytes
                ));
            }
            None => s.push_str(&format!("{id},{sent:.9},NA,NA,{}\n", rec.payload_bytes)),
        }
    }
    s
}

/// `simulate` subcommand: one scenario into one output directory.
pub fn simulate(scenario: &Path, seed: Option<u64>, out_dir: &Path) -> Result<RunOutput> {
    let mut cfg = load_scenario(scenario)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let id = scenario_id(scenario);
    run_into_dir(&cfg, &id, out_dir)
}

fn scenario_id(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario")
        .to_string()
}

/// A parameter sweep: every value in `values` crossed with `seeds`
/// consecutive seeds starting at the base config's seed.
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub param: String,
    pub values: Vec<String>,
    pub seeds: u64,
}

pub struct SweepOutcome {
    pub runs: usize,
    pub reports_path: PathBuf,
    pub aggregate_path: PathBuf,
}

/// Splits a `name=v1,v2,...` flag into the parameter name and values.
pub fn parse_param_flag(flag: &str) -> Result<(String, Vec<String>)> {
    let usage = "expected --param name=v1,v2,...";
    let (name, list) = flag.split_once('=').context(usage)?;
    let name = name.trim();
    let values: Vec<String> = list
        .split(',')
        .map(|v| v.trim().to_string())
        .filter(|v| !v.is_empty())
        .collect();
    if name.is_empty() || values.is_empty() {
        bail!("{usage}");
    }
    if name == "seed" {
        bail!("sweep seeds with --seeds, not --param");
    }
    Ok((name.to_string(), values))
}

pub fn run_sweep(spec: &SweepSpec, out_dir: &Path) -> Result<SweepOutcome> {
    if spec.values.is_empty() {
        bail!("sweep needs at least one value");
    }
    if spec.seeds == 0 {
        bail!("sweep needs at least one seed per value");
    }
    // Build every cell config up front so a bad value fails before any run.
    let mut cells: Vec<(String, ScenarioConfig)> = Vec::new();
    for value in &spec.values {
        for k in 0..spec.seeds {
            let mut cfg = spec.base.clone();
            cfg.apply_override(&spec.param, value)
                .with_context(|| format!("sweep value {}={value}", spec.param))?;
            cfg.seed = spec.base.seed + k;
            cells.push((value.clone(), cfg));
        }
    }

    let runs_dir = out_dir.join("runs");
    fs::create_dir_all(&runs_dir).with_context(|| format!("creating {}", runs_dir.display()))?;

    // Cells share nothing; the indexed collect keeps (value, seed) order.
    let results: Vec<(String, ScenarioConfig, MetricsReport)> = cells
        .par_iter()
        .map(|(value, cfg)| {
            let trace = runs_dir.join(format!("{}-{value}-seed{}.tr", spec.param, cfg.seed));
            let output = run_with_trace(cfg, &trace).with_context(|| {
                format!("sweep cell {}={value} seed {} failed", spec.param, cfg.seed)
            })?;
            Ok((value.clone(), cfg.clone(), output.report))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut reports = String::from(REPORT_HEADER);
    reports.push('\n');
    for (value, cfg, report) in &results {
        reports.push_str(&report_row(&format!("{}={value}", spec.param), cfg, report));
        reports.push('\n');
    }
    let reports_path = out_dir.join("reports.csv");
    fs::write(&reports_path, &reports)
        .with_context(|| format!("writing {}", reports_path.display()))?;

    let aggregate_path = out_dir.join("aggregate.csv");
    fs::write(&aggregate_path, aggregate_csv(&spec.param, &spec.values, &results))
        .with_context(|| format!("writing {}", aggregate_path.display()))?;

    Ok(SweepOutcome {
        runs: results.len(),
        reports_path,
        aggregate_path,
    })
}

/// Per-value mean and sample standard deviation of every metric.
fn aggregate_csv(
    param: &str,
    values: &[String],
    results: &[(String, ScenarioConfig, MetricsReport)],
) -> String {
    let mut s = String::from(
        "param,value,protocol,nodes,speed,runs,\
         routing_overhead_mean,routing_overhead_std,\
         data_sent_mean,data_sent_std,\
         data_received_mean,data_received_std,\
         pdr_mean,pdr_std,\
         avg_delay_s_mean,avg_delay_s_std,\
         throughput_bps_mean,throughput_bps_std\n",
    );
    for value in values {
        let group: Vec<&(String, ScenarioConfig, MetricsReport)> =
            results.iter().filter(|(v, _, _)| v == value).collect();
        let (_, cfg, _) = group[0];
        let col = |s: &mut String, xs: Vec<f64>| {
            let (mean, std) = mean_std(&xs);
            s.push_str(&format!(",{mean:.6},{std:.6}"));
        };
        s.push_str(&format!(
            "{param},{value},{},{},{},{}",
            cfg.protocol.name(),
            cfg.nodes,
            cfg.speeds.max,
            group.len()
        ));
        col(
            &mut s,
            group.iter().map(|g| g.2.routing_overhead as f64).collect(),
        );
        col(&mut s, group.iter().map(|g| g.2.data_sent as f64).collect());
        col(
            &mut s,
            group.iter().map(|g| g.2.data_received as f64).collect(),
        );
        optional_col(&mut s, group.iter().map(|g| g.2.pdr).collect());
        optional_col(&mut s, group.iter().map(|g| g.2.avg_delay_s).collect());
        col(&mut s, group.iter().map(|g| g.2.throughput_bps).collect());
        s.push('\n');
    }
    s
}

/// Undefined ratios (no traffic, nothing delivered) are skipped; a cell
/// with no defined samples aggregates to NA.
fn optional_col(s: &mut String, xs: Vec<Option<f64>>) {
    let defined: Vec<f64> = xs.into_iter().flatten().collect();
    if defined.is_empty() {
        s.push_str(",NA,NA");
    } else {
        let (mean, std) = mean_std(&defined);
        s.push_str(&format!(",{mean:.6},{std:.6}"));
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// `analyze` subcommand: recompute metrics from a persisted trace.
pub fn analyze(trace_path: &Path, duration: Option<f64>) -> Result<MetricsReport> {
    let text = fs::read_to_string(trace_path)
        .with_context(|| format!("reading trace {}", trace_path.display()))?;
    let events =
        parse_trace(&text).with_context(|| format!("in trace {}", trace_path.display()))?;
    Ok(analyze_events(&events, duration))
}

/// Engine-vs-trace report agreement: counts and ratios must be exact;
/// the delay may differ by the trace's 1 ns timestamp resolution.
pub fn reports_agree(engine: &MetricsReport, recomputed: &MetricsReport) -> bool {
    let delay_close = match (engine.avg_delay_s, recomputed.avg_delay_s) {
        (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
        (None, None) => true,
        _ => false,
    };
    engine.data_sent == recomputed.data_sent
        && engine.data_received == recomputed.data_received
        && engine.routing_overhead == recomputed.routing_overhead
        && engine.pdr == recomputed.pdr
        && delay_close
        && engine.throughput_bps == recomputed.throughput_bps
        && engine.duration_s == recomputed.duration_s
}

/// Human-readable report block printed by `simulate` and `analyze`.
pub fn format_report(report: &MetricsReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("data sent         {}\n", report.data_sent));
    s.push_str(&format!("data received     {}\n", report.data_received));
    s.push_str(&format!("routing overhead  {}\n", report.routing_overhead));
    match report.pdr {
        Some(p) => s.push_str(&format!("delivery ratio    {p:.6}\n")),
        None => s.push_str("delivery ratio    NA (no data sent)\n"),
    }
    match report.avg_delay_s {
        Some(d) => s.push_str(&format!("avg delay         {d:.6} s\n")),
        None => s.push_str("avg delay         NA (nothing delivered)\n"),
    }
    s.push_str(&format!(
        "throughput        {:.3} bit/s\n",
        report.throughput_bps
    ));
    s.push_str(&format!("duration          {:.3} s\n", report.duration_s));
    s
}
