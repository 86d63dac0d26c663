use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use manet_cli::svgplot;

#[derive(Parser)]
#[command(name = "manet", version, about = "Deterministic ad-hoc network routing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and persist its trace and report artifacts
    Simulate {
        /// Scenario file (key=value lines; missing keys take defaults)
        #[arg(long)]
        scenario: PathBuf,
        /// Override the scenario's RNG seed
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (created if absent)
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (value, seed) cell of a parameter sweep and aggregate
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// Swept parameter as name=v1,v2,... (any scenario key)
        #[arg(long)]
        param: String,
        /// Seeds per sweep value, consecutive from the scenario seed
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recompute the metrics report from a persisted trace
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        /// Simulated seconds (defaults to the last trace timestamp)
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Render one metric of an aggregate CSV as an SVG line chart
    Plot {
        #[arg(long)]
        csv: PathBuf,
        /// One of: pdr, avg_delay_s, routing_overhead, throughput_bps,
        /// data_sent, data_received
        #[arg(long)]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate {
            scenario,
            seed,
            out,
        } => {
            let output = manet_cli::simulate(&scenario, seed, &out)?;
            print!("{}", manet_cli::format_report(&output.report));
            if !output.switches.is_empty() {
                println!("protocol switches  {}", output.switches.len());
            }
            println!("artifacts written to {}", out.display());
        }
        Command::Sweep {
            scenario,
            param,
            seeds,
            out,
        } => {
            let base = manet_cli::load_scenario(&scenario)?;
            let (param, values) = manet_cli::parse_param_flag(&param)?;
            let spec = manet_cli::SweepSpec {
                base,
                param,
                values,
                seeds,
            };
            let outcome = manet_cli::run_sweep(&spec, &out)?;
            println!(
                "{} runs complete\nper-run rows: {}\naggregate:    {}",
                outcome.runs,
                outcome.reports_path.display(),
                outcome.aggregate_path.display()
            );
        }
        Command::Analyze { trace, duration } => {
            let report = manet_cli::analyze(&trace, duration)?;
            print!("{}", manet_cli::format_report(&report));
        }
        Command::Plot { csv, metric, out } => {
            let text = fs::read_to_string(&csv)
                .with_context(|| format!("reading {}", csv.display()))?;
            let svg = svgplot::render(&text, &metric)?;
            fs::write(&out, svg).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}
