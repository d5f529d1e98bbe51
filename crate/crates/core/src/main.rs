use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use mrdtg::sim::{export_metrics, run, ScenarioConfig, Termination};

#[derive(Parser)]
#[command(name = "mrdtg", version, about = "Multi-agent exploration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write coverage, comm, timing and summary CSVs.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long = "time-limit")]
        time_limit: Option<f64>,
        #[arg(long)]
        coverage: Option<f64>,
        #[arg(long)]
        baseline: Option<Toggle>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> anyhow::Result<Termination> {
    let Command::Run {
        config,
        seed,
        agents,
        time_limit,
        coverage,
        baseline,
        out,
    } = cli.command;
    let mut cfg = ScenarioConfig::load(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = agents {
        cfg.agents = n;
        cfg.starts.truncate(n);
    }
    if let Some(t) = time_limit {
        cfg.time_limit = t;
    }
    if let Some(c) = coverage {
        cfg.coverage_target = c;
    }
    if let Some(b) = baseline {
        cfg.baseline = matches!(b, Toggle::On);
    }
    let metrics = run(cfg)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    export_metrics(&metrics, &out)?;
    let term = metrics.termination.expect("run sets a termination");
    eprintln!(
        "{}: coverage {:.3}, cooperation {} B, mapping {} B",
        term.as_str(),
        metrics.final_coverage(),
        metrics.ledger.cooperation,
        metrics.ledger.mapping
    );
    Ok(term)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(Termination::CoverageReached) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
