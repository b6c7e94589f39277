use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use roadsense::config::RunConfig;
use roadsense::generate::{generate_network, NetworkKind};
use roadsense::sim::bench::{bench_fusion, BENCH_HEADER};
use roadsense::sim::metrics::{rmse_at, to_csv};
use roadsense::sim::{prepare, run_scenario};
use roadsense::verify::run_suite;

#[derive(Parser)]
#[command(name = "roadsense", version, about = "Decentralized GP fusion and active sensing on road networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write the per-round metrics table.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the `output` entry of the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a property suite on random small instances and print a JSON report.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic road network file.
    GenNetwork {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time decentralized fusion against the exact GP.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// `<stem>.<suffix>.csv` next to the config when no output is configured.
fn output_path(config: &Path, cfg: &RunConfig, out: Option<PathBuf>, suffix: &str) -> PathBuf {
    out.or_else(|| cfg.output.clone()).unwrap_or_else(|| {
        let stem = config.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
        config.with_file_name(format!("{stem}.{suffix}.csv"))
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let scenario = prepare(&cfg)?;
            let rows = run_scenario(&scenario, &cfg)?;
            let path = output_path(&config, &cfg, out, "metrics");
            write(&path, &to_csv(&rows))?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
            for alg in &cfg.algorithms {
                if let Some(r) = rmse_at(&rows, alg, cfg.budget) {
                    eprintln!("{alg}: mean rmse at {} observations = {r:.4}", cfg.budget);
                }
            }
        }
        Command::Verify { suite, trials, seed } => {
            if trials == 0 {
                bail!("--trials must be at least 1");
            }
            let report = run_suite(&suite, trials, seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            eprintln!(
                "{suite}: {} passed, {} failed, {} skipped",
                report.passed, report.failed, report.skipped
            );
        }
        Command::GenNetwork { kind, size, seed, out } => {
            let net = generate_network(NetworkKind::parse(&kind)?, size, seed)?;
            write(&out, &net.to_csv())?;
            eprintln!("wrote {} segments and {} edges to {}", net.len(), net.edge_count(), out.display());
        }
        Command::Bench { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let scenario = prepare(&cfg)?;
            let b = &cfg.bench;
            let seed = cfg.seeds.first().copied().unwrap_or(0);
            let rows = bench_fusion(&scenario, &b.sensor_counts, b.observations, b.repetitions, seed)?;
            let mut text = format!("{BENCH_HEADER}\n");
            for r in &rows {
                text.push_str(&r.csv_row());
                text.push('\n');
                eprintln!("{} K={}: {:.4} s per sensor", r.method, r.sensors, r.per_sensor_seconds);
            }
            let path = output_path(&config, &cfg, out, "bench");
            write(&path, &text)?;
        }
    }
    Ok(())
}
