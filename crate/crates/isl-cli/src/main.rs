use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use isl_cli::{report, run, sweep, CliError, ExperimentConfig, Status};

#[derive(Parser)]
#[command(
    name = "isl",
    version,
    about = "Run inverse-scattering experiments from JSON configs"
)]
struct Cli {
    /// Worker threads; defaults to the config's `workers`, then to the number of CPUs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory; defaults to the config's `out`, then to runs/<experiment>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment.
    Run { config: PathBuf },
    /// Run one experiment per value of a numeric config field.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 0..)]
        values: Vec<f64>,
    },
    /// Summarize every record.json under a directory.
    Report { dir: PathBuf },
}

fn workers(cli: &Cli, cfg: &ExperimentConfig) -> usize {
    cli.workers
        .or(cfg.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or(cfg.out.clone())
        .unwrap_or_else(|| Path::new("runs").join(cfg.experiment.name()))
}

fn main_inner(cli: &Cli) -> Result<bool, CliError> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(config)?;
            let out = out_dir(cli, &cfg);
            let r = run(&cfg, &out, workers(cli, &cfg))?;
            for m in &r.metrics {
                let value = m
                    .value
                    .map(|v| format!("{v:.6e}"))
                    .unwrap_or_else(|| "non-finite".into());
                println!(
                    "{:<24} {value:>14}  {:<16} {}",
                    m.name,
                    m.tolerance(),
                    if m.pass { "pass" } else { "FAIL" }
                );
            }
            if let Some(f) = &r.failure {
                println!("failure: {f}");
            }
            println!(
                "{} {:?} -> {}",
                cfg.experiment.name(),
                r.status,
                out.join("record.json").display()
            );
            Ok(r.status == Status::Pass)
        }
        Command::Sweep {
            config,
            axis,
            values,
        } => {
            let cfg = ExperimentConfig::load(config)?;
            let out = out_dir(cli, &cfg);
            let (summary, _) = sweep(&cfg, axis, values, &out, workers(cli, &cfg))?;
            for it in &summary.items {
                let metric = it
                    .key_metric
                    .map(|v| format!("{v:.6e}"))
                    .unwrap_or_else(|| "-".into());
                println!(
                    "{axis}={:<10} {:?} {metric} {}",
                    it.value,
                    it.status,
                    it.failure.as_deref().unwrap_or("")
                );
            }
            if let Some(s) = summary.aggregate_slope {
                println!(
                    "aggregate slope of {} vs {axis}: {s:.6}",
                    summary.metric.as_deref().unwrap_or("key metric")
                );
            }
            Ok(summary.items.iter().all(|it| it.status == Status::Pass))
        }
        Command::Report { dir } => {
            let out = cli.out.clone().unwrap_or_else(|| dir.clone());
            let r = report(dir, &out)?;
            println!(
                "{} passed, {} failed -> {}",
                r.passed,
                r.failed,
                out.join("report.md").display()
            );
            Ok(r.failed == 0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
