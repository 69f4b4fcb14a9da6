use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};
use privknap::workload::WorkloadFile;
use privknap_cli::{
    build_workload, describe_result, run_experiment_in, sweep_in, ExperimentConfig, SweepParam, Workload,
};

#[derive(Parser)]
#[command(name = "privknap", version, about = "Privacy budget scheduling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config and print it in canonical form.
    Validate { config: PathBuf },
    /// Run every (scheduler, seed) cell of a config.
    Run {
        config: PathBuf,
        /// Overrides the config and PRIVKNAP_OUTPUT_DIR.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run a config once per value of one parameter.
    Sweep {
        config: PathBuf,
        /// task_count, block_count, T, sigma_blocks or sigma_alpha.
        #[arg(short, long)]
        param: SweepParam,
        #[arg(short, long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write the workload a config generates for one seed as JSON.
    GenWorkload {
        config: PathBuf,
        #[arg(short, long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Summarize a run directory.
    DescribeResult { dir: PathBuf },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            print!("{}", cfg.to_toml());
            eprintln!("ok: {} cells", cfg.seeds.len() * cfg.schedulers.len());
        }
        Command::Run { config, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output.unwrap_or_else(|| cfg.output_dir());
            let out = run_experiment_in(&cfg, &dir)?;
            print!("{}", describe_result(&out.dir)?);
            if out.failed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Sweep {
            config,
            param,
            values,
            output,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = output.unwrap_or_else(|| cfg.output_dir());
            let out = sweep_in(&cfg, param, &values, &dir)?;
            for (v, run) in &out.runs {
                println!("== {param}={v}");
                print!("{}", describe_result(&run.dir)?);
            }
            println!("combined table: {}", dir.join("sweep.csv").display());
            if out.failed() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::GenWorkload { config, seed, output } => {
            let cfg = ExperimentConfig::load(&config)?;
            let Workload::Specs { grid, specs } = build_workload(&cfg, seed)? else {
                bail!("scenario workloads carry their own blocks and have no workload file");
            };
            let json = WorkloadFile::from_specs(&grid, &specs).to_json()?;
            privknap_cli::write_atomic(&output, json.as_bytes())?;
            eprintln!("wrote {} tasks to {}", specs.len(), output.display());
        }
        Command::DescribeResult { dir } => print!("{}", describe_result(&dir)?),
    }
    Ok(ExitCode::SUCCESS)
}
