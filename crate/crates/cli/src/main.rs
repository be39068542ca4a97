use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use banach_fbs_cli::config::{RawConfig, SparseConfig, TvConfig};
use banach_fbs_cli::diagnose::cmd_diagnose;
use banach_fbs_cli::sparse::cmd_sparse_demo;
use banach_fbs_cli::tv_cmd::cmd_tv;
use banach_fbs_cli::CliResult;

#[derive(Parser)]
#[command(name = "banach-fbs", version, about = "Forward-backward splitting experiments in Banach spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Recover spikes from integrated noisy data.
    SparseDemo {
        #[arg(long)]
        config: PathBuf,
        /// Number of exponents solved in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Denoise or deblur a phantom with a total-variation penalty.
    Tv {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit the objective decay of a solver history.
    Diagnose {
        #[arg(long)]
        history: PathBuf,
        /// Reference (minimal) objective value.
        #[arg(long = "ref", allow_hyphen_values = true)]
        reference: f64,
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        burn_in: usize,
        /// Output path of the rate table (default: next to the history).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn base_dir(config: &Path) -> PathBuf {
    config.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::SparseDemo { config, jobs } => {
            let cfg = SparseConfig::from_raw(&RawConfig::load(&config)?)?;
            for r in cmd_sparse_demo(&cfg, jobs)? {
                println!(
                    "p = {}: discrepancy {:.6}, nnz {}, data error {:.6}, alpha {:.6e}, {} iterations ({})",
                    r.p,
                    r.discrepancy,
                    r.nnz,
                    r.data_error,
                    r.alpha,
                    r.history.len(),
                    r.history.status
                );
            }
            println!("outputs in {}", cfg.output.display());
        }
        Command::Tv { config } => {
            let cfg = TvConfig::from_raw(&RawConfig::load(&config)?, &base_dir(&config))?;
            let r = cmd_tv(&cfg)?;
            println!(
                "TV {:.6} (data {:.6}, truth {:.6}), discrepancy {:.6}, {} iterations ({})",
                r.tv_output,
                r.tv_data,
                r.tv_true,
                r.discrepancy,
                r.history.len(),
                r.history.status
            );
            println!("outputs in {}", cfg.output.display());
        }
        Command::Diagnose {
            history,
            reference,
            p,
            burn_in,
            out,
        } => {
            let d = cmd_diagnose(&history, reference, p, burn_in, out.as_deref())?;
            println!("C = {}", d.fit.envelope);
            println!("slope = {}", d.fit.slope);
            println!("rate table: {}", d.rate_table.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("banach-fbs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
