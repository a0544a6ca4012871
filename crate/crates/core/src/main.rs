use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wmlab::harness::config::{parse_config, RunConfig, OUT_DIR_ENV};
use wmlab::harness::runner;
use wmlab::{Error, Result};

#[derive(Parser)]
#[command(name = "wmlab", version, about = "Weak-measurement spin-squeezing laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single protocol point (or the configured sweep).
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config and WMLAB_OUT_DIR).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Execute the configured sweep; errors when no sweep axis is present.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Optimize the weak value (and subpulse weights) for the configured scheme.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the analytic path against the exact oracle.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Maximum relative deviation of xi^2 before failing with exit code 4.
        #[arg(long, default_value_t = 0.03)]
        tolerance: f64,
    },
    /// Emit the data series behind one of fig2a, fig2b, fig2c.
    Figure {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn load_config(path: &PathBuf) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn resolve_out(config: Option<&RunConfig>, out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| config.map(|c| c.out_dir()))
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("wmlab-out"))
}

fn report_written(written: &[PathBuf]) {
    for path in written {
        println!("wrote {}", path.display());
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run { config, out, workers } => {
            let config = load_config(&config)?;
            let dir = resolve_out(Some(&config), out);
            let summary = runner::cmd_run(&config, &dir, workers)?;
            report_written(&summary.written);
        }
        Command::Sweep { config, out, workers } => {
            let config = load_config(&config)?;
            if config.sweep.is_none() {
                return Err(Error::Validation("sweep needs a [sweep] axis".into()));
            }
            let dir = resolve_out(Some(&config), out);
            let summary = runner::cmd_run(&config, &dir, workers)?;
            report_written(&summary.written);
        }
        Command::Optimize { config, out } => {
            let config = load_config(&config)?;
            let dir = resolve_out(Some(&config), out);
            let summary = runner::cmd_optimize(&config, &dir)?;
            for (_, rows) in &summary.series {
                for row in rows {
                    println!(
                        "kappa {:.6}: xi^2 = {:.9} ({:.3} dB), {}",
                        row.sweep_param, row.report.xi_sq, row.report.xi_db, row.flags
                    );
                }
            }
            report_written(&summary.written);
        }
        Command::Oracle {
            config,
            out,
            workers,
            tolerance,
        } => {
            let config = load_config(&config)?;
            let dir = resolve_out(Some(&config), out);
            let cmp = runner::cmd_oracle(&config, &dir, workers, tolerance)?;
            for line in &cmp.lines {
                println!("{line}");
            }
            report_written(&cmp.written);
            if !cmp.all_pass {
                eprintln!("oracle comparison exceeded tolerance {tolerance}");
                return Ok(4);
            }
        }
        Command::Figure { name, out, workers } => {
            let dir = resolve_out(None, out);
            let summary = runner::cmd_figure(&name, &dir, workers)?;
            report_written(&summary.written);
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
