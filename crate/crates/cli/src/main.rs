use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use esigo_cli::runner::{b2_summary, default_out_dir, run_config, RunOptions};
use esigo_cli::{config, parse_weight_descriptor, CliError};

#[derive(Parser)]
#[command(name = "esigo", about = "Experiments on the isotropic evolution-strategy flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiments of a config file.
    Run {
        config: PathBuf,
        /// Run only the experiment with this id (repeatable).
        #[arg(long)]
        only: Vec<String>,
        /// Worker threads; defaults to the number of CPUs.
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory; defaults to $ESIGO_OUT_DIR or ./esigo-out.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report the B1 grid check and the B2 constant of a weight.
    B2 {
        /// JSON descriptor or short form such as `power:2`.
        #[arg(long)]
        weight: String,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 10_001)]
        grid: usize,
    },
    /// Print the version.
    Version,
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Run {
            config,
            only,
            workers,
            out,
        } => {
            let cfg = config::load(&config)?;
            let opts = RunOptions {
                out_dir: Some(out.unwrap_or_else(default_out_dir)),
            };
            let reports = run_config(&cfg, &only, workers, &opts)?;
            for r in &reports {
                print!("{}", r.render());
            }
            let passed = reports.iter().filter(|r| r.pass).count();
            println!("{passed} of {} experiments passed", reports.len());
            Ok(passed == reports.len())
        }
        Command::B2 { weight, dim, grid } => {
            if dim == 0 || grid < 2 {
                return Err(CliError::Core(esigo_core::Error::Configuration(
                    "--dim must be positive and --grid at least 2".into(),
                )));
            }
            let w = parse_weight_descriptor(&weight)?.build()?;
            let s = b2_summary(&w, dim, grid)?;
            for (k, v) in s.lines() {
                println!("{k}: {v}");
            }
            println!("B2: {}", if s.b2_pass { "pass" } else { "fail" });
            Ok(s.b2_pass)
        }
        Command::Version => {
            println!("esigo {}", env!("CARGO_PKG_VERSION"));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
