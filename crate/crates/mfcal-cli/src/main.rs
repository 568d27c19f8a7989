use std::path::PathBuf;

use clap::{Parser, Subcommand};

use mfcal_cli::commands::{run_benchmark, run_calibrate, run_optimize, ScenarioKind};
use mfcal_cli::config::{load_config, load_loop_config, LoopConfig};
use mfcal_cli::Result;

/// Multi-fidelity calibration and optimal-input analysis.
#[derive(Parser)]
#[command(name = "mfcal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the scaling parameter per output and write a report.
    Calibrate {
        /// Run configuration (`key = value` file).
        #[arg(long)]
        config: PathBuf,
        /// Low-fidelity dataset CSV.
        #[arg(long)]
        low: PathBuf,
        /// High-fidelity dataset CSV.
        #[arg(long)]
        high: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Characterize the distribution of the optimal inputs.
    Optimize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        low: PathBuf,
        #[arg(long)]
        high: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a built-in synthetic study end-to-end.
    Benchmark {
        /// Which study to run.
        #[arg(long, value_enum)]
        scenario: ScenarioKind,
        /// Datasets for the mse-study scenario (default 50).
        #[arg(long)]
        n_datasets: Option<usize>,
        /// Optional config supplying N_u, n_rep, N, seed, out_dir.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate {
            config,
            low,
            high,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let artifacts = run_calibrate(&cfg, &low, &high)?;
            for (name, u) in cfg.outputs.iter().zip(&artifacts.u_hats) {
                println!("{name}: u_hat = {u:.4}");
            }
            println!("wrote {}", artifacts.report_path.display());
            Ok(())
        }
        Command::Optimize {
            config,
            low,
            high,
            seed,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let artifacts = run_optimize(&cfg, &low, &high)?;
            println!(
                "recorded {} optima ({} iterations skipped)",
                artifacts.n_recorded, artifacts.n_skipped
            );
            println!("wrote {}", artifacts.optima_csv.display());
            println!("wrote {}", artifacts.summary_json.display());
            for p in &artifacts.histogram_csvs {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Benchmark {
            scenario,
            n_datasets,
            config,
            seed,
        } => {
            let loops = match config {
                Some(path) => load_loop_config(&path)?,
                None => LoopConfig::default(),
            };
            let run = run_benchmark(scenario, n_datasets, &loops, seed)?;
            print!("{}", run.text);
            if let Some(path) = run.json_path {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
