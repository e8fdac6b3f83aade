// SPDX-License-Identifier: Apache-2.0

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use edgespace_cli::data;
use edgespace_cli::demo::{self, DemoOptions};
use edgespace_cli::evaluate::{self, EvaluateArgs};
use edgespace_cli::serve::{self, ServeOptions};
use edgespace_cli::train::{self, Task, TrainArgs};
use edgespace_cli::{CliError, Format, RunConfig};
use edgespace_core::Modality;

#[derive(Parser)]
#[command(name = "edgespace", version, about = "Building sensor analytics over a simulated dataspace and cloud-edge continuum")]
struct Cli {
    /// TOML run configuration; defaults apply when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `rng_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic readings, ground-truth labels and an occupancy table.
    Simulate {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        days: Option<u32>,
        #[arg(long)]
        cadence: Option<i64>,
    },
    /// Normalize a normalized or occupancy CSV into a data directory.
    Import {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Room and device that occupancy rows are attributed to.
        #[arg(long, default_value = "rdRoom")]
        room: String,
        #[arg(long, default_value = "shellyht-rdRoom")]
        device: String,
    },
    /// Train one model family and save it to the model directory.
    Train {
        #[arg(long, value_enum)]
        task: Task,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        modality: Option<Modality>,
        #[arg(long)]
        device: Option<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Score a saved model on a dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        modality: Option<Modality>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Scripted end-to-end run: placement, negotiation, streaming, inference.
    DemoDataspace {
        #[arg(long)]
        deny_consumer: bool,
        #[arg(long)]
        kill_edge_node: bool,
        #[arg(long)]
        state_dir: Option<PathBuf>,
        /// Load models from this directory instead of training.
        #[arg(long)]
        models: Option<PathBuf>,
        /// Train with the configured grids instead of the quick ones.
        #[arg(long)]
        full_grids: bool,
    },
    /// Serve the building API, bootstrapping state with the demo if needed.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        state_dir: Option<PathBuf>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.rng_seed = s;
    }
    match cli.command {
        Command::Simulate { out: dir, days, cadence } => {
            if let Some(d) = days {
                cfg.simulation.days = d;
            }
            if let Some(c) = cadence {
                cfg.simulation.cadence_secs = c;
            }
            cfg.validate()?;
            let dir = dir.unwrap_or_else(|| cfg.paths.data_dir.clone());
            data::simulate(&cfg, &dir, out)?;
        }
        Command::Import { input, out: dir, room, device } => {
            let dir = dir.unwrap_or_else(|| cfg.paths.data_dir.clone());
            data::import(&input, &dir, &room, &device, out)?;
        }
        Command::Train { task, data, out: dir, modality, device, format } => {
            let args = TrainArgs {
                task,
                data: data.unwrap_or_else(|| cfg.paths.data_dir.clone()),
                out: dir.unwrap_or_else(|| cfg.paths.model_dir.clone()),
                modality,
                device,
                format,
            };
            train::train(&cfg, &args, out)?;
        }
        Command::Evaluate { model, data, modality, format } => {
            let args = EvaluateArgs { model, data: data.unwrap_or_else(|| cfg.paths.data_dir.clone()), modality, format };
            evaluate::evaluate(&cfg, &args, out)?;
        }
        Command::DemoDataspace { deny_consumer, kill_edge_node, state_dir, models, full_grids } => {
            demo::run(&cfg, &DemoOptions { deny_consumer, kill_edge_node, state_dir, models, full_grids }, out)?;
        }
        Command::Serve { port, state_dir, static_dir } => {
            serve::serve(&cfg, &ServeOptions { port, state_dir, static_dir }, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(cli, &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
