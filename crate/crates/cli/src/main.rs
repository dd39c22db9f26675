use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fedclust_core::experiment::{
    export_embeddings, report, run_experiment_with_workers, sweep_cells, RunStatus,
};
use fedclust_core::parallel::WORKERS_ENV;
use fedclust_core::{load_dataset, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "fedclust",
    version,
    about = "Federated deep clustering experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, p, rate, seed) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Concurrent runs; defaults to the number of cores.
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
    /// Check a config and its dataset without running anything.
    Validate { config: PathBuf },
    /// Write latent codes and labels of a finished run to embeddings/<run-id>.csv.
    ExportEmbeddings {
        run_id: String,
        #[arg(long, default_value = "results")]
        results: PathBuf,
    },
    /// Print NMI and kappa matrices for a results directory.
    Report { results_dir: PathBuf },
}

fn validate(path: &Path) -> anyhow::Result<ExperimentConfig> {
    let config = ExperimentConfig::load(path)
        .with_context(|| format!("invalid config {}", path.display()))?;
    let dataset = load_dataset(&config.dataset_source()).context("cannot load dataset")?;
    if let Some(k) = config.k {
        anyhow::ensure!(
            k == dataset.k,
            "config says k = {k}, dataset has {} classes",
            dataset.k
        );
    }
    println!(
        "{}: {} rows x {} features, {} classes; {} runs",
        config.name,
        dataset.len(),
        dataset.dim(),
        dataset.k,
        sweep_cells(&config).len()
    );
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, workers } => validate(&config).and_then(|config| {
            let workers = workers
                .filter(|&w| w > 0)
                .unwrap_or_else(fedclust_core::parallel::default_workers);
            let table = run_experiment_with_workers(&config, workers)?;
            let ok = table
                .rows
                .iter()
                .filter(|r| r.status == RunStatus::Ok)
                .count();
            println!(
                "{ok}/{} runs succeeded; results in {}",
                table.rows.len(),
                config.output.display()
            );
            anyhow::ensure!(!table.all_failed(), "every run failed");
            Ok(())
        }),
        Command::Validate { config } => validate(&config).map(|_| ()),
        Command::ExportEmbeddings { run_id, results } => export_embeddings(&results, &run_id)
            .map(|path| println!("{}", path.display()))
            .map_err(Into::into),
        Command::Report { results_dir } => report(&results_dir)
            .map(|text| print!("{text}"))
            .map_err(Into::into),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
