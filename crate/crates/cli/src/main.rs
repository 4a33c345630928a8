use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use auxcal_cli::config::{ExperimentConfig, HarnessMode};
use auxcal_cli::error::CliError;
use auxcal_cli::report::emit_reports;
use auxcal_cli::runner::{run_ablation, run_grid_search};

#[derive(Parser)]
#[command(name = "auxcal", version, about = "Auxiliary-objective calibration experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ablation matrix (and optionally the fixed-weight grid)
    /// described by a config file.
    Run {
        /// Experiment config file (`key = value` lines).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's mode list (e.g. `--modes CLSO,D4AM`).
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<HarnessMode>>,
        /// Also run the fixed-weight grid search.
        #[arg(long)]
        grid: bool,
        /// Override the config's seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Parse and validate everything, print the plan, run nothing.
        #[arg(long)]
        dry_run: bool,
        /// Override the config's worker count.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn summarize_plan(cfg: &ExperimentConfig, grid: bool) {
    println!(
        "plan: {} mode(s) x {} seed(s), {} steps/run, output {}",
        cfg.ablation_modes.len(),
        cfg.seeds.len(),
        cfg.total_steps,
        cfg.output_dir.display()
    );
    if grid {
        println!(
            "plan: grid of {} weight(s) x {} seed(s)",
            cfg.grid_weights.len(),
            cfg.seeds.len()
        );
    }
}

fn print_summaries(report: &auxcal_cli::runner::AggregateReport) {
    for s in &report.summaries {
        println!(
            "{:>8}  mean error {:.4} over {} seed(s)",
            s.label, s.overall_mean, s.seeds_completed
        );
    }
    if let Some(b7) = report.best7_grid_average {
        println!("best-7 grid average: {b7:.4}");
    }
    let failed = report.cells.iter().filter(|c| c.failure.is_some()).count();
    if failed > 0 {
        eprintln!("warning: {failed} cell(s) failed; see the cells CSV for messages");
    }
}

fn run_command(cmd: Command) -> Result<(), CliError> {
    let Command::Run { config, modes, grid, seeds, out, dry_run, jobs } = cmd;
    let mut cfg = ExperimentConfig::parse_file(&config)?;
    if let Some(modes) = modes {
        cfg.ablation_modes = modes;
    }
    if let Some(seeds) = seeds {
        cfg.seeds = seeds;
    }
    if let Some(out) = out {
        cfg.output_dir = out;
    }
    if let Some(jobs) = jobs {
        cfg.jobs = jobs;
    }
    cfg.validate()?;
    summarize_plan(&cfg, grid);
    if dry_run {
        return Ok(());
    }
    if !cfg.ablation_modes.is_empty() {
        let report = run_ablation(&cfg)?;
        emit_reports(&report, &cfg.output_dir)?;
        print_summaries(&report);
    }
    if grid {
        let report = run_grid_search(&cfg)?;
        emit_reports(&report, &cfg.output_dir)?;
        print_summaries(&report);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_command(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
