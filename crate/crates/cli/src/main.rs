use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alkit::experiment::{analyse_state_files, Experiment, Progress, RunOptions};
use alkit::{Error, ExperimentConfig, ExperimentReport, XKind};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

/// Pool-based active learning experiments.
#[derive(Debug, Parser)]
#[command(name = "alkit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment from scratch, replacing earlier state files.
    Run(RunArgs),
    /// Continue an interrupted experiment from its state files.
    Resume(RunArgs),
    /// Print the folds an experiment would use, as JSON.
    Split {
        #[arg(long)]
        config: PathBuf,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-aggregate existing state files into CSV and SVG curves.
    Analyse {
        /// Glob matching the state files, e.g. 'results/exp_fold*.jsonl'.
        #[arg(long)]
        inputs: String,
        #[arg(long)]
        out: PathBuf,
        /// File stem of the outputs.
        #[arg(long, default_value = "aggregate")]
        name: String,
        #[arg(long, value_enum, default_value_t = Axis::Round)]
        axis: Axis,
        #[arg(long, default_value_t = 100)]
        grid_size: usize,
    },
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `workers` from the config file.
    #[arg(long, env = "ALKIT_WORKERS")]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Axis {
    Round,
    Cost,
}

impl From<Axis> for XKind {
    fn from(a: Axis) -> Self {
        match a {
            Axis::Round => XKind::Round,
            Axis::Cost => XKind::Cost,
        }
    }
}

/// `ALKIT_HALT_AFTER=<fold>:<round>` or `<fold>` ends the process right
/// after that round (or fold) is on disk. Used to test resuming.
#[derive(Debug, Clone, Copy)]
struct Halt {
    fold: usize,
    round: Option<usize>,
}

const HALT_EXIT: i32 = 75;

fn halt_point() -> Option<Halt> {
    let raw = std::env::var("ALKIT_HALT_AFTER").ok()?;
    let mut parts = raw.splitn(2, ':');
    let fold = parts.next()?.trim().parse().ok()?;
    let round = match parts.next() {
        Some(r) => Some(r.trim().parse().ok()?),
        None => None,
    };
    Some(Halt { fold, round })
}

fn load_config(path: &Path, workers: Option<usize>) -> alkit::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_file(path)?;
    if let Some(w) = workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn execute(args: &RunArgs, resume: bool) -> alkit::Result<ExperimentReport> {
    let cfg = load_config(&args.config, args.workers)?;
    let experiment = Experiment::prepare(cfg)?;
    let halt = halt_point();
    let observer = move |p: Progress| {
        let Some(h) = halt else { return };
        let hit = match (p, h.round) {
            (Progress::RoundWritten { fold, round }, Some(r)) => fold == h.fold && round == r,
            (Progress::FoldFinished { fold }, None) => fold == h.fold,
            _ => false,
        };
        if hit {
            log::warn!("halting as requested by ALKIT_HALT_AFTER");
            std::process::exit(HALT_EXIT);
        }
    };
    experiment.run(&RunOptions {
        resume,
        observer: Some(&observer),
        strategy: None,
    })
}

fn print_report(report: &ExperimentReport) {
    println!(
        "experiment {} ({} folds, {:.2}s)",
        report.name,
        report.folds.len(),
        report.elapsed.as_secs_f64()
    );
    for f in &report.folds {
        let perf: Vec<String> = f.final_performance.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
        println!(
            "  fold {}: {} rounds, {} queried, cost {}, {}",
            f.fold,
            f.rounds,
            f.queried,
            f.total_cost,
            perf.join(" ")
        );
    }
    for path in &report.files {
        println!("  wrote {}", path.display());
    }
}

fn run(cli: Cli) -> alkit::Result<()> {
    match cli.command {
        Command::Run(args) => print_report(&execute(&args, false)?),
        Command::Resume(args) => print_report(&execute(&args, true)?),
        Command::Split { config, out } => {
            let experiment = Experiment::prepare(load_config(&config, None)?)?;
            let json = serde_json::to_string_pretty(&serde_json::json!({ "folds": experiment.splits() }))
                .expect("splits serialize");
            match out {
                Some(path) => std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?,
                None => println!("{json}"),
            }
        }
        Command::Analyse {
            inputs,
            out,
            name,
            axis,
            grid_size,
        } => {
            let pattern = glob::glob(&inputs).map_err(|e| Error::Config(format!("bad glob {inputs:?}: {e}")))?;
            let mut paths = pattern
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| Error::Config(format!("cannot read {}: {}", e.path().display(), e.error())))?;
            paths.sort();
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let curves = analyse_state_files(&paths, &out, &name, axis.into(), grid_size)?;
            for (metric, agg) in curves {
                println!(
                    "{metric}: {} points over {} files -> {}",
                    agg.grid.len(),
                    agg.n_curves,
                    out.join(format!("{name}_{metric}.csv")).display()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
