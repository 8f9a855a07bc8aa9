//! `fect`: command-line driver for the feature-fusion pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fect_core::descriptors::Modality;
use fect_core::fusion::GridSpec;
use fect_core::pipeline::{Pipeline, PipelineConfig, SplitName};
use fect_core::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "fect", version, about = "Cell, tissue and edge feature fusion for tissue classification")]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic dataset and its train/val/test split
    Generate {
        /// Recipe JSON (default: built-in four-class recipe)
        #[arg(long)]
        recipe: Option<PathBuf>,
        /// Output directory (overrides data_dir)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract one modality's features for every image
    Extract {
        #[arg(long)]
        modality: Modality,
    },
    /// Train the attention aggregator of the cell or edge modality
    TrainAggregator {
        #[arg(long)]
        modality: Modality,
    },
    /// Train the one-vs-one SVM on fused training features
    TrainSvm,
    /// Score the trained SVM on a split
    Evaluate {
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Modality-subset ablation table
    Ablate,
    /// Fusion-weight grid search on the validation split
    Gridsearch,
    /// 2-D PCA projection of a feature cache (cell, tissue, edge or fusion)
    Project {
        #[arg(long, default_value = "fusion")]
        source: String,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical(_) => EXIT_NUMERICAL,
        Error::Config(_) | Error::UnknownName { .. } => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn stage(cmd: &Command) -> &'static str {
    match cmd {
        Command::Generate { .. } => "generate",
        Command::Extract { .. } => "extract",
        Command::TrainAggregator { .. } => "train-aggregator",
        Command::TrainSvm => "train-svm",
        Command::Evaluate { .. } => "evaluate",
        Command::Ablate => "ablate",
        Command::Gridsearch => "gridsearch",
        Command::Project { .. } => "project",
    }
}

fn resolve_config(cli: &Cli) -> fect_core::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(dir) = std::env::var_os("FECT_REPORT_DIR") {
        cfg.report_dir = dir.into();
    }
    if let Command::Generate { out: Some(out), .. } = &cli.command {
        cfg.data_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> fect_core::Result<Vec<PathBuf>> {
    let pipeline = Pipeline::new(resolve_config(cli)?)?;
    Ok(match &cli.command {
        Command::Generate { recipe, .. } => vec![pipeline.generate(recipe.as_deref())?],
        Command::Extract { modality } => vec![pipeline.extract(*modality)?],
        Command::TrainAggregator { modality } => vec![pipeline.train_aggregator(*modality)?.0],
        Command::TrainSvm => vec![pipeline.train_svm()?],
        Command::Evaluate { split } => {
            let ev = pipeline.evaluate(SplitName::parse(split)?)?;
            println!(
                "weighted_f1 {:.6} balanced_accuracy {:.6} accuracy {:.6}",
                ev.metrics.weighted_f1, ev.metrics.balanced_accuracy, ev.metrics.accuracy
            );
            ev.reports
        }
        Command::Ablate => {
            let (path, table) = pipeline.ablate()?;
            print!("{}", table.to_csv());
            vec![path]
        }
        Command::Gridsearch => {
            let (path, result) = pipeline.gridsearch(&GridSpec::default())?;
            let w = result.best.weights;
            println!(
                "best alpha {} beta {} gamma {} weighted_f1 {:.6}",
                w.alpha, w.beta, w.gamma, result.best_metrics.weighted_f1
            );
            vec![path]
        }
        Command::Project { source } => vec![pipeline.project(source)?],
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {} failed: {e}", stage(&cli.command));
            ExitCode::from(exit_code(&e))
        }
    }
}
