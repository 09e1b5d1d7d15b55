//! `pqgdr`: generate disturbance datasets, compute wavelet indices, and
//! train and evaluate the classifier.
//!
//! Exit status: 0 on success, 1 on a data or processing failure, 2 on a
//! usage or configuration error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pqgdr::indices::DetectorConfig;
use pqgdr::pipeline::RecipeConfig;
use pqgdr::siggen::{DatasetConfig, Range, SnrPolicy};
use pqgdr::waveio::SampleFormat;

use config::*;

#[derive(Parser)]
#[command(name = "pqgdr", version, about = "Wavelet power-quality indices and disturbance classification")]
struct Cli {
    /// More log output (-v info, -vv debug)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory; run.json is written here
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Start from a run.json or bare config file; flags override it
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset directory
    Generate {
        #[command(flatten)]
        common: Common,
        /// Items per class
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        per_class: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// clean, DB, mixed:LO:HI or uniform:LO:HI
        #[arg(long, value_parser = parse_snr)]
        snr: Option<SnrPolicy>,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Compute frequency, indices and event window for waveform files
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Waveform files or dataset directories
        inputs: Vec<PathBuf>,
        /// Write the ITD(n) series of every input under itd/
        #[arg(long)]
        dump_itd: bool,
    },
    /// Train the classifier
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArgs,
        /// Choose C and gamma on a holdout split
        #[arg(long, overrides_with = "no_grid")]
        grid: bool,
        #[arg(long)]
        no_grid: bool,
        #[arg(long)]
        c: Option<f64>,
        /// RBF kernel width
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Confusion matrix of a model on a dataset
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Accuracy against SNR, re-noising the same signals at each level
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        /// Comma-separated SNR levels in dB
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["snr_from", "snr_to", "snr_step"])]
        snrs: Option<Vec<f64>>,
        #[arg(long)]
        snr_from: Option<f64>,
        #[arg(long)]
        snr_to: Option<f64>,
        #[arg(long)]
        snr_step: Option<f64>,
    },
    /// Generate, train and evaluate in one run
    Recipe {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        per_class: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Skip the hyperparameter search
        #[arg(long)]
        no_grid: bool,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Bin,
}

impl From<Format> for SampleFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => SampleFormat::Csv,
            Format::Bin => SampleFormat::Bin,
        }
    }
}

fn from_file<T: serde::de::DeserializeOwned>(common: &Common, command: &str) -> anyhow::Result<Option<T>> {
    common.config.as_deref().map(|p| load(p, command)).transpose()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Generate {
            common,
            per_class,
            seed,
            snr,
            format,
        } => {
            let file: Option<GenerateConfig> = from_file(&common, "generate")?;
            let file_out = file.as_ref().map(|f| f.out.clone());
            let mut cfg = file.unwrap_or_else(|| GenerateConfig {
                out: PathBuf::new(),
                format: SampleFormat::Csv,
                dataset: DatasetConfig::default(),
            });
            cfg.out = required_out(common.out, file_out)?;
            if let Some(n) = per_class {
                cfg.dataset.per_class_count = n as usize;
            }
            if let Some(s) = seed {
                cfg.dataset.master_seed = s;
            }
            if let Some(p) = snr {
                cfg.dataset.snr = p;
            }
            if let Some(f) = format {
                cfg.format = f.into();
            }
            commands::generate(&cfg)
        }
        Command::Analyze {
            common,
            inputs,
            dump_itd,
        } => {
            let file: Option<AnalyzeConfig> = from_file(&common, "analyze")?;
            let file_out = file.as_ref().map(|f| f.out.clone());
            let mut cfg = file.unwrap_or_else(|| AnalyzeConfig {
                out: PathBuf::new(),
                inputs: Vec::new(),
                dump_itd: false,
                detector: DetectorConfig::default(),
            });
            cfg.out = required_out(common.out, file_out)?;
            if !inputs.is_empty() {
                cfg.inputs = inputs;
            }
            cfg.dump_itd |= dump_itd;
            commands::analyze_files(&cfg)
        }
        Command::Train {
            common,
            data,
            grid,
            no_grid,
            c,
            gamma,
        } => {
            let file: Option<TrainConfig> = from_file(&common, "train")?;
            let grid = match (grid, no_grid) {
                (true, _) => Some(true),
                (_, true) => Some(false),
                _ => None,
            };
            let cfg = resolve_train(file, common.out, &data, grid, c, gamma)?;
            commands::train(&cfg)
        }
        Command::Evaluate {
            common,
            model,
            data,
        } => {
            let file: Option<EvaluateConfig> = from_file(&common, "evaluate")?;
            let (file_out, file_model, file_data, detector) = match file {
                Some(f) => (Some(f.out), Some(f.model), Some(f.data), f.detector),
                None => (None, None, None, DetectorConfig::default()),
            };
            let cfg = EvaluateConfig {
                out: required_out(common.out, file_out)?,
                model: model.or(file_model).ok_or_else(|| usage("--model is required"))?,
                data: resolve_data_source(
                    file_data,
                    &data,
                    1,
                    SnrPolicy::Mixed { lo: 34.0, hi: 50.0 },
                ),
                detector,
            };
            commands::evaluate(&cfg)
        }
        Command::Sweep {
            common,
            model,
            data,
            snrs,
            snr_from,
            snr_to,
            snr_step,
        } => {
            let file: Option<SweepConfig> = from_file(&common, "sweep")?;
            let (file_out, file_model, file_data, file_snrs, detector) = match file {
                Some(f) => (Some(f.out), Some(f.model), Some(f.data), Some(f.snrs), f.detector),
                None => (None, None, None, None, DetectorConfig::default()),
            };
            let snrs = match snrs {
                Some(s) => s,
                None if snr_from.is_some() || snr_to.is_some() || snr_step.is_some() => snr_steps(
                    snr_from.unwrap_or(30.0),
                    snr_to.unwrap_or(50.0),
                    snr_step.unwrap_or(2.0),
                )?,
                None => match file_snrs {
                    Some(s) => s,
                    None => snr_steps(30.0, 50.0, 2.0)?,
                },
            };
            let cfg = SweepConfig {
                out: required_out(common.out, file_out)?,
                model: model.or(file_model).ok_or_else(|| usage("--model is required"))?,
                data: resolve_data_source(file_data, &data, 1, SnrPolicy::Clean),
                snrs,
                detector,
            };
            commands::sweep(&cfg)
        }
        Command::Recipe {
            common,
            per_class,
            seed,
            no_grid,
        } => {
            let file: Option<RecipeRunConfig> = from_file(&common, "recipe")?;
            let file_out = file.as_ref().map(|f| f.out.clone());
            let mut cfg = file.unwrap_or_else(|| RecipeRunConfig {
                out: PathBuf::new(),
                recipe: RecipeConfig::default(),
            });
            cfg.out = required_out(common.out, file_out)?;
            if let Some(n) = per_class {
                cfg.recipe.per_class_count = n as usize;
            }
            if let Some(s) = seed {
                cfg.recipe.seed = s;
            }
            if no_grid {
                cfg.recipe.grid = None;
            }
            Range::new(cfg.recipe.snr.lo, cfg.recipe.snr.hi)
                .check("snr")
                .map_err(|e| usage(e.to_string()))?;
            commands::recipe(&cfg)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    match e.downcast_ref::<pqgdr::Error>() {
        Some(pqgdr::Error::Parameter { .. } | pqgdr::Error::Config(_)) => 2,
        _ => 1,
    }
}

fn init_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("PQGDR_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("PQGDR_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| usage(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let res = init_threads().and_then(|()| run(cli));
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
