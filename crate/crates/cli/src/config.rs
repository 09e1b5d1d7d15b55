//! Resolved run configurations. Each command starts from its defaults, or
//! from `--config`, and applies the flags given on the command line. The
//! result is written to `run.json` and can be passed back with `--config`.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use pqgdr::indices::DetectorConfig;
use pqgdr::pipeline::{Grid, RecipeConfig};
use pqgdr::siggen::{DatasetConfig, SnrPolicy};
use pqgdr::svm::SvmParams;
use pqgdr::waveio::SampleFormat;

pub const RUN_FILE: &str = "run.json";

/// A usage or configuration problem. Exits with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Parse `clean`, a fixed SNR in dB, `mixed:LO:HI` or `uniform:LO:HI`.
pub fn parse_snr(s: &str) -> Result<SnrPolicy, String> {
    let num = |v: &str| {
        v.parse::<f64>()
            .map_err(|_| format!("`{v}` is not a number"))
    };
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["clean"] => Ok(SnrPolicy::Clean),
        [db] => Ok(SnrPolicy::Fixed { snr_db: num(db)? }),
        ["mixed", lo, hi] => Ok(SnrPolicy::Mixed {
            lo: num(lo)?,
            hi: num(hi)?,
        }),
        ["uniform", lo, hi] => Ok(SnrPolicy::Uniform {
            lo: num(lo)?,
            hi: num(hi)?,
        }),
        _ => Err("expected clean, DB, mixed:LO:HI or uniform:LO:HI".into()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum DataSource {
    /// A directory written by `generate`.
    Dir { path: PathBuf },
    /// Generated in memory.
    Generate { dataset: DatasetConfig },
}

impl DataSource {
    pub fn generated(seed: u64, snr: SnrPolicy) -> Self {
        DataSource::Generate {
            dataset: DatasetConfig {
                master_seed: seed,
                snr,
                ..DatasetConfig::default()
            },
        }
    }
}

/// Dataset flags shared by train, evaluate and sweep.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct DataArgs {
    /// Dataset directory written by `generate`
    #[arg(long, value_name = "DIR", conflicts_with_all = ["per_class", "seed", "snr"])]
    pub data: Option<PathBuf>,
    /// Items per class when generating in memory
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub per_class: Option<u64>,
    /// Master seed when generating in memory
    #[arg(long)]
    pub seed: Option<u64>,
    /// clean, DB, mixed:LO:HI or uniform:LO:HI
    #[arg(long, value_parser = parse_snr)]
    pub snr: Option<SnrPolicy>,
}

impl DataArgs {
    fn apply(&self, src: &mut DataSource) {
        if let Some(p) = &self.data {
            *src = DataSource::Dir { path: p.clone() };
            return;
        }
        if self.per_class.is_none() && self.seed.is_none() && self.snr.is_none() {
            return;
        }
        if let DataSource::Dir { .. } = src {
            *src = DataSource::Generate {
                dataset: DatasetConfig::default(),
            };
        }
        if let DataSource::Generate { dataset } = src {
            if let Some(n) = self.per_class {
                dataset.per_class_count = n as usize;
            }
            if let Some(s) = self.seed {
                dataset.master_seed = s;
            }
            if let Some(p) = self.snr {
                dataset.snr = p;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub out: PathBuf,
    pub format: SampleFormat,
    pub dataset: DatasetConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub out: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub dump_itd: bool,
    pub detector: DetectorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub out: PathBuf,
    pub data: DataSource,
    pub grid: Option<Grid>,
    pub params: SvmParams,
    pub detector: DetectorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateConfig {
    pub out: PathBuf,
    pub model: PathBuf,
    pub data: DataSource,
    pub detector: DetectorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub out: PathBuf,
    pub model: PathBuf,
    pub data: DataSource,
    pub snrs: Vec<f64>,
    pub detector: DetectorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeRunConfig {
    pub out: PathBuf,
    pub recipe: RecipeConfig,
}

#[derive(Serialize, Deserialize)]
struct RunFile<T> {
    tool: String,
    version: String,
    command: String,
    config: T,
}

/// Load a configuration from a `run.json` of the same command, or from a
/// bare configuration object.
pub fn load<T: DeserializeOwned>(path: &Path, command: &str) -> anyhow::Result<T> {
    let bytes = std::fs::read(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let value = match value.get("command").and_then(|c| c.as_str()) {
        Some(c) if c != command => {
            return Err(usage(format!(
                "{} was written by `{c}`, not `{command}`",
                path.display()
            )))
        }
        Some(_) => value.get("config").cloned().unwrap_or_default(),
        None => value,
    };
    serde_json::from_value(value).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Create the output directory and write `run.json` into it.
pub fn write_run<T: Serialize>(out: &Path, command: &str, config: &T) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| usage(format!("cannot create {}: {e}", out.display())))?;
    let run = RunFile {
        tool: "pqgdr".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config,
    };
    let path = out.join(RUN_FILE);
    std::fs::write(&path, serde_json::to_vec_pretty(&run)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn required_out(flag: Option<PathBuf>, from_file: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    flag.or(from_file)
        .ok_or_else(|| usage("--out is required"))
}

pub fn resolve_train(
    file: Option<TrainConfig>,
    out: Option<PathBuf>,
    data: &DataArgs,
    grid: Option<bool>,
    c: Option<f64>,
    gamma: Option<f64>,
) -> anyhow::Result<TrainConfig> {
    let file_out = file.as_ref().map(|f| f.out.clone());
    let mut cfg = file.unwrap_or_else(|| TrainConfig {
        out: PathBuf::new(),
        data: DataSource::generated(0, SnrPolicy::Mixed { lo: 34.0, hi: 50.0 }),
        grid: Some(Grid::default()),
        params: SvmParams::default(),
        detector: DetectorConfig::default(),
    });
    cfg.out = required_out(out, file_out)?;
    data.apply(&mut cfg.data);
    match grid {
        Some(true) if cfg.grid.is_none() => cfg.grid = Some(Grid::default()),
        Some(false) => cfg.grid = None,
        _ => {}
    }
    if let Some(c) = c {
        cfg.params.c = c;
    }
    if let Some(g) = gamma {
        cfg.params.kernel = pqgdr::svm::Kernel::Rbf { gamma: g };
    }
    cfg.params.validate().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

pub fn resolve_data_source(
    file: Option<DataSource>,
    data: &DataArgs,
    default_seed: u64,
    default_snr: SnrPolicy,
) -> DataSource {
    let mut src = file.unwrap_or_else(|| DataSource::generated(default_seed, default_snr));
    data.apply(&mut src);
    src
}

/// `from..=to` in steps of `step`, tolerant of rounding at the end point.
pub fn snr_steps(from: f64, to: f64, step: f64) -> anyhow::Result<Vec<f64>> {
    if step.is_nan() || step <= 0.0 || from.is_nan() || to.is_nan() || to < from {
        return Err(usage("SNR range needs --snr-to >= --snr-from and --snr-step > 0"));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| from + i as f64 * step).collect())
}
