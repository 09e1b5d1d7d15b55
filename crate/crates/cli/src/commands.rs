use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use pqgdr::indices::{analyze, AnalysisRecord};
use pqgdr::pipeline::{self, ConfusionMatrix, Evaluation, ItemFailure};
use pqgdr::siggen::{make_dataset, LabeledDataset};
use pqgdr::svm::SvmModel;
use pqgdr::waveio;

use crate::config::*;

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_file(path, serde_json::to_vec_pretty(value)?)
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn load_data(src: &DataSource, out: &Path) -> Result<LabeledDataset> {
    match src {
        DataSource::Dir { path } => {
            if !path.join(waveio::MANIFEST).is_file() {
                return Err(usage(format!(
                    "dataset {} not found (no {})",
                    path.display(),
                    waveio::MANIFEST
                )));
            }
            if same_dir(path, out) {
                return Err(usage("--out must differ from the dataset directory"));
            }
            Ok(waveio::load_dataset(path)
                .with_context(|| format!("loading dataset {}", path.display()))?)
        }
        DataSource::Generate { dataset } => {
            dataset.validate().map_err(|e| usage(e.to_string()))?;
            Ok(make_dataset(dataset)?)
        }
    }
}

fn load_model(path: &Path) -> Result<SvmModel> {
    let bytes = fs::read(path)
        .map_err(|e| usage(format!("cannot read model {}: {e}", path.display())))?;
    SvmModel::from_json(&bytes).with_context(|| format!("loading model {}", path.display()))
}

fn report_failures(what: &str, failures: &[ItemFailure]) {
    for f in failures {
        eprintln!("{what} item {} ({}): {}", f.index, f.label, f.error);
    }
}

#[derive(Serialize)]
struct MatrixReport<'a> {
    overall: f64,
    per_class: Vec<Option<f64>>,
    matrix: &'a ConfusionMatrix,
    failures: &'a [ItemFailure],
}

fn write_evaluation(out: &Path, stem: &str, ev: &Evaluation) -> Result<()> {
    write_file(&out.join(format!("{stem}.csv")), ev.matrix.to_csv())?;
    write_json(
        &out.join(format!("{stem}.json")),
        &MatrixReport {
            overall: ev.matrix.overall_accuracy(),
            per_class: ev.matrix.per_class_accuracy(),
            matrix: &ev.matrix,
            failures: &ev.failures,
        },
    )
}

pub fn generate(cfg: &GenerateConfig) -> Result<()> {
    cfg.dataset.validate().map_err(|e| usage(e.to_string()))?;
    write_run(&cfg.out, "generate", cfg)?;
    let ds = make_dataset(&cfg.dataset)?;
    waveio::save_dataset(&ds, &cfg.out, cfg.format)
        .with_context(|| format!("writing dataset to {}", cfg.out.display()))?;
    let mut stdout = std::io::stdout().lock();
    for (c, n) in ds.class_counts() {
        writeln!(stdout, "{c} {:<24} {n}", c.name())?;
    }
    writeln!(stdout, "{} windows written to {}", ds.len(), cfg.out.display())?;
    Ok(())
}

#[derive(Serialize)]
struct FileReport {
    file: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    record: Option<AnalysisRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

const ANALYSIS_CSV_HEADER: &str =
    "file,f_est,k1,k2,t0,T0,T,stationary,mean_itd,A_J,D1,D2,D3,D4,D5,D6,S,error";

fn analysis_row(r: &FileReport) -> String {
    let mut s = format!("{}", r.file.display());
    match &r.record {
        Some(a) => {
            let _ = write!(
                s,
                ",{},{},{},{},{},{},{},{},{}",
                a.f_est, a.k1, a.k2, a.t0, a.t0_duration, a.window, a.stationary, a.mean_itd, a.band_rms.a_j
            );
            for j in 0..6 {
                match a.band_rms.d.get(j) {
                    Some(d) => {
                        let _ = write!(s, ",{d}");
                    }
                    None => s.push(','),
                }
            }
            let _ = write!(s, ",{},", a.band_rms.s);
        }
        None => {
            s.push_str(&",".repeat(16));
            let _ = write!(s, ",\"{}\"", r.error.as_deref().unwrap_or("").replace('"', "'"));
        }
    }
    s
}

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            files.extend(
                waveio::sample_paths(p)
                    .map_err(|e| usage(format!("{}: not a dataset directory ({e})", p.display())))?,
            );
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

fn itd_name(path: &Path, taken: &mut HashSet<String>, i: usize) -> String {
    let stem = path
        .file_stem()
        .map_or_else(|| format!("input{i}"), |s| s.to_string_lossy().into_owned());
    let name = if taken.contains(&stem) {
        format!("{stem}_{i}")
    } else {
        stem
    };
    taken.insert(name.clone());
    format!("{name}.csv")
}

pub fn analyze_files(cfg: &AnalyzeConfig) -> Result<()> {
    if cfg.inputs.is_empty() {
        return Err(usage("no input files"));
    }
    let files = expand_inputs(&cfg.inputs)?;
    write_run(&cfg.out, "analyze", cfg)?;
    let itd_dir = cfg.out.join("itd");
    if cfg.dump_itd {
        fs::create_dir_all(&itd_dir)?;
    }
    let results: Vec<_> = files
        .par_iter()
        .map(|f| {
            let res = waveio::read_waveform(f).and_then(|w| analyze(&w, &cfg.detector));
            (f.clone(), res)
        })
        .collect();

    let mut reports = Vec::with_capacity(results.len());
    let mut taken = HashSet::new();
    let mut stdout = std::io::stdout().lock();
    for (i, (file, res)) in results.into_iter().enumerate() {
        match res {
            Ok(a) => {
                let r = &a.record;
                writeln!(
                    stdout,
                    "{}: f_est {:.4} Hz  k1 {:.3} V  k2 {:.3} %  t0 {:.4} s  T0 {:.4} s",
                    file.display(),
                    r.f_est,
                    r.k1,
                    r.k2,
                    r.t0,
                    r.t0_duration
                )?;
                if cfg.dump_itd {
                    let dt = 1.0 / a.synced.waveform.sample_rate;
                    let mut csv = String::from("t,itd\n");
                    for (n, v) in a.itd.itd.iter().enumerate() {
                        let _ = writeln!(csv, "{},{v}", n as f64 * dt);
                    }
                    write_file(&itd_dir.join(itd_name(&file, &mut taken, i)), csv)?;
                }
                reports.push(FileReport {
                    file,
                    record: Some(a.record),
                    error: None,
                });
            }
            Err(e) => {
                eprintln!("{}: {e}", file.display());
                reports.push(FileReport {
                    file,
                    record: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    write_json(&cfg.out.join("analysis.json"), &reports)?;
    let mut csv = format!("{ANALYSIS_CSV_HEADER}\n");
    for r in &reports {
        csv.push_str(&analysis_row(r));
        csv.push('\n');
    }
    write_file(&cfg.out.join("analysis.csv"), csv)?;
    let failed = reports.iter().filter(|r| r.error.is_some()).count();
    if failed == reports.len() {
        bail!("all {failed} inputs failed");
    }
    Ok(())
}

pub fn train(cfg: &TrainConfig) -> Result<()> {
    let ds = load_data(&cfg.data, &cfg.out)?;
    write_run(&cfg.out, "train", cfg)?;
    let feats = pipeline::extract_features(&ds, &cfg.detector)?;
    report_failures("training", &feats.failures);
    let (model, grid) = pipeline::train(&feats, &cfg.params, cfg.grid.as_ref())?;
    write_file(&cfg.out.join("model.json"), model.to_json()?)?;
    let mut stdout = std::io::stdout().lock();
    if let Some(g) = &grid {
        write_json(&cfg.out.join("grid.json"), g)?;
        writeln!(stdout, "grid search picked C = {} {:?}", g.best.c, g.best.kernel)?;
    }
    writeln!(
        stdout,
        "trained {} machines on {} windows ({} failed)",
        model.machines.len(),
        feats.len(),
        feats.failures.len()
    )?;
    Ok(())
}

pub fn evaluate(cfg: &EvaluateConfig) -> Result<()> {
    let model = load_model(&cfg.model)?;
    let ds = load_data(&cfg.data, &cfg.out)?;
    write_run(&cfg.out, "evaluate", cfg)?;
    let ev = pipeline::evaluate(&model, &ds, &cfg.detector).map_err(|e| match e {
        pqgdr::Error::Config(m) => usage(m),
        e => e.into(),
    })?;
    report_failures("test", &ev.failures);
    write_evaluation(&cfg.out, "confusion", &ev)?;
    let mut stdout = std::io::stdout().lock();
    write!(stdout, "{}", ev.matrix.render())?;
    Ok(())
}

pub fn sweep(cfg: &SweepConfig) -> Result<()> {
    if cfg.snrs.is_empty() {
        return Err(usage("empty SNR list"));
    }
    let model = load_model(&cfg.model)?;
    let ds = load_data(&cfg.data, &cfg.out)?;
    write_run(&cfg.out, "sweep", cfg)?;
    let res = pipeline::noise_sweep(&model, &ds, &cfg.snrs, &cfg.detector).map_err(|e| match e {
        pqgdr::Error::Config(m) => usage(m),
        e => e.into(),
    })?;
    write_file(&cfg.out.join("sweep.csv"), res.to_csv())?;
    write_json(&cfg.out.join("sweep.json"), &res)?;
    let mut stdout = std::io::stdout().lock();
    for r in &res.rows {
        writeln!(stdout, "{:>5} dB  {:6.2} %", r.snr_db, r.overall)?;
    }
    Ok(())
}

pub fn recipe(cfg: &RecipeRunConfig) -> Result<()> {
    write_run(&cfg.out, "recipe", cfg)?;
    let t = Instant::now();
    let res = pipeline::run_recipe(&cfg.recipe).map_err(|e| match e {
        pqgdr::Error::Parameter { .. } => usage(e.to_string()),
        e => e.into(),
    })?;
    report_failures("training", &res.train_failures);
    report_failures("test", &res.mixed.failures);
    write_file(&cfg.out.join("model.json"), res.model.to_json()?)?;
    if let Some(g) = &res.grid {
        write_json(&cfg.out.join("grid.json"), g)?;
    }
    write_evaluation(&cfg.out, "confusion_mixed", &res.mixed)?;
    write_evaluation(&cfg.out, "confusion_clean", &res.clean)?;
    let mut stdout = std::io::stdout().lock();
    write!(stdout, "mixed test set\n{}", res.mixed.matrix.render())?;
    writeln!(stdout, "clean test set: {:.1} %", res.clean.matrix.overall_accuracy())?;
    writeln!(stdout, "elapsed {:.1} s", t.elapsed().as_secs_f64())?;
    Ok(())
}
