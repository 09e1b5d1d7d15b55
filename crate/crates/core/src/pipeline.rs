//! Feature extraction, training, evaluation and noise sweeps.

use std::fmt::Write as _;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indices::{analyze, DetectorConfig, FeatureVector};
use crate::siggen::{derive_seed, make_dataset, ClassLabel, ClassRanges, DatasetConfig, LabeledDataset, Range, SnrPolicy};
use crate::svm::{self, Kernel, SvmModel, SvmParams};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemFailure {
    pub index: usize,
    pub label: ClassLabel,
    pub error: String,
}

/// Feature vectors in dataset order; failed items are listed separately.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Features {
    pub index: Vec<usize>,
    pub vectors: Vec<FeatureVector>,
    pub labels: Vec<ClassLabel>,
    pub failures: Vec<ItemFailure>,
}

impl Features {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.vectors.iter().map(|v| v.as_array().to_vec()).collect()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Concatenate, keeping each side's item order.
    pub fn concat(mut self, other: Features) -> Features {
        let offset = self.index.iter().max().map_or(0, |m| m + 1);
        self.index.extend(other.index.iter().map(|i| i + offset));
        self.vectors.extend(other.vectors);
        self.labels.extend(other.labels);
        self.failures.extend(other.failures);
        self
    }
}

pub fn extract_features(ds: &LabeledDataset, cfg: &DetectorConfig) -> Result<Features> {
    if ds.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let results: Vec<_> = ds
        .entries
        .par_iter()
        .map(|e| analyze(&e.waveform, cfg).map(|a| a.features()))
        .collect();
    let mut out = Features::default();
    for (i, (r, e)) in results.into_iter().zip(&ds.entries).enumerate() {
        match r {
            Ok(v) => {
                out.index.push(i);
                out.vectors.push(v);
                out.labels.push(e.label);
            }
            Err(err) => {
                warn!("item {i} ({}): {err}", e.label);
                out.failures.push(ItemFailure {
                    index: i,
                    label: e.label,
                    error: err.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Counts indexed `[true][predicted]` over `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<ClassLabel>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<ClassLabel>) -> Self {
        let k = classes.len();
        Self {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    fn pos(&self, c: ClassLabel) -> Option<usize> {
        self.classes.iter().position(|x| *x == c)
    }

    pub fn add(&mut self, truth: ClassLabel, predicted: ClassLabel) -> Result<()> {
        let (t, p) = self
            .pos(truth)
            .zip(self.pos(predicted))
            .ok_or_else(|| Error::Config(format!("class {truth} or {predicted} not in matrix")))?;
        self.counts[t][p] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    /// Percent; `None` for a class with no test items.
    pub fn class_accuracy(&self, c: ClassLabel) -> Option<f64> {
        let i = self.pos(c)?;
        let n = self.row_total(i);
        (n > 0).then(|| 100.0 * self.counts[i][i] as f64 / n as f64)
    }

    pub fn per_class_accuracy(&self) -> Vec<Option<f64>> {
        self.classes.iter().map(|c| self.class_accuracy(*c)).collect()
    }

    pub fn overall_accuracy(&self) -> f64 {
        let diag: u64 = (0..self.classes.len()).map(|i| self.counts[i][i]).sum();
        let t = self.total();
        if t == 0 {
            0.0
        } else {
            100.0 * diag as f64 / t as f64
        }
    }

    /// Off-diagonal pairs with `count(a->b) + count(b->a)`, largest first,
    /// ties by class order.
    pub fn symmetric_confusions(&self) -> Vec<((ClassLabel, ClassLabel), u64)> {
        let k = self.classes.len();
        let mut v = Vec::new();
        for i in 0..k {
            for j in i + 1..k {
                v.push((
                    (self.classes[i], self.classes[j]),
                    self.counts[i][j] + self.counts[j][i],
                ));
            }
        }
        v.sort_by_key(|p| std::cmp::Reverse(p.1));
        v
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Config("matrices have different classes".into()));
        }
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
        Ok(())
    }

    /// Header `true,C0,...,C9,accuracy`; one row per true class; a final
    /// `overall` row carries the overall accuracy.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("true");
        for c in &self.classes {
            let _ = write!(s, ",{c}");
        }
        s.push_str(",accuracy\n");
        for (i, c) in self.classes.iter().enumerate() {
            let _ = write!(s, "{c}");
            for v in &self.counts[i] {
                let _ = write!(s, ",{v}");
            }
            match self.class_accuracy(*c) {
                Some(a) => {
                    let _ = writeln!(s, ",{a:.2}");
                }
                None => s.push_str(",\n"),
            }
        }
        let _ = write!(s, "overall");
        for _ in &self.classes {
            s.push(',');
        }
        let _ = writeln!(s, ",{:.2}", self.overall_accuracy());
        s
    }

    /// Aligned text table for terminals.
    pub fn render(&self) -> String {
        let mut s = String::from("true ");
        for c in &self.classes {
            let _ = write!(s, "{:>5}", c.to_string());
        }
        s.push_str("   acc%\n");
        for (i, c) in self.classes.iter().enumerate() {
            let _ = write!(s, "{:<5}", c.to_string());
            for v in &self.counts[i] {
                let _ = write!(s, "{v:>5}");
            }
            match self.class_accuracy(*c) {
                Some(a) => {
                    let _ = writeln!(s, " {a:>6.1}");
                }
                None => s.push_str("      -\n"),
            }
        }
        let _ = writeln!(s, "overall {:.1}%", self.overall_accuracy());
        s
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix,
    pub failures: Vec<ItemFailure>,
}

/// Classify precomputed features.
pub fn evaluate_features(model: &SvmModel, test: &Features) -> Result<ConfusionMatrix> {
    if let Some(c) = test.labels.iter().find(|c| !model.classes.contains(c)) {
        return Err(Error::Config(format!("test class {c} is unknown to the model")));
    }
    let predicted = test
        .vectors
        .par_iter()
        .map(|v| model.predict(&v.as_array()))
        .collect::<Result<Vec<_>>>()?;
    let mut m = ConfusionMatrix::new(model.classes.clone());
    for (t, p) in test.labels.iter().zip(predicted) {
        m.add(*t, p)?;
    }
    Ok(m)
}

/// Extract features from `test` and classify them. Items whose analysis
/// fails are reported, not counted.
pub fn evaluate(model: &SvmModel, test: &LabeledDataset, cfg: &DetectorConfig) -> Result<Evaluation> {
    if let Some(e) = test.entries.iter().find(|e| !model.classes.contains(&e.label)) {
        return Err(Error::Config(format!(
            "test class {} is unknown to the model",
            e.label
        )));
    }
    let f = extract_features(test, cfg)?;
    Ok(Evaluation {
        matrix: evaluate_features(model, &f)?,
        failures: f.failures,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    pub overall: f64,
    pub per_class: Vec<Option<f64>>,
    pub failures: usize,
    pub matrix: ConfusionMatrix,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSweepResult {
    pub classes: Vec<ClassLabel>,
    pub rows: Vec<SweepRow>,
}

impl NoiseSweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("snr_db,overall");
        for c in &self.classes {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{:.2}", r.snr_db, r.overall);
            for a in &r.per_class {
                match a {
                    Some(a) => {
                        let _ = write!(s, ",{a:.2}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Re-noise the same signals at each SNR (ascending, duplicates removed)
/// and evaluate.
pub fn noise_sweep(
    model: &SvmModel,
    base: &LabeledDataset,
    snrs: &[f64],
    cfg: &DetectorConfig,
) -> Result<NoiseSweepResult> {
    if snrs.is_empty() {
        return Err(crate::error::param("snrs", "empty list"));
    }
    if snrs.iter().any(|s| s.is_nan()) {
        return Err(crate::error::param("snrs", "NaN"));
    }
    let mut levels = snrs.to_vec();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut rows = Vec::new();
    for snr in levels {
        let ds = base.renoised(Some(snr))?;
        let ev = evaluate(model, &ds, cfg)?;
        info!("{snr} dB: {:.1}%", ev.matrix.overall_accuracy());
        rows.push(SweepRow {
            snr_db: snr,
            overall: ev.matrix.overall_accuracy(),
            per_class: ev.matrix.per_class_accuracy(),
            failures: ev.failures.len(),
            matrix: ev.matrix,
        });
    }
    Ok(NoiseSweepResult {
        classes: model.classes.clone(),
        rows,
    })
}

/// Hyperparameter grid for RBF machines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub gammas: Vec<f64>,
    pub cs: Vec<f64>,
    /// Every `holdout_every`-th item of each class goes to validation.
    pub holdout_every: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self {
            gammas: vec![0.1, 0.5, 1.0, 2.0, 5.0],
            cs: vec![1.0, 10.0, 100.0],
            holdout_every: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub c: f64,
    pub gamma: f64,
    pub validation_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSearch {
    pub points: Vec<GridPoint>,
    pub best: SvmParams,
}

/// Pick `(C, gamma)` on a per-class holdout split. Ties keep the earlier
/// grid point (C outer, gamma inner).
pub fn grid_search(train: &Features, grid: &Grid, base: &SvmParams) -> Result<GridSearch> {
    if grid.gammas.is_empty() || grid.cs.is_empty() || grid.holdout_every < 2 {
        return Err(crate::error::param("grid", "empty grid or holdout_every < 2"));
    }
    let mut seen = std::collections::BTreeMap::<ClassLabel, usize>::new();
    let mut fit_part = Features::default();
    let mut val_part = Features::default();
    for (i, (v, l)) in train.vectors.iter().zip(&train.labels).enumerate() {
        let k = seen.entry(*l).or_default();
        let part = if *k % grid.holdout_every == grid.holdout_every - 1 {
            &mut val_part
        } else {
            &mut fit_part
        };
        part.index.push(i);
        part.vectors.push(*v);
        part.labels.push(*l);
        *k += 1;
    }
    let classes: Vec<ClassLabel> = seen.keys().copied().collect();
    let rows = fit_part.rows();
    let mut points = Vec::new();
    let mut best: Option<(f64, SvmParams)> = None;
    for &c in &grid.cs {
        for &gamma in &grid.gammas {
            let params = SvmParams {
                c,
                kernel: Kernel::Rbf { gamma },
                ..*base
            };
            let model = svm::fit_classes(&rows, &fit_part.labels, Some(&classes), &params)?;
            let acc = evaluate_features(&model, &val_part)?.overall_accuracy();
            points.push(GridPoint {
                c,
                gamma,
                validation_accuracy: acc,
            });
            if best.is_none_or(|(b, _)| acc > b) {
                best = Some((acc, params));
            }
        }
    }
    let (_, best) = best.expect("grid is non-empty");
    Ok(GridSearch { points, best })
}

/// Train on features, optionally choosing hyperparameters by grid search.
pub fn train(
    train: &Features,
    params: &SvmParams,
    grid: Option<&Grid>,
) -> Result<(SvmModel, Option<GridSearch>)> {
    if train.is_empty() {
        return Err(Error::Data("no training features".into()));
    }
    let search = grid.map(|g| grid_search(train, g, params)).transpose()?;
    let chosen = search.as_ref().map_or(*params, |s| s.best);
    let model = svm::fit(&train.rows(), &train.labels, &chosen)?;
    Ok((model, search))
}

/// Settings for the standard experiment: independent train and test draws,
/// a mixed clean/noisy training and test set, and a clean copy of the test
/// signals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecipeConfig {
    pub per_class_count: usize,
    pub seed: u64,
    /// SNR range of the noisy half of both sets.
    pub snr: Range,
    pub ranges: ClassRanges,
    pub grid: Option<Grid>,
    pub params: SvmParams,
    pub detector: DetectorConfig,
}

impl Default for RecipeConfig {
    fn default() -> Self {
        Self {
            per_class_count: 100,
            seed: 0,
            snr: Range::new(34.0, 50.0),
            ranges: ClassRanges::default(),
            grid: Some(Grid::default()),
            params: SvmParams::default(),
            detector: DetectorConfig::default(),
        }
    }
}

impl RecipeConfig {
    fn dataset(&self, tag: &str) -> DatasetConfig {
        DatasetConfig {
            per_class_count: self.per_class_count,
            master_seed: derive_seed(self.seed, tag, 0.0),
            snr: SnrPolicy::Mixed {
                lo: self.snr.lo,
                hi: self.snr.hi,
            },
            ranges: self.ranges.clone(),
            ..DatasetConfig::default()
        }
    }

    pub fn train_dataset(&self) -> DatasetConfig {
        self.dataset("train")
    }

    pub fn test_dataset(&self) -> DatasetConfig {
        self.dataset("test")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecipeResult {
    pub model: SvmModel,
    pub grid: Option<GridSearch>,
    pub train_failures: Vec<ItemFailure>,
    pub mixed: Evaluation,
    pub clean: Evaluation,
}

/// Generate, train and evaluate on the mixed and clean test sets.
pub fn run_recipe(cfg: &RecipeConfig) -> Result<RecipeResult> {
    let train_ds = make_dataset(&cfg.train_dataset())?;
    let feats = extract_features(&train_ds, &cfg.detector)?;
    drop(train_ds);
    let (model, grid) = train(&feats, &cfg.params, cfg.grid.as_ref())?;
    if let Some(g) = &grid {
        info!("grid picked C = {} {:?}", g.best.c, g.best.kernel);
    }
    let test = make_dataset(&cfg.test_dataset())?;
    let mixed = evaluate(&model, &test, &cfg.detector)?;
    let clean = evaluate(&model, &test.renoised(None)?, &cfg.detector)?;
    Ok(RecipeResult {
        model,
        grid,
        train_failures: feats.failures,
        mixed,
        clean,
    })
}
