//! Soft-margin SVM trained by SMO, combined one-vs-one.

use std::collections::BTreeMap;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::siggen::ClassLabel;

/// Version written to and required from model files.
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Per-dimension standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FeatureScaler {
    /// Mean and population standard deviation. Constant columns get scale 1.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::Data("no rows".into()))?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::Data("rows differ in length".into()));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| if v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| v * s + m)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    pub kernel: Kernel,
    /// KKT tolerance.
    pub tol: f64,
    /// Upper bound on full sweeps over the training set.
    pub max_passes: usize,
    /// Upper bound on successful pair updates.
    pub max_updates: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 10.0,
            kernel: Kernel::Rbf { gamma: 1.0 },
            tol: 1e-3,
            max_passes: 50,
            max_updates: 200_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(param("c", format!("must be positive, got {}", self.c)));
        }
        if let Kernel::Rbf { gamma } = self.kernel {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(param("gamma", format!("must be positive, got {gamma}")));
            }
        }
        if !(self.tol > 0.0) {
            return Err(param("tol", "must be positive"));
        }
        if self.max_passes == 0 {
            return Err(param("max_passes", "must be at least 1"));
        }
        Ok(())
    }
}

/// Binary machine: positive side is `positive`, negative side `negative`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySvm {
    pub positive: ClassLabel,
    pub negative: ClassLabel,
    pub kernel: Kernel,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
}

impl BinarySvm {
    pub fn decision(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, c)| c * self.kernel.eval(sv, z))
            .sum::<f64>()
            + self.bias
    }
}

/// Dual solution of one binary problem.
#[derive(Debug, Clone)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub updates: usize,
    pub sweeps: usize,
    pub converged: bool,
}

struct Smo<'a> {
    y: &'a [f64],
    k: Vec<f64>,
    n: usize,
    c: f64,
    tol: f64,
    alpha: Vec<f64>,
    /// `f(x_i) - y_i` with the current bias.
    err: Vec<f64>,
    bias: f64,
}

const STEP_EPS: f64 = 1e-12;

impl Smo<'_> {
    fn kij(&self, i: usize, j: usize) -> f64 {
        self.k[i * self.n + j]
    }

    fn non_bound(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.err[i1], self.err[i2]);
        let s = y1 * y2;
        let c = self.c;
        let (lo, hi) = if y1 != y2 {
            ((a2 - a1).max(0.0), (c + a2 - a1).min(c))
        } else {
            ((a1 + a2 - c).max(0.0), (a1 + a2).min(c))
        };
        if hi - lo <= STEP_EPS {
            return false;
        }
        let (k11, k12, k22) = (self.kij(i1, i1), self.kij(i1, i2), self.kij(i2, i2));
        let eta = k11 + k22 - 2.0 * k12;
        let mut a2n = if eta > 0.0 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // objective at the segment ends
            let f1 = y1 * e1 - a1 * k11 - s * a2 * k12;
            let f2 = y2 * e2 - s * a1 * k12 - a2 * k22;
            let l1 = a1 + s * (a2 - lo);
            let h1 = a1 + s * (a2 - hi);
            let obj = |a1x: f64, a2x: f64| {
                a1x * f1 + a2x * f2 + 0.5 * a1x * a1x * k11 + 0.5 * a2x * a2x * k22 + s * a1x * a2x * k12
            };
            let (lobj, hobj) = (obj(l1, lo), obj(h1, hi));
            if lobj < hobj - STEP_EPS {
                lo
            } else if lobj > hobj + STEP_EPS {
                hi
            } else {
                a2
            }
        };
        if a2n < 1e-12 * c {
            a2n = 0.0;
        } else if a2n > c * (1.0 - 1e-12) {
            a2n = c;
        }
        if (a2n - a2).abs() < STEP_EPS * (a2n + a2 + STEP_EPS) {
            return false;
        }
        let mut a1n = a1 + s * (a2 - a2n);
        if a1n < 1e-12 * c {
            a1n = 0.0;
        } else if a1n > c * (1.0 - 1e-12) {
            a1n = c;
        }
        let (d1, d2) = (y1 * (a1n - a1), y2 * (a2n - a2));
        let b1 = self.bias - e1 - d1 * k11 - d2 * k12;
        let b2 = self.bias - e2 - d1 * k12 - d2 * k22;
        let nb = if a1n > 0.0 && a1n < c {
            b1
        } else if a2n > 0.0 && a2n < c {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let db = nb - self.bias;
        for i in 0..self.n {
            self.err[i] += d1 * self.kij(i1, i) + d2 * self.kij(i2, i) + db;
        }
        self.alpha[i1] = a1n;
        self.alpha[i2] = a2n;
        self.bias = nb;
        true
    }

    /// Set the bias from the KKT conditions: the mean over non-bound
    /// examples, else the middle of the interval the bound examples allow.
    fn refit_bias(&mut self) {
        let (mut free, mut count) = (0.0, 0usize);
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..self.n {
            // bias that puts example i on its margin
            let t = self.bias - self.err[i];
            if self.non_bound(i) {
                free += t;
                count += 1;
            } else if (self.alpha[i] <= 0.0) == (self.y[i] > 0.0) {
                lo = lo.max(t);
            } else {
                hi = hi.min(t);
            }
        }
        let nb = if count > 0 {
            free / count as f64
        } else if lo.is_finite() && hi.is_finite() {
            0.5 * (lo + hi)
        } else if lo.is_finite() {
            lo
        } else if hi.is_finite() {
            hi
        } else {
            self.bias
        };
        let db = nb - self.bias;
        for e in &mut self.err {
            *e += db;
        }
        self.bias = nb;
    }

    fn violates(&self, i: usize) -> bool {
        let r = self.err[i] * self.y[i];
        (r < -self.tol && self.alpha[i] < self.c) || (r > self.tol && self.alpha[i] > 0.0)
    }

    fn examine(&mut self, i2: usize) -> bool {
        if !self.violates(i2) {
            return false;
        }
        let e2 = self.err[i2];
        // second choice: largest |E1 - E2| among non-bound, lowest index on ties
        let mut best: Option<(usize, f64)> = None;
        for i in 0..self.n {
            if i != i2 && self.non_bound(i) {
                let gap = (self.err[i] - e2).abs();
                if best.is_none_or(|(_, g)| gap > g) {
                    best = Some((i, gap));
                }
            }
        }
        if let Some((i1, _)) = best {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        for i1 in 0..self.n {
            if self.non_bound(i1) && self.take_step(i1, i2) {
                return true;
            }
        }
        for i1 in 0..self.n {
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }
}

/// Train one binary problem with labels `y` in {-1, +1}. Deterministic.
pub fn smo(x: &[Vec<f64>], y: &[f64], params: &SvmParams) -> SmoSolution {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = params.kernel.eval(&x[i], &x[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let mut s = Smo {
        y,
        k,
        n,
        c: params.c,
        tol: params.tol,
        alpha: vec![0.0; n],
        err: y.iter().map(|v| -v).collect(),
        bias: 0.0,
    };
    let mut updates = 0;
    let mut sweeps = 0;
    let mut examine_all = true;
    let mut converged = false;
    loop {
        let mut changed = 0;
        if examine_all {
            sweeps += 1;
            for i in 0..n {
                changed += s.examine(i) as usize;
            }
        } else {
            for i in 0..n {
                if s.non_bound(i) {
                    changed += s.examine(i) as usize;
                }
            }
        }
        updates += changed;
        if examine_all && changed == 0 {
            s.refit_bias();
            if !(0..n).any(|i| s.violates(i)) {
                converged = true;
                break;
            }
            if sweeps >= params.max_passes {
                break;
            }
            continue;
        }
        if examine_all {
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
        if (examine_all && sweeps >= params.max_passes) || updates >= params.max_updates {
            break;
        }
    }
    SmoSolution {
        alpha: s.alpha,
        bias: s.bias,
        updates,
        sweeps,
        converged,
    }
}

/// Largest KKT violation of a solution, measured on `y_i f(x_i)`.
pub fn kkt_residual(x: &[Vec<f64>], y: &[f64], params: &SvmParams, sol: &SmoSolution) -> f64 {
    let n = x.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let f: f64 = (0..n)
            .map(|j| sol.alpha[j] * y[j] * params.kernel.eval(&x[j], &x[i]))
            .sum::<f64>()
            + sol.bias;
        let m = y[i] * f;
        let a = sol.alpha[i];
        let v = if a <= 0.0 {
            (1.0 - m).max(0.0)
        } else if a >= params.c {
            (m - 1.0).max(0.0)
        } else {
            (m - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Train a binary machine on scaled rows.
pub fn fit_binary(
    x: &[Vec<f64>],
    labels: &[ClassLabel],
    positive: ClassLabel,
    negative: ClassLabel,
    params: &SvmParams,
) -> Result<BinarySvm> {
    params.validate()?;
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for (r, l) in x.iter().zip(labels) {
        if *l == positive {
            rows.push(r.clone());
            y.push(1.0);
        } else if *l == negative {
            rows.push(r.clone());
            y.push(-1.0);
        }
    }
    for c in [positive, negative] {
        if !labels.contains(&c) {
            return Err(Error::MissingClass(c));
        }
    }
    let sol = smo(&rows, &y, params);
    if !sol.converged {
        warn!(
            "SMO for {positive} vs {negative} stopped after {} sweeps / {} updates",
            sol.sweeps, sol.updates
        );
    }
    let mut support_vectors = Vec::new();
    let mut dual_coefs = Vec::new();
    for ((r, a), yi) in rows.into_iter().zip(&sol.alpha).zip(&y) {
        if *a > 0.0 {
            support_vectors.push(r);
            dual_coefs.push(a * yi);
        }
    }
    Ok(BinarySvm {
        positive,
        negative,
        kernel: params.kernel,
        support_vectors,
        dual_coefs,
        bias: sol.bias,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub format_version: u32,
    pub classes: Vec<ClassLabel>,
    pub scaler: FeatureScaler,
    pub params: SvmParams,
    /// One machine per class pair `(classes[i], classes[j])`, `i < j`, in
    /// row-major pair order.
    pub machines: Vec<BinarySvm>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: ClassLabel,
    /// Votes per class, in model class order.
    pub votes: Vec<u32>,
    /// Summed |decision value| of the machines each class won.
    pub margins: Vec<f64>,
}

fn check_finite(x: &[f64]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Data("non-finite feature".into()))
    }
}

/// Train all pairwise machines. Classes are those present in `labels`.
pub fn fit(features: &[Vec<f64>], labels: &[ClassLabel], params: &SvmParams) -> Result<SvmModel> {
    fit_classes(features, labels, None, params)
}

/// Like [`fit`] with an explicit class list; a listed class without
/// examples is an error.
pub fn fit_classes(
    features: &[Vec<f64>],
    labels: &[ClassLabel],
    classes: Option<&[ClassLabel]>,
    params: &SvmParams,
) -> Result<SvmModel> {
    params.validate()?;
    if features.len() != labels.len() {
        return Err(Error::Data(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    for f in features {
        check_finite(f)?;
    }
    let present: Vec<ClassLabel> = {
        let mut c: Vec<ClassLabel> = labels.to_vec();
        c.sort();
        c.dedup();
        c
    };
    let classes = match classes {
        Some(list) => {
            let mut list = list.to_vec();
            list.sort();
            list.dedup();
            if let Some(missing) = list.iter().find(|c| !present.contains(c)) {
                return Err(Error::MissingClass(*missing));
            }
            list
        }
        None => present,
    };
    if classes.len() < 2 {
        return Err(Error::Training(format!(
            "need at least 2 classes, got {}",
            classes.len()
        )));
    }
    let scaler = FeatureScaler::fit(features)?;
    let scaled: Vec<Vec<f64>> = features.iter().map(|f| scaler.transform(f)).collect();
    let pairs: Vec<(ClassLabel, ClassLabel)> = classes
        .iter()
        .enumerate()
        .flat_map(|(i, &a)| classes[i + 1..].iter().map(move |&b| (a, b)))
        .collect();
    let machines = pairs
        .par_iter()
        .map(|&(a, b)| fit_binary(&scaled, labels, a, b, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmModel {
        format_version: MODEL_FORMAT_VERSION,
        classes,
        scaler,
        params: *params,
        machines,
    })
}

impl SvmModel {
    pub fn predict_detail(&self, x: &[f64]) -> Result<Prediction> {
        check_finite(x)?;
        if x.len() != self.scaler.mean.len() {
            return Err(Error::Data(format!(
                "expected {} features, got {}",
                self.scaler.mean.len(),
                x.len()
            )));
        }
        let z = self.scaler.transform(x);
        let idx: BTreeMap<ClassLabel, usize> =
            self.classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let mut votes = vec![0u32; self.classes.len()];
        let mut margins = vec![0.0; self.classes.len()];
        for m in &self.machines {
            let d = m.decision(&z);
            let winner = if d > 0.0 { m.positive } else { m.negative };
            let w = idx[&winner];
            votes[w] += 1;
            margins[w] += d.abs();
        }
        let mut best = 0;
        for i in 1..votes.len() {
            if votes[i] > votes[best] || (votes[i] == votes[best] && margins[i] > margins[best]) {
                best = i;
            }
        }
        Ok(Prediction {
            label: self.classes[best],
            votes,
            margins,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassLabel> {
        Ok(self.predict_detail(x)?.label)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    /// Parse and validate a saved model.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            format_version: u32,
        }
        let header: Header = serde_json::from_slice(bytes)
            .map_err(|e| Error::ModelLoad(format!("unreadable model file: {e}")))?;
        if header.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelLoad(format!(
                "format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                header.format_version
            )));
        }
        let m: SvmModel = serde_json::from_slice(bytes)
            .map_err(|e| Error::ModelLoad(format!("malformed model: {e}")))?;
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        let k = self.classes.len();
        if k < 2 || self.machines.len() != k * (k - 1) / 2 {
            return Err(Error::ModelLoad(format!(
                "{} machines for {k} classes",
                self.machines.len()
            )));
        }
        let d = self.scaler.mean.len();
        if self.scaler.scale.len() != d || self.scaler.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::ModelLoad("invalid scaler".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.machines {
            if !self.classes.contains(&m.positive) || !self.classes.contains(&m.negative) {
                return Err(Error::ModelLoad("machine refers to unknown class".into()));
            }
            if !seen.insert((m.positive, m.negative)) || m.positive == m.negative {
                return Err(Error::ModelLoad("duplicate class pair".into()));
            }
            if m.support_vectors.len() != m.dual_coefs.len()
                || m.support_vectors.iter().any(|s| s.len() != d)
            {
                return Err(Error::ModelLoad("inconsistent support vectors".into()));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Vec<Vec<f64>>, Vec<ClassLabel>) {
        let mut x = Vec::new();
        let mut l = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.3;
            x.push(vec![t.cos() * 0.5, t.sin() * 0.5]);
            l.push(ClassLabel::Sag);
            x.push(vec![4.0 + t.cos() * 0.5, 1.0 + t.sin() * 0.5]);
            l.push(ClassLabel::Swell);
        }
        (x, l)
    }

    #[test]
    fn separable_pair_is_fit_exactly() {
        let (x, l) = blobs();
        let m = fit(&x, &l, &SvmParams::default()).unwrap();
        assert_eq!(m.machines.len(), 1);
        for (r, c) in x.iter().zip(&l) {
            assert_eq!(m.predict(r).unwrap(), *c);
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let x = vec![vec![0.0, 1.0]; 3];
        let l = vec![ClassLabel::Sag; 3];
        assert!(matches!(fit(&x, &l, &SvmParams::default()), Err(Error::Training(_))));
        let (x, l) = blobs();
        assert!(matches!(
            fit_classes(&x, &l, Some(&[ClassLabel::Sag, ClassLabel::Flicker]), &SvmParams::default()),
            Err(Error::MissingClass(ClassLabel::Flicker))
        ));
    }

    #[test]
    fn non_finite_features_are_data_errors() {
        let (mut x, l) = blobs();
        x[3][1] = f64::NAN;
        assert!(matches!(fit(&x, &l, &SvmParams::default()), Err(Error::Data(_))));
        let (x, l) = blobs();
        let m = fit(&x, &l, &SvmParams::default()).unwrap();
        assert!(m.predict(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn scaler_round_trip() {
        let (x, _) = blobs();
        let s = FeatureScaler::fit(&x).unwrap();
        for r in &x {
            let back = s.inverse(&s.transform(r));
            for (a, b) in back.iter().zip(r) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn version_mismatch_is_a_load_error() {
        let (x, l) = blobs();
        let m = fit(&x, &l, &SvmParams::default()).unwrap();
        let text = String::from_utf8(m.to_json().unwrap()).unwrap();
        let bumped = text.replacen("\"format_version\": 1", "\"format_version\": 99", 1);
        assert!(matches!(SvmModel::from_json(bumped.as_bytes()), Err(Error::ModelLoad(_))));
        let bytes = m.to_json().unwrap();
        assert!(matches!(
            SvmModel::from_json(&bytes[..bytes.len() / 2]),
            Err(Error::ModelLoad(_))
        ));
    }
}
