//! Property checks shared by the proptest suite and the acceptance run.
//! Each returns `Err` with a description of the first violation.

#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pqgdr::indices::{analyze, DetectorConfig};
use pqgdr::siggen::{draw_spec, synthesize, ClassLabel, DatasetConfig, Waveform};
use pqgdr::svm::{self, kkt_residual, smo, Kernel, SvmModel, SvmParams};
use pqgdr::wmra::decompose;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// A random generated window of a random class.
pub fn random_window(seed: u64) -> (ClassLabel, Waveform) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label = ClassLabel::ALL[rng.random_range(0..10)];
    let spec = draw_spec(label, &DatasetConfig::default(), &mut rng).expect("valid spec");
    (label, synthesize(&spec).expect("valid spec"))
}

pub fn random_signal(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// `k2` does not change when the waveform is scaled; `k1` scales with it.
pub fn gdr_scale_invariance(seed: u64, scale: f64) -> Check {
    let (label, w) = random_window(seed);
    let scaled = Waveform {
        samples: w.samples.iter().map(|v| v * scale).collect(),
        ..w.clone()
    };
    let cfg = DetectorConfig::default();
    let a = analyze(&w, &cfg).map_err(|e| e.to_string())?.record;
    let b = analyze(&scaled, &cfg).map_err(|e| e.to_string())?.record;
    ensure!(
        (a.k2 - b.k2).abs() <= 1e-9 * a.k2.abs().max(1e-3),
        "{label} seed {seed}: k2 {} vs {} at scale {scale}",
        a.k2,
        b.k2
    );
    ensure!(
        (a.k1 * scale - b.k1).abs() <= 1e-9 * b.k1,
        "{label} seed {seed}: k1 {} vs {} at scale {scale}",
        a.k1 * scale,
        b.k1
    );
    Ok(())
}

/// `decompose(a x + b y) = a decompose(x) + b decompose(y)` band by band.
pub fn decomposition_linearity(seed: u64, a: f64, b: f64) -> Check {
    let x = random_signal(seed, 2560);
    let y = random_signal(seed ^ 0x9e37_79b9, 2560);
    let z: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
    let (dx, dy, dz) = (
        decompose(&x, 12800.0).map_err(|e| e.to_string())?,
        decompose(&y, 12800.0).map_err(|e| e.to_string())?,
        decompose(&z, 12800.0).map_err(|e| e.to_string())?,
    );
    let tol = 1e-9 * (a.abs() + b.abs()).max(1e-12);
    let mut bands = vec![(&dx.approx, &dy.approx, &dz.approx)];
    for j in 0..dx.levels {
        bands.push((&dx.details[j], &dy.details[j], &dz.details[j]));
    }
    for (k, (p, q, r)) in bands.into_iter().enumerate() {
        for n in 0..p.len() {
            let err = (a * p[n] + b * q[n] - r[n]).abs();
            ensure!(err <= tol, "band {k} sample {n}: error {err:e}");
        }
    }
    Ok(())
}

/// Bands of the synchronized window sum back to it, and the band RMS
/// values add up to the time-domain RMS. Returns the two relative errors.
pub fn reconstruction(seed: u64) -> Result<(f64, f64), String> {
    let (label, w) = random_window(seed);
    let a = analyze(&w, &DetectorConfig::default()).map_err(|e| format!("{label}: {e}"))?;
    let x = &a.synced.waveform.samples;
    let r = a.decomposition.reconstruct();
    let num: f64 = r.iter().zip(x).map(|(p, q)| (p - q).powi(2)).sum();
    let den: f64 = x.iter().map(|v| v * v).sum();
    let rms = (den / x.len() as f64).sqrt();
    Ok(((num / den).sqrt(), (a.record.band_rms.s - rms).abs() / rms))
}

/// Ten two-dimensional clusters, one per class.
pub fn fixture(seed: u64, per_class: usize, spread: f64) -> (Vec<Vec<f64>>, Vec<ClassLabel>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut l = Vec::new();
    for (k, c) in ClassLabel::ALL.iter().enumerate() {
        let centre = [
            (k % 4) as f64 * 3.0 + 200.0,
            (k / 4) as f64 * 3.0 + 5.0,
        ];
        for _ in 0..per_class {
            x.push(vec![
                centre[0] + spread * rng.random_range(-1.0..1.0),
                centre[1] + spread * rng.random_range(-1.0..1.0),
            ]);
            l.push(*c);
        }
    }
    (x, l)
}

pub fn fixture_model(seed: u64, params: &SvmParams) -> SvmModel {
    let (x, l) = fixture(seed, 12, 1.2);
    svm::fit(&x, &l, params).expect("fixture trains")
}

/// Every machine casts one vote; the winner holds the most votes.
pub fn vote_accounting(model: &SvmModel, x: &[f64]) -> Check {
    let p = model.predict_detail(x).map_err(|e| e.to_string())?;
    let k = model.classes.len() as u32;
    let total: u32 = p.votes.iter().sum();
    ensure!(total == k * (k - 1) / 2, "votes sum to {total}");
    let w = model.classes.iter().position(|c| *c == p.label).expect("known");
    let max = *p.votes.iter().max().expect("non-empty");
    ensure!(p.votes[w] == max, "winner has {} of max {max} votes", p.votes[w]);
    ensure!(max >= (k - 1).div_ceil(2), "winner has only {max} votes");
    Ok(())
}

/// A converged solution satisfies the KKT conditions to `tol`, keeps
/// `0 <= alpha <= C` and `sum(alpha y) = 0`.
pub fn smo_kkt(seed: u64, n: usize, c: f64, gamma: f64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        x.push(vec![
            rng.random_range(-1.0..1.0) + 0.6 * s,
            rng.random_range(-1.0..1.0),
        ]);
        y.push(s);
    }
    let params = SvmParams {
        c,
        kernel: Kernel::Rbf { gamma },
        ..SvmParams::default()
    };
    let sol = smo(&x, &y, &params);
    ensure!(sol.converged, "no convergence after {} sweeps", sol.sweeps);
    let res = kkt_residual(&x, &y, &params, &sol);
    ensure!(res <= params.tol + 1e-9, "KKT residual {res:e}");
    let eq: f64 = sol.alpha.iter().zip(&y).map(|(a, b)| a * b).sum();
    ensure!(eq.abs() <= 1e-9 * c * n as f64, "sum(alpha y) = {eq:e}");
    ensure!(
        sol.alpha.iter().all(|a| (0.0..=c).contains(a)),
        "alpha outside [0, C]"
    );
    Ok(())
}

/// JSON round trip keeps the model and its predictions.
pub fn save_load_round_trip(model: &SvmModel, probes: &[Vec<f64>]) -> Check {
    let bytes = model.to_json().map_err(|e| e.to_string())?;
    let back = SvmModel::from_json(&bytes).map_err(|e| e.to_string())?;
    ensure!(&back == model, "model changed in round trip");
    for p in probes {
        let a = model.predict_detail(p).map_err(|e| e.to_string())?;
        let b = back.predict_detail(p).map_err(|e| e.to_string())?;
        ensure!(a == b, "prediction changed at {p:?}");
    }
    Ok(())
}

/// Estimator exactness on a clean sinusoid at any amplitude.
pub fn estimator_exact(f: f64, amp: f64, phase: f64) -> Check {
    let fs = 12800.0;
    let n = (fs * 10.0 / f).round() as usize;
    let w = Waveform {
        samples: (0..n)
            .map(|i| amp * (2.0 * PI * f * i as f64 / fs + phase).sin())
            .collect(),
        sample_rate: fs,
        nominal_freq: 50.0,
    };
    let e = pqgdr::freqsync::estimate_frequency(&w).map_err(|e| e.to_string())?;
    let rel = ((e.freq - f) / f).abs();
    ensure!(rel < 1e-9, "{f} Hz at amplitude {amp}: relative error {rel:e}");
    Ok(())
}
