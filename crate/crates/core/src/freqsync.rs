//! Fundamental frequency estimation and period-synchronous resampling.

use std::f64::consts::PI;
use std::sync::OnceLock;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extend;
use crate::siggen::Waveform;
use crate::wmra::SAMPLES_PER_PERIOD;

/// Periods held by a synchronized window.
pub const WINDOW_CYCLES: usize = 10;

/// Length of a synchronized window.
pub const SYNCED_LEN: usize = WINDOW_CYCLES * SAMPLES_PER_PERIOD;

/// Taps of the low-pass applied before estimation.
pub const PREFILTER_TAPS: usize = 1025;

/// Low-pass cutoff as a multiple of the nominal frequency.
pub const PREFILTER_CUTOFF: f64 = 1.8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    /// Cosine term `cos(w Ts)`.
    pub c: f64,
    pub freq: f64,
    pub window_cycles: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyncedWaveform {
    /// Sampled at `256 * f_est`.
    pub waveform: Waveform,
    /// Input rate over output rate.
    pub resampling_ratio: f64,
    pub f_est: f64,
}

/// Triplet estimator on the given samples. Uses the second-difference form
/// of `1 - c` so that the arccos is well conditioned when `c` is near 1.
pub fn estimate_raw(samples: &[f64], sample_rate: f64) -> Result<FrequencyEstimate> {
    if samples.len() < 3 {
        return Err(Error::Estimation(format!(
            "need at least 3 samples, got {}",
            samples.len()
        )));
    }
    let mut energy = 0.0;
    let mut curv = 0.0;
    for w in samples.windows(3) {
        energy += w[1] * w[1];
        curv += w[1] * (2.0 * w[1] - w[0] - w[2]);
    }
    if !(energy > 0.0) || !energy.is_finite() {
        return Err(Error::Estimation("zero-energy input".into()));
    }
    // 1 - c
    let one_minus_c = curv / (2.0 * energy);
    let c = 1.0 - one_minus_c;
    if !(0.0..=2.0).contains(&one_minus_c) {
        return Err(Error::Estimation(format!("|c| > 1 (c = {c})")));
    }
    let theta = 2.0 * (one_minus_c / 2.0).sqrt().asin();
    let freq = theta * sample_rate / (2.0 * PI);
    if !(freq > 0.0) {
        return Err(Error::Estimation("zero frequency (DC input)".into()));
    }
    Ok(FrequencyEstimate {
        c,
        freq,
        window_cycles: samples.len() as f64 * freq / sample_rate,
    })
}

/// Blackman-windowed sinc low-pass with unit DC gain.
pub fn lowpass_taps(taps: usize, cutoff: f64, sample_rate: f64) -> Vec<f64> {
    let m = (taps - 1) as f64;
    let fc = cutoff / sample_rate;
    let mut h: Vec<f64> = (0..taps)
        .map(|i| {
            let x = i as f64 - m / 2.0;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let w = 0.42 - 0.5 * (2.0 * PI * i as f64 / m).cos() + 0.08 * (4.0 * PI * i as f64 / m).cos();
            sinc * w
        })
        .collect();
    let s: f64 = h.iter().sum();
    for v in &mut h {
        *v /= s;
    }
    h
}

fn prefilter_taps(sample_rate: f64, nominal: f64) -> std::borrow::Cow<'static, [f64]> {
    static DEFAULT: OnceLock<Vec<f64>> = OnceLock::new();
    if sample_rate == 12800.0 && nominal == 50.0 {
        std::borrow::Cow::Borrowed(
            DEFAULT.get_or_init(|| lowpass_taps(PREFILTER_TAPS, PREFILTER_CUTOFF * 50.0, 12800.0)),
        )
    } else {
        std::borrow::Cow::Owned(lowpass_taps(
            PREFILTER_TAPS,
            PREFILTER_CUTOFF * nominal,
            sample_rate,
        ))
    }
}

/// 'Valid' part of the convolution; empty when `x` is shorter than `h`.
fn convolve_valid(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.len() < h.len() {
        return Vec::new();
    }
    (0..=x.len() - h.len())
        .map(|i| x[i..i + h.len()].iter().zip(h.iter().rev()).map(|(a, b)| a * b).sum())
        .collect()
}

/// Estimate the fundamental from a low-passed copy of the window. Windows
/// too short for the filter are estimated unfiltered.
pub fn estimate_frequency(w: &Waveform) -> Result<FrequencyEstimate> {
    let taps = prefilter_taps(w.sample_rate, w.nominal_freq);
    let filtered = convolve_valid(&w.samples, &taps);
    let mut est = if filtered.len() >= 3 {
        estimate_raw(&filtered, w.sample_rate)?
    } else {
        estimate_raw(&w.samples, w.sample_rate)?
    };
    est.window_cycles = w.samples.len() as f64 * est.freq / w.sample_rate;
    Ok(est)
}

/// Like [`estimate_frequency`], but falls back to the nominal frequency
/// when the estimator fails.
pub fn estimate_or_nominal(w: &Waveform) -> FrequencyEstimate {
    match estimate_frequency(w) {
        Ok(e) => e,
        Err(e) => {
            warn!("{e}; using nominal {} Hz", w.nominal_freq);
            let theta = 2.0 * PI * w.nominal_freq / w.sample_rate;
            FrequencyEstimate {
                c: theta.cos(),
                freq: w.nominal_freq,
                window_cycles: w.samples.len() as f64 * w.nominal_freq / w.sample_rate,
            }
        }
    }
}

fn catmull_rom(p: [f64; 4], u: f64) -> f64 {
    0.5 * (2.0 * p[1]
        + (p[2] - p[0]) * u
        + (2.0 * p[0] - 5.0 * p[1] + 4.0 * p[2] - p[3]) * u * u
        + (3.0 * (p[1] - p[2]) + p[3] - p[0]) * u * u * u)
}

/// Resample so that every estimated period holds 256 samples and the window
/// holds exactly ten periods. Inputs shorter than ten estimated periods
/// are extended with a harmonic model of their last cycle.
pub fn resample_sync(w: &Waveform, est: &FrequencyEstimate) -> Result<SyncedWaveform> {
    let nominal = w.nominal_freq;
    if !est.freq.is_finite() || (est.freq - nominal).abs() > 0.1 * nominal {
        return Err(Error::FrequencyOutOfRange {
            freq: est.freq,
            nominal,
        });
    }
    let period = w.sample_rate / est.freq;
    let step = period / SAMPLES_PER_PERIOD as f64;
    let last_t = (SYNCED_LEN - 1) as f64 * step;
    let need = last_t.floor() as usize + 3;

    let mut x: Vec<f64> = w.samples.clone();
    // one missing tap is extrapolated below; more need a model of the signal
    if x.len() < need - 1 {
        let fit_len = (period.round() as usize).min(x.len());
        if fit_len < 16 {
            return Err(Error::DegenerateSignal(format!(
                "window of {} samples is too short to synchronize",
                x.len()
            )));
        }
        let fit = extend::fit_free(
            &x[x.len() - fit_len..],
            period,
            0.03,
            extend::DEFAULT_HARMONICS,
        );
        x.extend(fit.eval_range(fit_len as i64, need - x.len()));
    }
    let n = x.len() as isize;
    let at = |i: isize| {
        if i >= n && n >= 4 {
            let t = &x[x.len() - 4..];
            4.0 * t[3] - 6.0 * t[2] + 4.0 * t[1] - t[0]
        } else {
            x[i.clamp(0, n - 1) as usize]
        }
    };
    let samples: Vec<f64> = (0..SYNCED_LEN)
        .map(|k| {
            let t = k as f64 * step;
            let i = t.floor();
            let u = t - i;
            let i = i as isize;
            if u == 0.0 {
                return at(i);
            }
            catmull_rom([at(i - 1), at(i), at(i + 1), at(i + 2)], u)
        })
        .collect();
    let out_rate = SAMPLES_PER_PERIOD as f64 * est.freq;
    Ok(SyncedWaveform {
        waveform: Waveform {
            samples,
            sample_rate: out_rate,
            nominal_freq: est.freq,
        },
        resampling_ratio: w.sample_rate / out_rate,
        f_est: est.freq,
    })
}
