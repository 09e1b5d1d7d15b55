//! Ideal dyadic filter bank by FFT masking, the reference for the wavelet
//! bands of periodic test signals.

#![allow(dead_code)]

use rustfft::{num_complex::Complex, FftPlanner};

pub const FS: f64 = 12800.0;

/// Sum of `(freq, amplitude, phase)` sinusoids sampled at `FS`.
pub fn tones(n: usize, parts: &[(f64, f64, f64)]) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let t = i as f64 / FS;
            parts.iter().map(|&(f, a, p)| a * (2.0 * std::f64::consts::PI * f * t + p).sin()).sum()
        })
        .collect()
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Ideal dyadic bands of a periodic signal: `[a_6, d_1, ..., d_6]`.
pub fn brick_wall_bands(x: &[f64]) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut spec: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut spec);
    let band = |lo: f64, hi: f64| -> Vec<f64> {
        let mut s: Vec<Complex<f64>> = spec
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let f = k.min(n - k) as f64 * FS / n as f64;
                if f >= lo && f < hi {
                    *c
                } else {
                    Complex::new(0.0, 0.0)
                }
            })
            .collect();
        inv.process(&mut s);
        s.iter().map(|c| c.re / n as f64).collect()
    };
    let mut out = vec![band(0.0, FS / 128.0)];
    for j in 1..=6 {
        let hi = FS / 2f64.powi(j);
        // the top band keeps the Nyquist bin
        let hi = if j == 1 { hi + 1.0 } else { hi };
        out.push(band(FS / 2f64.powi(j + 1), hi));
    }
    out
}

pub fn oracle_mean_itd(x: &[f64]) -> f64 {
    let b = brick_wall_bands(x);
    let a = rms(&b[0]);
    let n = x.len();
    (0..n)
        .map(|i| 100.0 * b[1..].iter().map(|d| d[i] * d[i]).sum::<f64>().sqrt() / a)
        .sum::<f64>()
        / n as f64
}
