//! Six-level Mallat multiresolution analysis with the discrete Meyer filter.
//!
//! Each window is padded on both sides with a harmonic continuation of its
//! edge cycles, transformed with periodized filters and cropped back. The
//! continuation keeps the periodic wrap far away from the window, so the
//! band signals carry no artificial edge transient, and the transform stays
//! orthogonal on the padded signal.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dmey;
use crate::error::{param, Error, Result};
use crate::extend::{self, HarmonicFit};

/// Decomposition depth.
pub const LEVELS: usize = 6;

/// Samples per fundamental period after synchronization.
pub const SAMPLES_PER_PERIOD: usize = 256;

/// Samples of continuation added on each side before transforming.
pub const PAD: usize = 5 * SAMPLES_PER_PERIOD;

/// How each window edge is continued before transforming.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Padding {
    /// Period (samples) of the model fitted to the first cycle.
    pub left_period: f64,
    /// Period (samples) of the model fitted to the last cycle.
    pub right_period: f64,
}

impl Default for Padding {
    fn default() -> Self {
        Self {
            left_period: SAMPLES_PER_PERIOD as f64,
            right_period: SAMPLES_PER_PERIOD as f64,
        }
    }
}

impl Padding {
    /// Refine both periods against the data. Windows whose frequency
    /// estimate was biased by a disturbance are not exactly 256 samples per
    /// cycle, and a fixed-period continuation would leave a step at the
    /// junction.
    pub fn fitted(x: &[f64]) -> Self {
        let p = SAMPLES_PER_PERIOD as f64;
        let n = SAMPLES_PER_PERIOD.min(x.len());
        let left = extend::fit_free(&x[..n], p, 0.03, extend::DEFAULT_HARMONICS);
        let right = extend::fit_free(&x[x.len() - n..], p, 0.03, extend::DEFAULT_HARMONICS);
        Self {
            left_period: left.period,
            right_period: right.period,
        }
    }
}

/// Full-length band signals.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WmraDecomposition {
    /// Approximation band `a_J(n)`.
    pub approx: Vec<f64>,
    /// Detail bands, `details[j-1]` is `d_j(n)`.
    pub details: Vec<Vec<f64>>,
    pub levels: usize,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BandRms {
    pub a_j: f64,
    /// `d[j-1]` is `D_j`.
    pub d: Vec<f64>,
    pub s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Band {
    /// `None` for the approximation band.
    pub level: Option<usize>,
    pub f_lo: f64,
    pub f_hi: f64,
    /// Odd harmonic orders of the nominal frequency falling in the band.
    pub odd_harmonics: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BandMap {
    pub approx: Band,
    /// `details[j-1]` is detail level `j`.
    pub details: Vec<Band>,
}

fn analysis(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    // periodic extension so the inner loop needs no wrap
    let ext: Vec<f64> = (0..n + h.len()).map(|i| x[i % n]).collect();
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let win = &ext[2 * k..2 * k + h.len()];
        let (mut sa, mut sd) = (0.0, 0.0);
        for ((v, hm), gm) in win.iter().zip(h).zip(g) {
            sa += hm * v;
            sd += gm * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

/// Adjoint of [`analysis`]. Either input may be absent (all zeros).
fn synthesis(a: Option<&[f64]>, d: Option<&[f64]>, half: usize, h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = 2 * half;
    let mut ext = vec![0.0; n + h.len()];
    for (coef, filt) in [(a, h), (d, g)] {
        let Some(c) = coef else { continue };
        for (k, &ck) in c.iter().enumerate() {
            if ck == 0.0 {
                continue;
            }
            for (o, fm) in ext[2 * k..2 * k + filt.len()].iter_mut().zip(filt) {
                *o += fm * ck;
            }
        }
    }
    let mut x = vec![0.0; n];
    for (i, v) in ext.into_iter().enumerate() {
        x[i % n] += v;
    }
    x
}

/// Mallat analysis of an already padded signal followed by per-band
/// synthesis. Returns `[a_J, d_J, ..., d_1]` at full padded length.
fn periodized_bands(x: &[f64], levels: usize) -> Vec<Vec<f64>> {
    let h = dmey::lowpass();
    let g = dmey::highpass();
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analysis(&approx, h, g);
        details.push(d);
        approx = a;
    }
    let lift = |start_level: usize, coef: &[f64], is_detail: bool| -> Vec<f64> {
        let mut cur = if is_detail {
            synthesis(None, Some(coef), coef.len(), h, g)
        } else {
            synthesis(Some(coef), None, coef.len(), h, g)
        };
        for _ in 1..start_level {
            let half = cur.len();
            cur = synthesis(Some(&cur), None, half, h, g);
        }
        cur
    };
    let mut out = Vec::with_capacity(levels + 1);
    out.push(lift(levels, &approx, false));
    for j in (1..=levels).rev() {
        out.push(lift(j, &details[j - 1], true));
    }
    out
}

/// Decompose with the default fixed-period edge continuation. Linear in
/// `x`.
pub fn decompose(x: &[f64], sample_rate: f64) -> Result<WmraDecomposition> {
    decompose_with(x, sample_rate, LEVELS, Padding::default())
}

pub fn decompose_with(
    x: &[f64],
    sample_rate: f64,
    levels: usize,
    padding: Padding,
) -> Result<WmraDecomposition> {
    if levels == 0 {
        return Err(param("levels", "must be at least 1"));
    }
    let required = 1usize << levels;
    if x.is_empty() || !x.len().is_multiple_of(required) {
        return Err(Error::Shape {
            len: x.len(),
            required,
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite sample".into()));
    }
    let n = x.len();
    let fit_len = SAMPLES_PER_PERIOD.min(n);
    let left: HarmonicFit =
        extend::fit_fixed(&x[..fit_len], padding.left_period, extend::DEFAULT_HARMONICS);
    let right: HarmonicFit = extend::fit_fixed(
        &x[n - fit_len..],
        padding.right_period,
        extend::DEFAULT_HARMONICS,
    );
    // PAD is a multiple of 2^6, so the padded length keeps the divisibility
    let pad = PAD.div_ceil(required) * required;
    let mut padded = Vec::with_capacity(n + 2 * pad);
    padded.extend(left.eval_range(-(pad as i64), pad));
    padded.extend_from_slice(x);
    padded.extend(right.eval_range(fit_len as i64, pad));

    let mut bands = periodized_bands(&padded, levels)
        .into_iter()
        .map(|b| b[pad..pad + n].to_vec());
    let approx = bands.next().expect("approximation band");
    let mut details: Vec<Vec<f64>> = bands.collect();
    details.reverse();
    Ok(WmraDecomposition {
        approx,
        details,
        levels,
        sample_rate,
    })
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

impl WmraDecomposition {
    pub fn len(&self) -> usize {
        self.approx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.approx.is_empty()
    }

    /// Sum of all bands.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.approx.clone();
        for d in &self.details {
            for (o, v) in out.iter_mut().zip(d) {
                *o += v;
            }
        }
        out
    }

    /// Detail band `j` (1-based).
    pub fn detail(&self, j: usize) -> &[f64] {
        &self.details[j - 1]
    }

    /// Write one column per band (`a6,d6,...,d1`) as CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec![format!("a{}", self.levels)];
        header.extend((1..=self.levels).rev().map(|j| format!("d{j}")));
        writeln!(out, "{}", header.join(","))?;
        for n in 0..self.len() {
            let mut row = vec![self.approx[n].to_string()];
            row.extend((1..=self.levels).rev().map(|j| self.details[j - 1][n].to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Band RMS values with `S` from their quadrature sum.
pub fn band_rms(dec: &WmraDecomposition) -> BandRms {
    let a_j = rms(&dec.approx);
    let d: Vec<f64> = dec.details.iter().map(|b| rms(b)).collect();
    let s = (a_j * a_j + d.iter().map(|v| v * v).sum::<f64>()).sqrt();
    BandRms { a_j, d, s }
}

/// Nominal dyadic bands: detail `j` covers `(fs/2^(j+1), fs/2^j]`, the
/// approximation covers `[0, fs/2^(J+1)]`.
pub fn band_map(fs: f64, levels: usize, nominal_freq: f64) -> Result<BandMap> {
    if levels == 0 {
        return Err(param("levels", "must be at least 1"));
    }
    if !(fs > 0.0) {
        return Err(param("fs", "must be positive"));
    }
    let odd = |lo: f64, hi: f64, closed_lo: bool| -> Vec<u32> {
        if !(nominal_freq > 0.0) {
            return Vec::new();
        }
        (1..)
            .step_by(2)
            .map_while(|k: u32| {
                let f = k as f64 * nominal_freq;
                (f <= hi).then_some((k, f))
            })
            .filter(|&(_, f)| if closed_lo { f >= lo } else { f > lo })
            .map(|(k, _)| k)
            .collect()
    };
    let details = (1..=levels)
        .map(|j| {
            let hi = fs / 2f64.powi(j as i32);
            let lo = hi / 2.0;
            Band {
                level: Some(j),
                f_lo: lo,
                f_hi: hi,
                odd_harmonics: odd(lo, hi, false),
            }
        })
        .collect();
    let top = fs / 2f64.powi(levels as i32 + 1);
    Ok(BandMap {
        approx: Band {
            level: None,
            f_lo: 0.0,
            f_hi: top,
            odd_harmonics: odd(0.0, top, true),
        },
        details,
    })
}
