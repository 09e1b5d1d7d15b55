//! ITD(n), event window, GDR and the (k1, k2) feature vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freqsync::{self, SyncedWaveform};
use crate::siggen::Waveform;
use crate::wmra::{self, BandRms, Padding, WmraDecomposition, SAMPLES_PER_PERIOD};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItdSeries {
    /// Percent.
    pub itd: Vec<f64>,
    /// Approximation-band RMS in volts.
    pub a_j: f64,
    pub mean_itd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventWindow {
    /// Event start in seconds.
    pub t0: f64,
    /// Event duration `T0` in seconds.
    pub duration: f64,
    /// Analysis window `T` in seconds.
    pub window: f64,
    /// Sample indices of the first and last event sample.
    pub start: usize,
    pub end: usize,
    /// Whole window judged disturbed.
    pub stationary: bool,
}

impl EventWindow {
    pub fn none(window: f64) -> Self {
        Self {
            t0: 0.0,
            duration: 0.0,
            window,
            start: 0,
            end: 0,
            stationary: false,
        }
    }

    /// `1 + T0/T`.
    pub fn factor(&self) -> f64 {
        1.0 + self.duration / self.window
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// Window RMS `S` in volts.
    pub k1: f64,
    /// GDR in percent.
    pub k2: f64,
}

impl FeatureVector {
    pub fn as_array(&self) -> [f64; 2] {
        [self.k1, self.k2]
    }
}

/// Parameters of the event detector. Lengths are in synchronized samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Samples excluded at each end.
    pub guard: usize,
    /// Detection threshold is `max(median_factor * median, floor)`.
    pub median_factor: f64,
    pub floor: f64,
    /// Excursions must also reach this fraction of the largest peak.
    pub peak_fraction: f64,
    /// Floor of the lower threshold used to follow a decaying tail.
    pub exit_floor: f64,
    /// Excursions closer than this are merged.
    pub merge_gap: usize,
    /// Fundamental RMS is compared over this many samples on each side of
    /// a peak to tell a magnitude step from an oscillation.
    pub step_window: usize,
    pub step_offset: usize,
    /// Relative change of the fundamental RMS that counts as a step.
    pub step_tolerance: f64,
    /// Half width of the search for the sharpest d1+d2 energy around a peak.
    pub refine_half_width: usize,
    /// Local maxima below this fraction of an excursion's maximum are
    /// ignored when splitting a merged excursion into its two edges.
    pub local_max_fraction: f64,
    /// Moving-average length of the stationarity test.
    pub envelope_len: usize,
    /// The window is stationary when the ITD envelope exceeds this level
    /// (percent) ...
    pub stationary_level: f64,
    /// ... on at least this fraction of the guarded samples.
    pub stationary_fraction: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            guard: 64,
            median_factor: 3.0,
            floor: 1.0,
            peak_fraction: 0.1,
            exit_floor: 0.5,
            merge_gap: 64,
            step_window: SAMPLES_PER_PERIOD,
            step_offset: 64,
            step_tolerance: 0.05,
            refine_half_width: 128,
            local_max_fraction: 0.25,
            envelope_len: SAMPLES_PER_PERIOD,
            stationary_level: 1.0,
            stationary_fraction: 0.9,
        }
    }
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// First index of the maximum.
fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

/// `ITD(n) = 100 * sqrt(sum_j d_j(n)^2) / A_J`.
pub fn itd_series(dec: &WmraDecomposition) -> Result<ItdSeries> {
    let a_j = rms(&dec.approx);
    if !(a_j > 0.0) || !a_j.is_finite() {
        return Err(Error::DegenerateSignal(
            "approximation band is empty (no fundamental)".into(),
        ));
    }
    let itd: Vec<f64> = (0..dec.len())
        .map(|n| {
            let e: f64 = dec.details.iter().map(|d| d[n] * d[n]).sum();
            100.0 * e.sqrt() / a_j
        })
        .collect();
    let mean_itd = itd.iter().sum::<f64>() / itd.len() as f64;
    Ok(ItdSeries { itd, a_j, mean_itd })
}

/// Centred moving average with zero padding (length `len`, the extra sample
/// of an even window falls before the centre).
fn moving_average(x: &[f64], len: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let back = (len / 2) as isize;
    let fwd = len as isize - back - 1;
    let mut prefix = vec![0.0; x.len() + 1];
    for (i, v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..n)
        .map(|i| {
            let lo = (i - back).clamp(0, n) as usize;
            let hi = (i + fwd + 1).clamp(0, n) as usize;
            (prefix[hi] - prefix[lo]) / len as f64
        })
        .collect()
}

/// Runs of `mask`, as half-open ranges, merging runs separated by at most
/// `merge` samples.
fn excursions(mask: &[bool], merge: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < mask.len() {
        if !mask[i] {
            i += 1;
            continue;
        }
        let mut j = i;
        while j < mask.len() && mask[j] {
            j += 1;
        }
        match out.last_mut() {
            Some(last) if i - last.1 <= merge => last.1 = j,
            _ => out.push((i, j)),
        }
        i = j;
    }
    out
}

struct Detector<'a> {
    itd: &'a [f64],
    approx: &'a [f64],
    fine: Vec<f64>,
    cfg: &'a DetectorConfig,
    a_j: f64,
    exit: f64,
}

impl Detector<'_> {
    fn window_rms(&self, lo: isize, hi: isize) -> Option<f64> {
        let n = self.approx.len() as isize;
        let (lo, hi) = (lo.clamp(0, n) as usize, hi.clamp(0, n) as usize);
        if hi <= lo || hi - lo < self.cfg.step_window / 4 {
            return None;
        }
        Some(rms(&self.approx[lo..hi]))
    }

    /// Whether the fundamental level differs on the two sides of `p`.
    fn is_step(&self, p: usize) -> bool {
        let p = p as isize;
        let off = self.cfg.step_offset as isize;
        let w = self.cfg.step_window as isize;
        let before = self.window_rms(p - off - w, p - off);
        let after = self.window_rms(p + off, p + off + w);
        match (before, after) {
            (Some(b), Some(a)) => (a - b).abs() / self.a_j > self.cfg.step_tolerance,
            _ => true,
        }
    }

    /// Sharpest high-band energy near `p`.
    fn refine(&self, p: usize) -> usize {
        let w = self.cfg.refine_half_width;
        let lo = p.saturating_sub(w);
        let hi = (p + w).min(self.fine.len());
        lo + argmax(&self.fine[lo..hi])
    }

    /// Follow the ITD forward from `p` while it stays above the exit level.
    fn walk(&self, p: usize) -> usize {
        let n = self.itd.len();
        let guard = self.cfg.guard;
        let mut last = p;
        let mut j = p;
        while j >= guard && j < n - guard {
            if self.itd[j] > self.exit {
                last = j;
            } else if j - last > self.cfg.merge_gap {
                break;
            }
            j += 1;
        }
        last
    }
}

/// Locate the disturbance. A window whose smoothed ITD stays above the
/// stationary level almost everywhere is stationary and gets `T0 = T`.
/// Otherwise the first and last ITD peaks bound the event: magnitude steps
/// are located by their edge peaks and an oscillation is followed until it
/// decays below the exit level.
pub fn detect_event_window(
    series: &ItdSeries,
    dec: &WmraDecomposition,
    cfg: &DetectorConfig,
) -> EventWindow {
    let itd = &series.itd;
    let n = itd.len();
    let window = n as f64 / dec.sample_rate;
    let guard = cfg.guard;
    if n <= 2 * guard + 2 {
        return EventWindow::none(window);
    }
    let core = &itd[guard..n - guard];

    let env = moving_average(itd, cfg.envelope_len.max(1));
    let above = env[guard..n - guard]
        .iter()
        .filter(|v| **v > cfg.stationary_level)
        .count();
    if above as f64 >= cfg.stationary_fraction * core.len() as f64 {
        return EventWindow {
            t0: 0.0,
            duration: window,
            window,
            start: 0,
            end: n,
            stationary: true,
        };
    }

    let med = median(core);
    let theta = (cfg.median_factor * med).max(cfg.floor);
    let peak = core.iter().cloned().fold(f64::MIN, f64::max);
    if peak <= theta {
        return EventWindow::none(window);
    }
    let theta_hi = theta.max(cfg.peak_fraction * peak);
    let mask: Vec<bool> = core.iter().map(|v| *v > theta_hi).collect();
    let ex: Vec<(usize, usize)> = excursions(&mask, cfg.merge_gap)
        .into_iter()
        .map(|(a, b)| (a + guard, b + guard))
        .collect();

    let mut fine = vec![0.0; n];
    for j in 1..=2.min(dec.levels) {
        for (f, v) in fine.iter_mut().zip(dec.detail(j)) {
            *f += v * v;
        }
    }
    let det = Detector {
        itd,
        approx: &dec.approx,
        fine,
        cfg,
        a_j: series.a_j,
        exit: (cfg.median_factor * med).max(cfg.exit_floor),
    };

    let (a, b) = ex[0];
    let t0 = det.refine(a + argmax(&itd[a..b]));
    let (a, b) = *ex.last().expect("at least one excursion");
    let p = a + argmax(&itd[a..b]);
    let (start, end) = if ex.len() == 1 && det.is_step(p) {
        // both edges of a short step merged into one excursion
        let seg = &itd[a..b];
        let top = seg.iter().cloned().fold(f64::MIN, f64::max);
        let mut loc: Vec<usize> = (1..seg.len().saturating_sub(1))
            .filter(|&i| {
                seg[i] >= seg[i - 1] && seg[i] >= seg[i + 1] && seg[i] >= cfg.local_max_fraction * top
            })
            .collect();
        if loc.is_empty() {
            loc.push(argmax(seg));
        }
        (det.refine(a + loc[0]), det.refine(a + loc[loc.len() - 1]))
    } else if det.is_step(p) {
        (t0, det.refine(p))
    } else {
        (t0, det.walk(p))
    };
    let end = end.max(start);
    EventWindow {
        t0: start as f64 / dec.sample_rate,
        duration: (end - start) as f64 / dec.sample_rate,
        window,
        start,
        end,
        stationary: false,
    }
}

/// `GDR = (1 + T0/T) <ITD>`.
pub fn gdr(series: &ItdSeries, ev: &EventWindow) -> f64 {
    ev.factor() * series.mean_itd
}

/// GDR evaluated directly from the band signals.
pub fn gdr_explicit(dec: &WmraDecomposition, ev: &EventWindow) -> f64 {
    let a_j = rms(&dec.approx);
    let n = dec.len();
    let total: f64 = (0..n)
        .map(|i| dec.details.iter().map(|d| d[i] * d[i]).sum::<f64>().sqrt())
        .sum();
    ev.factor() * (total / n as f64) / a_j * 100.0
}

/// Everything computed for one window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisRecord {
    pub f_est: f64,
    pub k1: f64,
    pub k2: f64,
    pub t0: f64,
    #[serde(rename = "T0")]
    pub t0_duration: f64,
    #[serde(rename = "T")]
    pub window: f64,
    pub stationary: bool,
    pub mean_itd: f64,
    pub band_rms: BandRms,
    pub resampling_ratio: f64,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub record: AnalysisRecord,
    pub synced: SyncedWaveform,
    pub decomposition: WmraDecomposition,
    pub itd: ItdSeries,
    pub event: EventWindow,
}

impl Analysis {
    pub fn features(&self) -> FeatureVector {
        FeatureVector {
            k1: self.record.k1,
            k2: self.record.k2,
        }
    }
}

/// Estimate, synchronize, decompose and index one window.
pub fn analyze(w: &Waveform, cfg: &DetectorConfig) -> Result<Analysis> {
    if w.samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite sample".into()));
    }
    let est = freqsync::estimate_or_nominal(w);
    let synced = freqsync::resample_sync(w, &est)?;
    let x = &synced.waveform.samples;
    let dec = wmra::decompose_with(
        x,
        synced.waveform.sample_rate,
        wmra::LEVELS,
        Padding::fitted(x),
    )?;
    let itd = itd_series(&dec)?;
    let event = detect_event_window(&itd, &dec, cfg);
    let band_rms = wmra::band_rms(&dec);
    let record = AnalysisRecord {
        f_est: est.freq,
        k1: band_rms.s,
        k2: gdr(&itd, &event),
        t0: event.t0,
        t0_duration: event.duration,
        window: event.window,
        stationary: event.stationary,
        mean_itd: itd.mean_itd,
        band_rms,
        resampling_ratio: synced.resampling_ratio,
    };
    Ok(Analysis {
        record,
        synced,
        decomposition: dec,
        itd,
        event,
    })
}

/// `(k1, k2)` with the default detector.
pub fn feature_vector(w: &Waveform) -> Result<FeatureVector> {
    Ok(analyze(w, &DetectorConfig::default())?.features())
}
