//! Synthetic single-phase waveforms for the ten disturbance classes.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{param, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
    pub nominal_freq: f64,
}

impl Waveform {
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn rms(&self) -> f64 {
        (self.power()).sqrt()
    }

    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.samples.len() as f64
    }
}

/// Disturbance class with its stable integer code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum ClassLabel {
    Harmonics = 0,
    Sag = 1,
    Swell = 2,
    Transient = 3,
    Flicker = 4,
    HarmonicsSag = 5,
    HarmonicsSwell = 6,
    TransientSag = 7,
    TransientSwell = 8,
    TransientHarmonics = 9,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 10] = [
        ClassLabel::Harmonics,
        ClassLabel::Sag,
        ClassLabel::Swell,
        ClassLabel::Transient,
        ClassLabel::Flicker,
        ClassLabel::HarmonicsSag,
        ClassLabel::HarmonicsSwell,
        ClassLabel::TransientSag,
        ClassLabel::TransientSwell,
        ClassLabel::TransientHarmonics,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Harmonics => "harmonics",
            ClassLabel::Sag => "sag",
            ClassLabel::Swell => "swell",
            ClassLabel::Transient => "oscillatory transient",
            ClassLabel::Flicker => "flicker",
            ClassLabel::HarmonicsSag => "harmonics+sag",
            ClassLabel::HarmonicsSwell => "harmonics+swell",
            ClassLabel::TransientSag => "transient+sag",
            ClassLabel::TransientSwell => "transient+swell",
            ClassLabel::TransientHarmonics => "transient+harmonics",
        }
    }

    pub fn has_sag(self) -> bool {
        matches!(self, Self::Sag | Self::HarmonicsSag | Self::TransientSag)
    }

    pub fn has_swell(self) -> bool {
        matches!(self, Self::Swell | Self::HarmonicsSwell | Self::TransientSwell)
    }

    pub fn has_harmonics(self) -> bool {
        matches!(
            self,
            Self::Harmonics | Self::HarmonicsSag | Self::HarmonicsSwell | Self::TransientHarmonics
        )
    }

    pub fn has_transient(self) -> bool {
        matches!(
            self,
            Self::Transient | Self::TransientSag | Self::TransientSwell | Self::TransientHarmonics
        )
    }
}

impl From<ClassLabel> for u8 {
    fn from(c: ClassLabel) -> u8 {
        c.code()
    }
}

impl TryFrom<u8> for ClassLabel {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        ClassLabel::from_code(v).ok_or_else(|| format!("class code {v} is not in 0..=9"))
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "C{}", self.code())
    }
}

/// Rectangular sag or swell of the fundamental and its harmonics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnitudeEvent {
    /// Residual (sag) or raised (swell) magnitude in per-unit.
    pub magnitude: f64,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    /// Peak amplitude relative to the fundamental.
    pub amplitude: f64,
    pub phase: f64,
}

/// Damped sinusoid starting at zero phase at `start`, gated off at `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transient {
    pub freq: f64,
    /// Decay rate in 1/s.
    pub damping: f64,
    /// Initial peak relative to the fundamental peak.
    pub amplitude: f64,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Flicker {
    pub mod_freq: f64,
    pub depth: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSpec {
    pub label: ClassLabel,
    pub sample_rate: f64,
    pub nominal_freq: f64,
    pub duration: f64,
    /// Peak volts.
    pub fundamental_amplitude: f64,
    pub fundamental_freq: f64,
    pub phase: f64,
    pub magnitude_event: Option<MagnitudeEvent>,
    pub harmonics: Vec<Harmonic>,
    pub transient: Option<Transient>,
    pub flicker: Option<Flicker>,
    /// `None` means noiseless.
    pub noise_snr_db: Option<f64>,
    pub rng_seed: u64,
}

impl DisturbanceSpec {
    /// Undisturbed 50 Hz, 230 V RMS, ten-cycle window at 12.8 kHz.
    pub fn clean(label: ClassLabel) -> Self {
        Self {
            label,
            sample_rate: 12800.0,
            nominal_freq: 50.0,
            duration: 0.2,
            fundamental_amplitude: 230.0 * SQRT_2,
            fundamental_freq: 50.0,
            phase: 0.0,
            magnitude_event: None,
            harmonics: Vec::new(),
            transient: None,
            flicker: None,
            noise_snr_db: None,
            rng_seed: 0,
        }
    }

    pub fn sample_count(&self) -> usize {
        (self.sample_rate * self.duration).round() as usize
    }

    /// Span enclosing every localized event, in seconds.
    pub fn event_bounds(&self) -> Option<(f64, f64)> {
        let spans = self
            .magnitude_event
            .iter()
            .map(|e| (e.start, e.end))
            .chain(self.transient.iter().map(|t| (t.start, t.end)));
        spans.reduce(|a, b| (a.0.min(b.0), a.1.max(b.1)))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, field: &'static str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(param(field, format!("must be positive and finite, got {v}")))
            }
        };
        positive(self.sample_rate, "sample_rate")?;
        positive(self.nominal_freq, "nominal_freq")?;
        positive(self.duration, "duration")?;
        positive(self.fundamental_amplitude, "fundamental_amplitude")?;
        positive(self.fundamental_freq, "fundamental_freq")?;
        if self.sample_count() == 0 {
            return Err(param("duration", "window holds no samples"));
        }
        let nyquist = self.sample_rate / 2.0;
        if self.fundamental_freq >= nyquist {
            return Err(param("fundamental_freq", "must be below Nyquist"));
        }
        let span = |s: f64, e: f64, field: &'static str| {
            if s.is_finite() && e.is_finite() && 0.0 <= s && s < e && e <= self.duration {
                Ok(())
            } else {
                Err(param(
                    field,
                    format!("need 0 <= start < end <= {}, got [{s}, {e}]", self.duration),
                ))
            }
        };
        if let Some(ev) = &self.magnitude_event {
            span(ev.start, ev.end, "event_start")?;
            let m = ev.magnitude;
            let ok = (0.1..=0.9).contains(&m) || (1.1..=1.8).contains(&m);
            if !ok {
                return Err(param(
                    "magnitude",
                    format!("sag residual must be in [0.1, 0.9] pu and swell in [1.1, 1.8] pu, got {m}"),
                ));
            }
        }
        for h in &self.harmonics {
            if h.order < 2 {
                return Err(param("harmonic_order", format!("order {} < 2", h.order)));
            }
            if h.order as f64 * self.fundamental_freq >= nyquist {
                return Err(param("harmonic_order", format!("order {} aliases", h.order)));
            }
            if !(h.amplitude.is_finite() && h.amplitude >= 0.0) {
                return Err(param("harmonic_amplitude", format!("got {}", h.amplitude)));
            }
        }
        if let Some(t) = &self.transient {
            span(t.start, t.end, "transient_start")?;
            positive(t.freq, "transient_freq")?;
            if t.freq >= nyquist {
                return Err(param("transient_freq", format!("{} Hz >= Nyquist", t.freq)));
            }
            positive(t.damping, "transient_damping")?;
            positive(t.amplitude, "transient_amplitude")?;
        }
        if let Some(f) = &self.flicker {
            positive(f.mod_freq, "flicker_mod_freq")?;
            if !(0.0..1.0).contains(&f.depth) {
                return Err(param("flicker_mod_depth", format!("need [0, 1), got {}", f.depth)));
            }
        }
        if let Some(snr) = self.noise_snr_db {
            if snr.is_nan() {
                return Err(param("noise_snr_db", "NaN"));
            }
        }
        Ok(())
    }
}

/// Deterministic waveform for `spec`, including its noise if any.
pub fn synthesize(spec: &DisturbanceSpec) -> Result<Waveform> {
    spec.validate()?;
    let n = spec.sample_count();
    let fs = spec.sample_rate;
    let a = spec.fundamental_amplitude;
    let w0 = 2.0 * PI * spec.fundamental_freq;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let mut steady = a * (w0 * t + spec.phase).sin();
            for h in &spec.harmonics {
                steady += h.amplitude * a * (h.order as f64 * w0 * t + h.phase).sin();
            }
            let mut env = 1.0;
            if let Some(ev) = &spec.magnitude_event {
                if ev.start <= t && t < ev.end {
                    env = ev.magnitude;
                }
            }
            if let Some(fl) = &spec.flicker {
                env *= 1.0 + fl.depth * (2.0 * PI * fl.mod_freq * t + fl.phase).sin();
            }
            let mut v = steady * env;
            if let Some(tr) = &spec.transient {
                if tr.start <= t && t < tr.end {
                    let dt = t - tr.start;
                    v += tr.amplitude * a * (-tr.damping * dt).exp() * (2.0 * PI * tr.freq * dt).sin();
                }
            }
            v
        })
        .collect();
    let w = Waveform {
        samples,
        sample_rate: fs,
        nominal_freq: spec.nominal_freq,
    };
    match spec.noise_snr_db {
        Some(snr) => add_noise(&w, snr, spec.rng_seed),
        None => Ok(w),
    }
}

/// Add white Gaussian noise whose power is exactly `P_signal / 10^(snr/10)`.
/// An infinite SNR returns the input unchanged.
pub fn add_noise(w: &Waveform, snr_db: f64, seed: u64) -> Result<Waveform> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(param("snr_db", format!("got {snr_db}")));
    }
    if snr_db == f64::INFINITY {
        return Ok(w.clone());
    }
    let p = w.power();
    if !(p > 0.0) {
        return Err(Error::DegenerateSignal("zero-power input, SNR undefined".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut noise: Vec<f64> = (0..w.samples.len())
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let pn = noise.iter().map(|v| v * v).sum::<f64>() / noise.len() as f64;
    let target = p / 10f64.powf(snr_db / 10.0);
    let k = (target / pn).sqrt();
    for v in &mut noise {
        *v *= k;
    }
    Ok(Waveform {
        samples: w.samples.iter().zip(&noise).map(|(s, n)| s + n).collect(),
        sample_rate: w.sample_rate,
        nominal_freq: w.nominal_freq,
    })
}

/// Closed interval for uniform draws. `lo == hi` is a fixed value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn check(&self, field: &'static str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(param(field, format!("empty range [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        self.lo + (self.hi - self.lo) * u
    }
}

/// Per-class parameter ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassRanges {
    pub fundamental_freq: Range,
    pub sag_residual: Range,
    pub swell_magnitude: Range,
    /// Sag/swell duration in cycles.
    pub event_cycles: Range,
    pub harmonic_orders: Vec<u32>,
    pub harmonic_amplitude: Range,
    pub transient_amplitude: Range,
    /// Decay time constant in milliseconds.
    pub transient_tau_ms: Range,
    pub transient_freq: Range,
    pub flicker_depth: Range,
    pub flicker_freq: Range,
    /// Minimum distance in cycles between an event and the window edges.
    pub edge_margin_cycles: f64,
    /// Fraction of the fundamental RMS at which a transient is considered
    /// over and gated off.
    pub transient_end_level: f64,
}

impl Default for ClassRanges {
    fn default() -> Self {
        Self {
            fundamental_freq: Range::new(49.5, 50.5),
            sag_residual: Range::new(0.4, 0.8),
            swell_magnitude: Range::new(1.2, 1.5),
            event_cycles: Range::new(2.0, 6.0),
            harmonic_orders: vec![3, 5, 7],
            harmonic_amplitude: Range::new(0.08, 0.10),
            transient_amplitude: Range::new(1.0, 2.0),
            transient_tau_ms: Range::new(8.0, 12.0),
            transient_freq: Range::new(500.0, 5000.0),
            flicker_depth: Range::new(0.02, 0.10),
            flicker_freq: Range::new(8.0, 10.0),
            edge_margin_cycles: 1.0,
            transient_end_level: 0.01,
        }
    }
}

impl ClassRanges {
    pub fn validate(&self) -> Result<()> {
        self.fundamental_freq.check("fundamental_freq")?;
        self.sag_residual.check("sag_residual")?;
        self.swell_magnitude.check("swell_magnitude")?;
        self.event_cycles.check("event_cycles")?;
        self.harmonic_amplitude.check("harmonic_amplitude")?;
        self.transient_amplitude.check("transient_amplitude")?;
        self.transient_tau_ms.check("transient_tau_ms")?;
        self.transient_freq.check("transient_freq")?;
        self.flicker_depth.check("flicker_depth")?;
        self.flicker_freq.check("flicker_freq")?;
        if self.sag_residual.lo < 0.1 || self.sag_residual.hi > 0.9 {
            return Err(param("sag_residual", "must lie within [0.1, 0.9] pu"));
        }
        if self.swell_magnitude.lo < 1.1 || self.swell_magnitude.hi > 1.8 {
            return Err(param("swell_magnitude", "must lie within [1.1, 1.8] pu"));
        }
        if self.event_cycles.lo <= 0.0 {
            return Err(param("event_cycles", "must be positive"));
        }
        if self.transient_tau_ms.lo <= 0.0 {
            return Err(param("transient_tau_ms", "must be positive"));
        }
        if !(self.edge_margin_cycles >= 0.0) {
            return Err(param("edge_margin_cycles", "must be non-negative"));
        }
        if !(self.transient_end_level > 0.0) {
            return Err(param("transient_end_level", "must be positive"));
        }
        if self.harmonic_orders.is_empty() {
            return Err(param("harmonic_orders", "empty list"));
        }
        Ok(())
    }
}

/// Noise applied to generated items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SnrPolicy {
    Clean,
    Fixed { snr_db: f64 },
    /// Every item noisy, SNR uniform in `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Even indices clean, odd indices noisy with SNR uniform in `[lo, hi]`.
    Mixed { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub per_class_count: usize,
    pub master_seed: u64,
    pub snr: SnrPolicy,
    pub ranges: ClassRanges,
    pub sample_rate: f64,
    pub nominal_freq: f64,
    /// Fundamental RMS in volts.
    pub nominal_rms: f64,
    /// Window length in cycles of the drawn fundamental.
    pub window_cycles: f64,
    pub classes: Vec<ClassLabel>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            per_class_count: 100,
            master_seed: 0,
            snr: SnrPolicy::Clean,
            ranges: ClassRanges::default(),
            sample_rate: 12800.0,
            nominal_freq: 50.0,
            nominal_rms: 230.0,
            window_cycles: 10.0,
            classes: ClassLabel::ALL.to_vec(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_class_count == 0 {
            return Err(param("per_class_count", "must be at least 1"));
        }
        if self.classes.is_empty() {
            return Err(param("classes", "empty class list"));
        }
        if !(self.window_cycles >= 3.0) {
            return Err(param("window_cycles", "must be at least 3"));
        }
        match self.snr {
            SnrPolicy::Uniform { lo, hi } | SnrPolicy::Mixed { lo, hi } => {
                Range::new(lo, hi).check("snr")?
            }
            SnrPolicy::Fixed { snr_db } if snr_db.is_nan() => return Err(param("snr", "NaN")),
            _ => {}
        }
        self.ranges.validate()
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(&json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Item seed: SHA-256 over the little-endian master seed, class code and
/// item index.
pub fn item_seed(master: u64, class: ClassLabel, index: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"pqgdr-item");
    h.update(master.to_le_bytes());
    h.update([class.code()]);
    h.update((index as u64).to_le_bytes());
    h.finalize().into()
}

/// Seed for a derived stream, e.g. re-noising an item at another SNR.
pub fn derive_seed(base: u64, tag: &str, value: f64) -> u64 {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update(base.to_le_bytes());
    h.update(value.to_bits().to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Draw a random spec for `label`.
pub fn draw_spec(
    label: ClassLabel,
    cfg: &DatasetConfig,
    rng: &mut impl Rng,
) -> Result<DisturbanceSpec> {
    let r = &cfg.ranges;
    let fs = cfg.sample_rate;
    let f = r.fundamental_freq.draw(rng);
    let n = (fs * cfg.window_cycles / f).round();
    let duration = n / fs;
    let margin = r.edge_margin_cycles / f;
    let mut spec = DisturbanceSpec {
        label,
        sample_rate: fs,
        nominal_freq: cfg.nominal_freq,
        duration,
        fundamental_amplitude: cfg.nominal_rms * SQRT_2,
        fundamental_freq: f,
        phase: rng.random::<f64>() * 2.0 * PI,
        magnitude_event: None,
        harmonics: Vec::new(),
        transient: None,
        flicker: None,
        noise_snr_db: None,
        rng_seed: 0,
    };
    if label.has_sag() || label.has_swell() {
        let d = (r.event_cycles.draw(rng) / f).min(duration - 2.0 * margin);
        let start = Range::new(margin, (duration - d - margin).max(margin)).draw(rng);
        let end = start + d;
        let magnitude = if label.has_sag() {
            r.sag_residual.draw(rng)
        } else {
            r.swell_magnitude.draw(rng)
        };
        spec.magnitude_event = Some(MagnitudeEvent {
            magnitude,
            start,
            end,
        });
    }
    if label.has_harmonics() {
        for &order in &r.harmonic_orders {
            spec.harmonics.push(Harmonic {
                order,
                amplitude: r.harmonic_amplitude.draw(rng),
                phase: rng.random::<f64>() * 2.0 * PI,
            });
        }
    }
    if label.has_transient() {
        let tau = r.transient_tau_ms.draw(rng) * 1e-3;
        let amplitude = r.transient_amplitude.draw(rng);
        let freq = r.transient_freq.draw(rng);
        // time for the envelope to fall to the end level of the fundamental RMS
        let len = tau * (amplitude * SQRT_2 / r.transient_end_level).ln().max(0.0);
        let start = Range::new(margin, (duration - len - margin).max(margin)).draw(rng);
        let end = (start + len).min(duration - margin).max(start + 1.0 / fs);
        spec.transient = Some(Transient {
            freq,
            damping: 1.0 / tau,
            amplitude,
            start,
            end,
        });
    }
    if label == ClassLabel::Flicker {
        spec.flicker = Some(Flicker {
            depth: r.flicker_depth.draw(rng),
            mod_freq: r.flicker_freq.draw(rng),
            phase: rng.random::<f64>() * 2.0 * PI,
        });
    }
    spec.rng_seed = rng.random();
    spec.noise_snr_db = None;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub label: ClassLabel,
    pub spec: DisturbanceSpec,
    pub waveform: Waveform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub config: DatasetConfig,
    pub digest: String,
    pub entries: Vec<DatasetEntry>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_counts(&self) -> Vec<(ClassLabel, usize)> {
        ClassLabel::ALL
            .iter()
            .map(|&c| (c, self.entries.iter().filter(|e| e.label == c).count()))
            .filter(|&(_, n)| n > 0)
            .collect()
    }

    /// Same signals with fresh noise at `snr_db`. Seeds derive from each
    /// item's own seed and the SNR value.
    pub fn renoised(&self, snr_db: Option<f64>) -> Result<LabeledDataset> {
        let entries = self
            .entries
            .par_iter()
            .map(|e| {
                let mut spec = e.spec.clone();
                spec.noise_snr_db = snr_db;
                if let Some(s) = snr_db {
                    spec.rng_seed = derive_seed(e.spec.rng_seed, "renoise", s);
                }
                let waveform = synthesize(&spec)?;
                Ok(DatasetEntry {
                    label: e.label,
                    spec,
                    waveform,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledDataset {
            config: self.config.clone(),
            digest: self.digest.clone(),
            entries,
        })
    }
}

/// Generate `per_class_count` items per class. Items are ordered by class
/// then index and each draws from its own seeded stream, so the result does
/// not depend on thread count.
pub fn make_dataset(cfg: &DatasetConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let jobs: Vec<(ClassLabel, usize)> = cfg
        .classes
        .iter()
        .flat_map(|&c| (0..cfg.per_class_count).map(move |i| (c, i)))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(label, index)| {
            let mut rng = ChaCha8Rng::from_seed(item_seed(cfg.master_seed, label, index));
            let mut spec = draw_spec(label, cfg, &mut rng)?;
            spec.noise_snr_db = match cfg.snr {
                SnrPolicy::Clean => None,
                SnrPolicy::Fixed { snr_db } => Some(snr_db),
                SnrPolicy::Uniform { lo, hi } => Some(Range::new(lo, hi).draw(&mut rng)),
                SnrPolicy::Mixed { lo, hi } => {
                    (index % 2 == 1).then(|| Range::new(lo, hi).draw(&mut rng))
                }
            };
            let waveform = synthesize(&spec)?;
            Ok(DatasetEntry {
                label,
                spec,
                waveform,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset {
        digest: cfg.digest(),
        config: cfg.clone(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_codes_round_trip() {
        for c in ClassLabel::ALL {
            assert_eq!(ClassLabel::from_code(c.code()), Some(c));
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(serde_json::from_str::<ClassLabel>(&json).unwrap(), c);
        }
        assert_eq!(ClassLabel::from_code(10), None);
        assert!(serde_json::from_str::<ClassLabel>("12").is_err());
    }

    #[test]
    fn clean_spec_is_pure_sine() {
        let w = synthesize(&DisturbanceSpec::clean(ClassLabel::Harmonics)).unwrap();
        assert_eq!(w.samples.len(), 2560);
        assert!((w.rms() - 230.0).abs() < 1e-9);
    }

    #[test]
    fn bad_sag_depth_names_field() {
        let mut s = DisturbanceSpec::clean(ClassLabel::Sag);
        s.magnitude_event = Some(MagnitudeEvent {
            magnitude: 0.05,
            start: 0.05,
            end: 0.1,
        });
        match synthesize(&s) {
            Err(Error::Parameter { field, .. }) => assert_eq!(field, "magnitude"),
            other => panic!("{other:?}"),
        }
        s.magnitude_event = Some(MagnitudeEvent {
            magnitude: 0.5,
            start: 0.1,
            end: 0.05,
        });
        assert!(synthesize(&s).is_err());
    }

    #[test]
    fn transient_above_nyquist_rejected() {
        let mut s = DisturbanceSpec::clean(ClassLabel::Transient);
        s.transient = Some(Transient {
            freq: 7000.0,
            damping: 500.0,
            amplitude: 0.5,
            start: 0.08,
            end: 0.1,
        });
        assert!(matches!(
            synthesize(&s),
            Err(Error::Parameter { field: "transient_freq", .. })
        ));
    }

    #[test]
    fn noise_power_is_exact() {
        let w = synthesize(&DisturbanceSpec::clean(ClassLabel::Harmonics)).unwrap();
        let noisy = add_noise(&w, 40.0, 3).unwrap();
        let pn: f64 = noisy
            .samples
            .iter()
            .zip(&w.samples)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / w.samples.len() as f64;
        let snr = 10.0 * (w.power() / pn).log10();
        assert!((snr - 40.0).abs() < 1e-9);
        assert_eq!(add_noise(&w, f64::INFINITY, 3).unwrap(), w);
        let zero = Waveform {
            samples: vec![0.0; 10],
            sample_rate: 1.0,
            nominal_freq: 1.0,
        };
        assert!(add_noise(&zero, 30.0, 1).is_err());
    }

    #[test]
    fn empty_range_is_rejected() {
        let mut cfg = DatasetConfig::default();
        cfg.ranges.transient_freq = Range::new(5000.0, 500.0);
        assert!(matches!(
            make_dataset(&cfg),
            Err(Error::Parameter { field: "transient_freq", .. })
        ));
        cfg = DatasetConfig {
            per_class_count: 0,
            ..Default::default()
        };
        assert!(make_dataset(&cfg).is_err());
    }

    #[test]
    fn event_bounds_enclose_components() {
        let mut s = DisturbanceSpec::clean(ClassLabel::TransientSag);
        s.magnitude_event = Some(MagnitudeEvent {
            magnitude: 0.5,
            start: 0.05,
            end: 0.09,
        });
        s.transient = Some(Transient {
            freq: 1000.0,
            damping: 200.0,
            amplitude: 1.0,
            start: 0.07,
            end: 0.12,
        });
        assert_eq!(s.event_bounds(), Some((0.05, 0.12)));
        assert_eq!(DisturbanceSpec::clean(ClassLabel::Harmonics).event_bounds(), None);
    }
}
