//! Waveform files and dataset directories.
//!
//! CSV: a header line `sample_rate,nominal_freq` followed by one sample per
//! line. Binary: the 8-byte magic `PQGDRW01`, then little-endian `f64`
//! sample rate, `f64` nominal frequency, `u64` sample count and the samples
//! as little-endian `f64`. Both round-trip exactly.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::siggen::{
    synthesize, ClassLabel, DatasetConfig, DatasetEntry, DisturbanceSpec, LabeledDataset, Waveform,
};

pub const BINARY_MAGIC: &[u8; 8] = b"PQGDRW01";
pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SampleFormat {
    #[default]
    Csv,
    Bin,
}

impl SampleFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SampleFormat::Csv => "csv",
            SampleFormat::Bin => "bin",
        }
    }
}

pub fn write_csv<W: Write>(w: &Waveform, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{},{}", w.sample_rate, w.nominal_freq)?;
    for v in &w.samples {
        writeln!(out, "{v}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Waveform> {
    let mut lines = BufReader::new(input).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty file".into()))??;
    let mut parts = header.split(',').map(str::trim);
    let mut num = |what: &str| -> Result<f64> {
        parts
            .next()
            .ok_or_else(|| Error::Format(format!("header lacks {what}")))?
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("header {what}: {e}")))
    };
    let sample_rate = num("sample_rate")?;
    let nominal_freq = num("nominal_freq")?;
    if !(sample_rate > 0.0 && nominal_freq > 0.0) {
        return Err(Error::Format("header values must be positive".into()));
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v = t
            .parse::<f64>()
            .map_err(|e| Error::Format(format!("line {}: {e}", i + 2)))?;
        samples.push(v);
    }
    if samples.is_empty() {
        return Err(Error::Format("no samples".into()));
    }
    Ok(Waveform {
        samples,
        sample_rate,
        nominal_freq,
    })
}

pub fn write_bin<W: Write>(w: &Waveform, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    out.write_all(BINARY_MAGIC)?;
    out.write_all(&w.sample_rate.to_le_bytes())?;
    out.write_all(&w.nominal_freq.to_le_bytes())?;
    out.write_all(&(w.samples.len() as u64).to_le_bytes())?;
    for v in &w.samples {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_bin<R: Read>(mut input: R) -> Result<Waveform> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < 32 || &buf[..8] != BINARY_MAGIC {
        return Err(Error::Format("missing PQGDRW01 header".into()));
    }
    let f = |i: usize| f64::from_le_bytes(buf[i..i + 8].try_into().expect("8 bytes"));
    let count = u64::from_le_bytes(buf[24..32].try_into().expect("8 bytes")) as usize;
    let body = &buf[32..];
    if body.len() != count.saturating_mul(8) {
        return Err(Error::Format(format!(
            "header declares {count} samples but {} bytes follow",
            body.len()
        )));
    }
    let samples = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: f(8),
        nominal_freq: f(16),
    })
}

/// Read a waveform, choosing the format by extension (`.bin` is binary,
/// anything else CSV).
pub fn read_waveform(path: &Path) -> Result<Waveform> {
    let file = fs::File::open(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => read_bin(file),
        _ => read_csv(file),
    }
}

pub fn write_waveform(path: &Path, w: &Waveform) -> Result<()> {
    let file = fs::File::create(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") => write_bin(w, file),
        _ => write_csv(w, file),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub label: ClassLabel,
    pub spec: DisturbanceSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub digest: String,
    pub sample_format: SampleFormat,
    pub config: DatasetConfig,
    pub entries: Vec<ManifestEntry>,
}

fn entry_file(i: usize, label: ClassLabel, format: SampleFormat) -> String {
    format!("w{i:05}_c{}.{}", label.code(), format.extension())
}

/// Write `manifest.json` and one sample file per entry into `dir`.
pub fn save_dataset(ds: &LabeledDataset, dir: &Path, format: SampleFormat) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(ds.len());
    for (i, e) in ds.entries.iter().enumerate() {
        let file = entry_file(i, e.label, format);
        let f = fs::File::create(dir.join(&file))?;
        match format {
            SampleFormat::Csv => write_csv(&e.waveform, f)?,
            SampleFormat::Bin => write_bin(&e.waveform, f)?,
        }
        entries.push(ManifestEntry {
            file,
            label: e.label,
            spec: e.spec.clone(),
        });
    }
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        digest: ds.digest.clone(),
        sample_format: format,
        config: ds.config.clone(),
        entries,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let bytes = fs::read(&path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let m: Manifest = serde_json::from_slice(&bytes)?;
    if m.manifest_version != MANIFEST_VERSION {
        return Err(Error::Data(format!(
            "manifest version {} is not supported",
            m.manifest_version
        )));
    }
    Ok(m)
}

/// Load a dataset directory. Labels must agree with their specs.
pub fn load_dataset(dir: &Path) -> Result<LabeledDataset> {
    let m = read_manifest(dir)?;
    let mut entries = Vec::with_capacity(m.entries.len());
    for e in m.entries {
        if e.label != e.spec.label {
            return Err(Error::Data(format!(
                "{}: label {} disagrees with spec label {}",
                e.file, e.label, e.spec.label
            )));
        }
        let waveform = read_waveform(&dir.join(&e.file))?;
        entries.push(DatasetEntry {
            label: e.label,
            spec: e.spec,
            waveform,
        });
    }
    Ok(LabeledDataset {
        config: m.config,
        digest: m.digest,
        entries,
    })
}

/// Rebuild every waveform of a manifest from its spec, without reading
/// sample files.
pub fn regenerate(manifest: &Manifest) -> Result<LabeledDataset> {
    let entries = manifest
        .entries
        .iter()
        .map(|e| {
            Ok(DatasetEntry {
                label: e.label,
                spec: e.spec.clone(),
                waveform: synthesize(&e.spec)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset {
        config: manifest.config.clone(),
        digest: manifest.digest.clone(),
        entries,
    })
}

/// Sample files of a dataset directory, in manifest order.
pub fn sample_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    Ok(read_manifest(dir)?
        .entries
        .iter()
        .map(|e| dir.join(&e.file))
        .collect())
}
