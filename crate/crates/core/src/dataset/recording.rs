use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scenario and provenance metadata carried with every recording and
/// written to the `.meta.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RecordingMeta {
    pub scenario: usize,
    /// Measurement round label, e.g. "A" or "B".
    pub round: String,
    /// Damaged element indices (empty for the intact structure).
    pub damaged: Vec<usize>,
    /// Stiffness reduction applied to each damaged element.
    pub reduction: f64,
    pub fs: f64,
    pub seed: u64,
    /// SNR of added measurement noise, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
}

/// Multi-channel acceleration record at a fixed sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    channels: Vec<Vec<f64>>,
    pub meta: RecordingMeta,
}

impl Recording {
    pub fn new(channels: Vec<Vec<f64>>, meta: RecordingMeta) -> Result<Self> {
        if channels.is_empty() || channels[0].is_empty() {
            return Err(Error::InvalidShape(
                "recording needs at least one sample".into(),
            ));
        }
        let len = channels[0].len();
        if let Some(c) = channels.iter().position(|c| c.len() != len) {
            return Err(Error::InvalidShape(format!(
                "channel {c} has {} samples, channel 0 has {len}",
                channels[c].len()
            )));
        }
        if !(meta.fs > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "fs must be > 0, got {}",
                meta.fs
            )));
        }
        Ok(Recording { channels, meta })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn fs(&self) -> f64 {
        self.meta.fs
    }

    pub fn damages(&self, element: usize) -> bool {
        self.meta.damaged.contains(&element)
    }

    /// Samples `[start, end)` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> Result<Recording> {
        if start >= end || end > self.samples() {
            return Err(Error::InvalidParameter(format!(
                "sample range {start}..{end} outside 0..{}",
                self.samples()
            )));
        }
        Recording::new(
            self.channels
                .iter()
                .map(|c| c[start..end].to_vec())
                .collect(),
            self.meta.clone(),
        )
    }

    /// Leading `fraction` of the samples.
    pub fn head_fraction(&self, fraction: f64) -> Result<Recording> {
        let end = (self.samples() as f64 * fraction).floor() as usize;
        self.slice(0, end)
    }
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Writes `t,ch0,ch1,...` rows plus the JSON sidecar. Values use Rust's
/// shortest round-trip float formatting, so reading back is exact.
pub fn write_recording(rec: &Recording, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let mut header = String::from("t");
    for c in 0..rec.channel_count() {
        header.push_str(&format!(",ch{c}"));
    }
    writeln!(w, "{header}").map_err(io)?;
    let mut line = String::new();
    for k in 0..rec.samples() {
        line.clear();
        line.push_str(&(k as f64 / rec.fs()).to_string());
        for ch in &rec.channels {
            line.push(',');
            line.push_str(&ch[k].to_string());
        }
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    let meta_path = sidecar_path(path);
    let json = serde_json::to_string_pretty(&rec.meta).expect("metadata serializes");
    std::fs::write(&meta_path, json + "\n").map_err(|e| Error::io(&meta_path, e))
}

/// Reads a recording written by [`write_recording`] (or any CSV of the same
/// shape with a sidecar).
pub fn load_recording(path: &Path) -> Result<Recording> {
    let meta_path = sidecar_path(path);
    let meta_text = match std::fs::read_to_string(&meta_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::Parse {
                path: meta_path,
                line: 0,
                reason: "metadata sidecar is missing".into(),
            })
        }
        Err(e) => return Err(Error::io(&meta_path, e)),
    };
    let meta: RecordingMeta = serde_json::from_str(&meta_text).map_err(|e| Error::Parse {
        path: meta_path.clone(),
        line: e.line() as u64,
        reason: e.to_string(),
    })?;

    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(std::io::BufReader::with_capacity(1 << 20, file));
    let parse_err = |line: u64, reason: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let header = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.len() < 2 || &header[0] != "t" {
        return Err(parse_err(
            1,
            format!("expected header 't,ch0,...', got {header:?}"),
        ));
    }
    let n_ch = header.len() - 1;
    let mut channels = vec![Vec::new(); n_ch];
    let mut record = csv::StringRecord::new();
    loop {
        match reader.read_record(&mut record) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                let reason = match e.kind() {
                    csv::ErrorKind::UnequalLengths {
                        expected_len, len, ..
                    } => {
                        format!("row has {len} fields, expected {expected_len}")
                    }
                    _ => e.to_string(),
                };
                return Err(parse_err(line, reason));
            }
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        for (c, cell) in record.iter().skip(1).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_err(
                    line,
                    format!("non-numeric cell '{cell}' in column {}", c + 1),
                )
            })?;
            channels[c].push(v);
        }
    }
    if channels[0].is_empty() {
        return Err(parse_err(2, "no samples".into()));
    }
    Recording::new(channels, meta)
}
