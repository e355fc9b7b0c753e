//! Sliding-window short-time Fourier transform of a daily transaction series.
//!
//! Frame `m` covers days `m*hop .. m*hop + window_len`. Each frame is
//! multiplied by the window function, zero-padded to `fft_len`, transformed,
//! and the magnitudes of the one-sided spectrum (`fft_len/2 + 1` bins) are
//! kept.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::ingest::TransactionSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowFn {
    #[default]
    Rectangular,
    Hann,
}

impl WindowFn {
    /// Window coefficients of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowFn::Rectangular => vec![1.0; len],
            WindowFn::Hann if len == 1 => vec![1.0],
            WindowFn::Hann => {
                let denom = (len - 1) as f64;
                (0..len)
                    .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / denom).cos())
                    .collect()
            }
        }
    }
}

impl FromStr for WindowFn {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "rectangular" | "rect" => Ok(WindowFn::Rectangular),
            "hann" => Ok(WindowFn::Hann),
            _ => Err(format!("unknown window function {s:?}")),
        }
    }
}

impl fmt::Display for WindowFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowFn::Rectangular => "rectangular",
            WindowFn::Hann => "hann",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    /// Window length in days.
    pub window_len: usize,
    /// Shift between consecutive frames in days.
    pub hop: usize,
    /// Transform length; frames are zero-padded up to it.
    pub fft_len: usize,
    pub window_fn: WindowFn,
}

impl Default for StftConfig {
    fn default() -> Self {
        StftConfig {
            window_len: 90,
            hop: 1,
            fft_len: 128,
            window_fn: WindowFn::Rectangular,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 {
            return Err(Error::Config("window length must be at least 1".into()));
        }
        if self.hop == 0 {
            return Err(Error::Config("hop must be at least 1".into()));
        }
        if self.fft_len < self.window_len {
            return Err(Error::Config(format!(
                "fft_len {} is shorter than the window {}",
                self.fft_len, self.window_len
            )));
        }
        Ok(())
    }

    /// Number of frames for a series of `n` samples (zero if `n < W`).
    pub fn frames(&self, n: usize) -> usize {
        if n < self.window_len {
            0
        } else {
            (n - self.window_len) / self.hop + 1
        }
    }

    /// Number of one-sided frequency bins.
    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }
}

/// Frames × bins matrix of nonnegative magnitudes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    frames: usize,
    bins: usize,
    mag: Vec<f64>,
}

impl Spectrogram {
    pub fn new(frames: usize, bins: usize, mag: Vec<f64>) -> Result<Self> {
        if mag.len() != frames * bins {
            return Err(Error::Config(format!(
                "spectrogram data has {} entries, expected {frames}x{bins}",
                mag.len()
            )));
        }
        if let Some(v) = mag.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Config(format!(
                "spectrogram entries must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Spectrogram { frames, bins, mag })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let bins = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != bins) {
            return Err(Error::Config("ragged spectrogram rows".into()));
        }
        Self::new(rows.len(), bins, rows.concat())
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.mag[frame * self.bins + bin]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.mag[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.mag.chunks(self.bins.max(1)).take(self.frames)
    }

    /// All magnitudes, frame-major.
    pub fn values(&self) -> &[f64] {
        &self.mag
    }

    pub fn is_empty(&self) -> bool {
        self.mag.is_empty()
    }

    pub fn transpose(&self) -> Spectrogram {
        let mut mag = Vec::with_capacity(self.mag.len());
        for k in 0..self.bins {
            for m in 0..self.frames {
                mag.push(self.get(m, k));
            }
        }
        Spectrogram {
            frames: self.bins,
            bins: self.frames,
            mag,
        }
    }

    pub fn scaled(&self, a: f64) -> Spectrogram {
        Spectrogram {
            frames: self.frames,
            bins: self.bins,
            mag: self.mag.iter().map(|v| v * a).collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.mag.iter().sum()
    }
}

/// A spectrogram scaled so its entries sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub spec: Spectrogram,
    /// Set when the input had no energy; `spec` is then all zeros.
    pub degenerate: bool,
}

/// Global unit-energy normalization.
pub fn normalize(spec: &Spectrogram) -> Normalized {
    let total = spec.total();
    if total > 0.0 && total.is_finite() {
        Normalized {
            spec: spec.scaled(1.0 / total),
            degenerate: false,
        }
    } else {
        Normalized {
            spec: Spectrogram {
                frames: spec.frames,
                bins: spec.bins,
                mag: vec![0.0; spec.mag.len()],
            },
            degenerate: true,
        }
    }
}

/// Reusable transform for one configuration.
#[derive(Clone)]
pub struct Stft {
    cfg: StftConfig,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Stft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Stft").field("cfg", &self.cfg).finish()
    }
}

impl Stft {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_len);
        Ok(Stft {
            window: cfg.window_fn.coefficients(cfg.window_len),
            cfg,
            fft,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }

    pub fn transform(&self, signal: &[f64]) -> Result<Spectrogram> {
        let cfg = &self.cfg;
        if signal.len() < cfg.window_len {
            return Err(Error::SeriesTooShort {
                len: signal.len(),
                window: cfg.window_len,
            });
        }
        let frames = cfg.frames(signal.len());
        let bins = cfg.bins();
        let mut mag = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_len];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for m in 0..frames {
            let start = m * cfg.hop;
            let frame = &signal[start..start + cfg.window_len];
            for (slot, (x, w)) in buf.iter_mut().zip(frame.iter().zip(&self.window)) {
                *slot = Complex::new(x * w, 0.0);
            }
            buf[cfg.window_len..].fill(Complex::new(0.0, 0.0));
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            mag.extend(buf[..bins].iter().map(|c| c.norm()));
        }
        Ok(Spectrogram { frames, bins, mag })
    }
}

/// Spectrogram of one customer's daily series.
pub fn stft(series: &TransactionSeries, cfg: &StftConfig) -> Result<Spectrogram> {
    Stft::new(*cfg)?.transform(&series.values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Pgm,
}

impl FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "pgm" => Ok(ExportFormat::Pgm),
            _ => Err(format!("unknown spectrogram format {s:?}")),
        }
    }
}

impl fmt::Display for ExportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Pgm => "pgm",
        })
    }
}

/// CSV: header `bin_0,...,bin_{K-1}`, then one row per frame, oldest first.
pub fn write_csv<W: Write>(spec: &Spectrogram, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record((0..spec.bins).map(|k| format!("bin_{k}")))?;
    for row in spec.rows() {
        wtr.write_record(row.iter().map(f64::to_string))?;
    }
    wtr.flush().map_err(|e| Error::io("<spectrogram>", e))?;
    Ok(())
}

/// Binary P5 graymap, width = bins, height = frames, max magnitude → 255.
pub fn write_pgm<W: Write>(spec: &Spectrogram, mut w: W) -> std::io::Result<()> {
    let max = spec.mag.iter().copied().fold(0.0_f64, f64::max);
    write!(w, "P5\n{} {}\n255\n", spec.bins, spec.frames)?;
    let pixels: Vec<u8> = spec
        .mag
        .iter()
        .map(|v| if max > 0.0 { (v / max * 255.0).round() as u8 } else { 0 })
        .collect();
    w.write_all(&pixels)?;
    w.flush()
}

pub fn export_spectrogram(spec: &Spectrogram, path: &Path, format: ExportFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let w = BufWriter::new(file);
    match format {
        ExportFormat::Csv => write_csv(spec, w).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        }),
        ExportFormat::Pgm => write_pgm(spec, w).map_err(|e| Error::io(path, e)),
    }
}
