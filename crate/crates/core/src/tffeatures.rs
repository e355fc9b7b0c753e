//! The eleven scalar time-frequency features of a spectrogram.
//!
//! Moments act on the raw magnitudes; sparsity, discontinuity and entropy
//! act on normalized quantities and are therefore scale free. Degenerate
//! inputs (zero variance, all-zero matrices, single-row or single-column
//! axes) map to 0 so every feature is defined for every spectrogram.

use serde::{Deserialize, Serialize};

use crate::spectral::{normalize, Spectrogram};

/// Column names, in canonical order.
pub const FEATURE_NAMES: [&str; 11] = [
    "MEAN", "VAR", "SKEW", "KURT", "TSPAR", "FSPAR", "FTSPAR", "TDISC", "FDISC", "FTDISC",
    "ENTROPY",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TfFeatures {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Pearson (non-excess) kurtosis.
    pub kurtosis: f64,
    pub tspar: f64,
    pub fspar: f64,
    pub ftspar: f64,
    pub tdisc: f64,
    pub fdisc: f64,
    pub ftdisc: f64,
    pub entropy: f64,
}

impl TfFeatures {
    /// Values in [`FEATURE_NAMES`] order.
    pub fn to_array(&self) -> [f64; 11] {
        [
            self.mean,
            self.variance,
            self.skewness,
            self.kurtosis,
            self.tspar,
            self.fspar,
            self.ftspar,
            self.tdisc,
            self.fdisc,
            self.ftdisc,
            self.entropy,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
}

/// Single-pass accumulation of the first four central moments.
#[derive(Debug, Default, Clone, Copy)]
struct MomentAccumulator {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl MomentAccumulator {
    fn push(&mut self, x: f64) {
        let n1 = self.n;
        self.n += 1.0;
        let n = self.n;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }
}

/// Mean, population variance, skewness and Pearson kurtosis of all entries.
pub fn moments(spec: &Spectrogram) -> Moments {
    moments_of(spec.values())
}

pub fn moments_of(values: &[f64]) -> Moments {
    if values.is_empty() {
        return Moments {
            mean: 0.0,
            variance: 0.0,
            skewness: 0.0,
            kurtosis: 0.0,
        };
    }
    let mut acc = MomentAccumulator::default();
    values.iter().for_each(|&v| acc.push(v));
    let n = acc.n;
    let m2 = acc.m2 / n;
    let (skewness, kurtosis) = if m2 > 0.0 {
        let m3 = acc.m3 / n;
        let m4 = acc.m4 / n;
        (m3 / m2.powf(1.5), m4 / (m2 * m2))
    } else {
        (0.0, 0.0)
    };
    Moments {
        mean: acc.mean,
        variance: m2.max(0.0),
        skewness,
        kurtosis,
    }
}

/// Hoyer sparsity `(√n − ‖v‖₁/‖v‖₂)/(√n − 1)`, in [0, 1].
///
/// Zero vectors and single-element vectors have sparsity 0.
pub fn hoyer(v: &[f64]) -> f64 {
    let n = v.len();
    if n < 2 {
        return 0.0;
    }
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    let l2 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if l2 == 0.0 {
        return 0.0;
    }
    let sqrt_n = (n as f64).sqrt();
    ((sqrt_n - l1 / l2) / (sqrt_n - 1.0)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sparsity {
    pub tspar: f64,
    pub fspar: f64,
    pub ftspar: f64,
}

/// Hoyer sparsity of the time marginal, the frequency marginal and the
/// flattened matrix.
pub fn sparsity(spec: &Spectrogram) -> Sparsity {
    let time_marginal: Vec<f64> = spec.rows().map(|r| r.iter().sum()).collect();
    let mut freq_marginal = vec![0.0; spec.bins()];
    for row in spec.rows() {
        for (acc, v) in freq_marginal.iter_mut().zip(row) {
            *acc += v;
        }
    }
    Sparsity {
        tspar: hoyer(&time_marginal),
        fspar: hoyer(&freq_marginal),
        ftspar: hoyer(spec.values()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discontinuity {
    pub tdisc: f64,
    pub fdisc: f64,
    pub ftdisc: f64,
}

/// Mean squared forward differences of the unit-energy normalized matrix
/// along time, along frequency, and both combined over the interior.
pub fn discontinuity(spec: &Spectrogram) -> Discontinuity {
    let s = normalize(spec).spec;
    let (m_len, k_len) = (s.frames(), s.bins());
    let mut t_sum = 0.0;
    let mut f_sum = 0.0;
    let mut tf_sum = 0.0;
    for m in 0..m_len {
        for k in 0..k_len {
            let here = s.get(m, k);
            let dt = (m + 1 < m_len).then(|| s.get(m + 1, k) - here);
            let df = (k + 1 < k_len).then(|| s.get(m, k + 1) - here);
            if let Some(dt) = dt {
                t_sum += dt * dt;
            }
            if let Some(df) = df {
                f_sum += df * df;
            }
            if let (Some(dt), Some(df)) = (dt, df) {
                tf_sum += dt * dt + df * df;
            }
        }
    }
    let mean = |sum: f64, count: usize| if count == 0 { 0.0 } else { sum / count as f64 };
    let m1 = m_len.saturating_sub(1);
    let k1 = k_len.saturating_sub(1);
    Discontinuity {
        tdisc: mean(t_sum, m1 * k_len),
        fdisc: mean(f_sum, m_len * k1),
        ftdisc: mean(tf_sum, m1 * k1),
    }
}

/// Shannon entropy of the normalized magnitudes divided by `log2(MK)`.
pub fn entropy(spec: &Spectrogram) -> f64 {
    let n = spec.values().len();
    let normalized = normalize(spec);
    if normalized.degenerate || n < 2 {
        return 0.0;
    }
    let h: f64 = normalized
        .spec
        .values()
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.log2())
        .sum();
    (h / (n as f64).log2()).clamp(0.0, 1.0)
}

pub fn extract_all(spec: &Spectrogram) -> TfFeatures {
    let m = moments(spec);
    let s = sparsity(spec);
    let d = discontinuity(spec);
    TfFeatures {
        mean: m.mean,
        variance: m.variance,
        skewness: m.skewness,
        kurtosis: m.kurtosis,
        tspar: s.tspar,
        fspar: s.fspar,
        ftspar: s.ftspar,
        tdisc: d.tdisc,
        fdisc: d.fdisc,
        ftdisc: d.ftdisc,
        entropy: entropy(spec),
    }
}
