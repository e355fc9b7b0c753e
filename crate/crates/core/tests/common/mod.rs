//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfaml::dataset::LabeledDataset;
use tfaml::eval::ConfusionMatrix;
use tfaml::spectral::StftConfig;

/// STFT magnitudes by direct summation, frame by frame.
pub fn dft_magnitudes(signal: &[f64], cfg: &StftConfig) -> Vec<Vec<f64>> {
    let w = cfg.window_fn.coefficients(cfg.window_len);
    let l = cfg.fft_len;
    let frames = (signal.len() - cfg.window_len) / cfg.hop + 1;
    (0..frames)
        .map(|m| {
            (0..=l / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for n in 0..cfg.window_len {
                        let x = signal[m * cfg.hop + n] * w[n];
                        let phase = 2.0 * std::f64::consts::PI * ((k * n) % l) as f64 / l as f64;
                        re += x * phase.cos();
                        im -= x * phase.sin();
                    }
                    re.hypot(im)
                })
                .collect()
        })
        .collect()
}

/// Mean, population variance, skewness and Pearson kurtosis in two passes.
pub fn two_pass_moments(v: &[f64]) -> [f64; 4] {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let central = |p: i32| v.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n;
    let (m2, m3, m4) = (central(2), central(3), central(4));
    if m2 == 0.0 {
        [mean, 0.0, 0.0, 0.0]
    } else {
        [mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2)]
    }
}

/// Probability that a random positive outscores a random negative, ties 1/2.
pub fn mann_whitney(scores: &[f64], labels: &[u8]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == 1).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, l)| **l == 0).map(|(s, _)| *s).collect();
    let mut twice_wins = 0u64;
    for p in &pos {
        for q in &neg {
            twice_wins += if p > q {
                2
            } else if p == q {
                1
            } else {
                0
            };
        }
    }
    twice_wins as f64 / (2 * pos.len() * neg.len()) as f64
}

pub fn cohens_d(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let (ma, mb) = (mean(a), mean(b));
    let pooled = (((a.len() - 1) as f64 * var(a, ma) + (b.len() - 1) as f64 * var(b, mb))
        / (a.len() + b.len() - 2) as f64)
        .sqrt();
    (ma - mb) / pooled
}

/// A reference confusion matrix with its reported rates in percent.
pub struct ReferenceRates {
    pub set: &'static str,
    pub cm: ConfusionMatrix,
    pub fpr: f64,
    pub fnr: f64,
    pub accuracy: f64,
}

const fn cm(tn: u64, fp: u64, r#fn: u64, tp: u64) -> ConfusionMatrix {
    ConfusionMatrix { tp, fp, tn, r#fn }
}

pub const REFERENCE: [ReferenceRates; 6] = [
    ReferenceRates { set: "T", cm: cm(3350, 1385, 569, 1376), fpr: 29.25, fnr: 29.25, accuracy: 70.75 },
    ReferenceRates { set: "TF", cm: cm(3921, 814, 832, 1113), fpr: 17.19, fnr: 42.78, accuracy: 75.36 },
    ReferenceRates { set: "CRM", cm: cm(3594, 1141, 449, 1496), fpr: 24.10, fnr: 23.08, accuracy: 76.20 },
    ReferenceRates { set: "T+CRM", cm: cm(3827, 908, 438, 1507), fpr: 19.18, fnr: 22.52, accuracy: 79.85 },
    ReferenceRates { set: "TF+CRM", cm: cm(4218, 516, 564, 1381), fpr: 10.90, fnr: 29.00, accuracy: 83.83 },
    ReferenceRates { set: "T+TF+CRM", cm: cm(4196, 566, 507, 1438), fpr: 11.89, fnr: 26.07, accuracy: 84.00 },
];

/// Two Gaussian blobs on `x0`/`x1`, four standard-normal noise columns.
pub fn separable(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 {
        // Box-Muller keeps the oracle free of the library's sampling code.
        let u: f64 = 1.0 - rng.random::<f64>();
        let v: f64 = rng.random();
        (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
    };
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 2 == 1)).collect();
    let rows = labels
        .iter()
        .map(|&y| {
            let shift = if y == 1 { 2.5 } else { -2.5 };
            let mut row = vec![shift + normal(), shift + normal()];
            row.extend((0..4).map(|_| normal()));
            row
        })
        .collect();
    LabeledDataset::new(
        ["x0", "x1", "n0", "n1", "n2", "n3"].iter().map(|s| s.to_string()).collect(),
        (0..n).map(|i| format!("r{i:05}")).collect(),
        labels,
        rows,
    )
    .unwrap()
}

/// `data` with its labels shuffled.
pub fn permute_labels(data: &LabeledDataset, seed: u64) -> LabeledDataset {
    use rand::seq::SliceRandom;
    let mut labels = data.labels.clone();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    LabeledDataset::new(data.feature_names.clone(), data.customer_ids.clone(), labels, data.rows.clone()).unwrap()
}

pub fn random_series(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1000.0..1000.0)).collect()
}
