//! Threshold metrics, ROC/AUC and mutual-information feature ranking.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::{Error, Execution, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MI_BINS: usize = 16;

/// Positive iff `score > threshold`; a score equal to the threshold is negative.
pub fn predict(score: f64, threshold: f64) -> bool {
    score > threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    pub r#fn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.r#fn
    }
}

pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> ConfusionMatrix {
    assert_eq!(scores.len(), labels.len(), "scores and labels differ in length");
    let mut cm = ConfusionMatrix::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (predict(s, threshold), y == 1) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, false) => cm.tn += 1,
            (false, true) => cm.r#fn += 1,
        }
    }
    cm
}

/// FPR = FP/(FP+TN), FNR = FN/(FN+TP), Acc = (TP+TN)/total.
///
/// A ratio whose denominator is zero is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub fpr: Option<f64>,
    pub fnr: Option<f64>,
    pub accuracy: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn rates(cm: &ConfusionMatrix) -> Rates {
    Rates {
        fpr: ratio(cm.fp, cm.fp + cm.tn),
        fnr: ratio(cm.r#fn, cm.r#fn + cm.tp),
        accuracy: ratio(cm.tp + cm.tn, cm.total()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Rows with `score >= threshold` are called positive at this point.
    /// The first point uses `+inf`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve swept over every distinct score, with trapezoidal AUC.
///
/// Ties between a positive and a negative contribute a diagonal segment, so
/// the area equals the Mann-Whitney statistic with ties counted as one half.
/// The area is accumulated in integers and divided once, which makes equal
/// areas compare equal bit for bit.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Config("scores and labels differ in length".into()));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Config(format!("score {s} is not comparable")));
    }
    let pos = labels.iter().filter(|l| **l == 1).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    // twice the area, in units of 1/(pos*neg)
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - prev_fp) as u128 * (tp + prev_tp) as u128;
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let auc = area2 as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok(RocCurve { points, auc })
}

pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    roc_auc(scores, labels).map(|r| r.auc)
}

pub fn write_roc_csv<W: Write>(roc: &RocCurve, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["threshold", "fpr", "tpr"])?;
    for p in &roc.points {
        wtr.write_record([p.threshold.to_string(), p.fpr.to_string(), p.tpr.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("<roc>", e))?;
    Ok(())
}

/// Equal-frequency bin index per value, at most `bins` bins.
///
/// Values are ranked; rank `r` maps to bin `floor(r * bins / n)`, and all
/// copies of a value share the bin of its first occurrence, so fewer bins
/// result when values repeat.
pub fn equal_frequency_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let bins = bins.max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0; n];
    let mut current_bin = 0;
    for (rank, &idx) in order.iter().enumerate() {
        if rank == 0 || values[idx] != values[order[rank - 1]] {
            current_bin = rank * bins / n;
        }
        out[idx] = current_bin;
    }
    out
}

/// Plug-in mutual information (nats) between a feature column and binary
/// labels after equal-frequency discretization.
pub fn mutual_information(x: &[f64], labels: &[u8], bins: usize) -> Result<f64> {
    if x.len() != labels.len() {
        return Err(Error::Config("feature and labels differ in length".into()));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("non-finite feature value {v}")));
    }
    if x.is_empty() || x.iter().all(|v| *v == x[0]) {
        return Ok(0.0);
    }
    let n = x.len() as u64;
    let assignment = equal_frequency_bins(x, bins);
    let n_bins = assignment.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![[0u64; 2]; n_bins];
    for (&b, &y) in assignment.iter().zip(labels) {
        joint[b][usize::from(y == 1)] += 1;
    }
    let label_counts = [
        joint.iter().map(|c| c[0]).sum::<u64>(),
        joint.iter().map(|c| c[1]).sum::<u64>(),
    ];
    let mut mi = 0.0;
    for cell in &joint {
        let bin_count = cell[0] + cell[1];
        for y in 0..2 {
            let c = cell[y];
            if c == 0 {
                continue;
            }
            let ratio = (c * n) as f64 / (bin_count * label_counts[y]) as f64;
            mi += c as f64 / n as f64 * ratio.ln();
        }
    }
    Ok(mi.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiEntry {
    pub feature: String,
    pub mi: f64,
}

/// Features sorted by descending mutual information with the label; ties
/// are ordered by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiRanking {
    pub entries: Vec<MiEntry>,
}

impl MiRanking {
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.feature == feature)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["rank", "feature", "mi"])?;
        for (i, e) in self.entries.iter().enumerate() {
            wtr.write_record([(i + 1).to_string(), e.feature.clone(), e.mi.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<importance>", e))?;
        Ok(())
    }
}

pub fn rank_features(data: &LabeledDataset, bins: usize, exec: Execution) -> Result<MiRanking> {
    let mis = exec.map_indexed(data.n_features(), |j| {
        mutual_information(&data.column(j), &data.labels, bins)
    });
    let mut entries = data
        .feature_names
        .iter()
        .zip(mis)
        .map(|(name, mi)| {
            mi.map(|mi| MiEntry {
                feature: name.clone(),
                mi,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| b.mi.total_cmp(&a.mi).then_with(|| a.feature.cmp(&b.feature)));
    Ok(MiRanking { entries })
}

/// Everything `evaluate` reports for one scored dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: usize,
    pub threshold: f64,
    pub confusion: ConfusionMatrix,
    pub rates: Rates,
    pub roc: RocCurve,
}

impl EvalReport {
    pub fn build(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        let cm = confusion(scores, labels, threshold);
        Ok(EvalReport {
            rows: scores.len(),
            threshold,
            confusion: cm,
            rates: rates(&cm),
            roc: roc_auc(scores, labels)?,
        })
    }

    /// Pretty JSON; the `+inf` ROC threshold is written as `null`.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
