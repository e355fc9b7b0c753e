//! Per-customer feature rows built from transaction (T), time-frequency (TF)
//! and CRM feature groups.
//!
//! Canonical column order is T, then TF, then CRM:
//!
//! ```text
//! INCOMING_FUNDS, OUTGOING_FUNDS,
//! MEAN, VAR, SKEW, KURT, TSPAR, FSPAR, FTSPAR, TDISC, FDISC, FTDISC, ENTROPY,
//! AGE, CUSTOMER_AGE, IS_COMMERCIAL, GENDER=<g>..., RISK_GROUP=<r>..., OCCUPATION=<o>...
//! ```
//!
//! Categorical CRM fields are one-hot encoded against a vocabulary fitted on
//! the assembled customers; each vocabulary is sorted.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{CrmRecord, Horizon, TransactionSeries};
use crate::spectral::{Stft, StftConfig};
use crate::tffeatures::{extract_all, TfFeatures, FEATURE_NAMES};
use crate::{Error, Execution, Result};

pub const INCOMING_FUNDS: &str = "INCOMING_FUNDS";
pub const OUTGOING_FUNDS: &str = "OUTGOING_FUNDS";
pub const T_FEATURE_NAMES: [&str; 2] = [INCOMING_FUNDS, OUTGOING_FUNDS];
pub const CRM_NUMERIC_NAMES: [&str; 3] = ["AGE", "CUSTOMER_AGE", "IS_COMMERCIAL"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureGroup {
    T,
    Tf,
    Crm,
}

impl FeatureGroup {
    /// Group a column belongs to, judged by its name.
    pub fn of_name(name: &str) -> FeatureGroup {
        if T_FEATURE_NAMES.contains(&name) {
            FeatureGroup::T
        } else if FEATURE_NAMES.contains(&name) {
            FeatureGroup::Tf
        } else {
            FeatureGroup::Crm
        }
    }
}

/// One of the six feature-set experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    T,
    Tf,
    Crm,
    TCrm,
    TfCrm,
    TTfCrm,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 6] = [
        FeatureSet::T,
        FeatureSet::Tf,
        FeatureSet::Crm,
        FeatureSet::TCrm,
        FeatureSet::TfCrm,
        FeatureSet::TTfCrm,
    ];

    pub fn includes(self, group: FeatureGroup) -> bool {
        use FeatureGroup as G;
        use FeatureSet as S;
        matches!(
            (self, group),
            (S::T | S::TCrm | S::TTfCrm, G::T)
                | (S::Tf | S::TfCrm | S::TTfCrm, G::Tf)
                | (S::Crm | S::TCrm | S::TfCrm | S::TTfCrm, G::Crm)
        )
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::T => "T",
            FeatureSet::Tf => "TF",
            FeatureSet::Crm => "CRM",
            FeatureSet::TCrm => "T+CRM",
            FeatureSet::TfCrm => "TF+CRM",
            FeatureSet::TTfCrm => "T+TF+CRM",
        })
    }
}

impl FromStr for FeatureSet {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let normalized = s.trim().to_ascii_uppercase().replace(' ', "");
        FeatureSet::ALL
            .into_iter()
            .find(|fs| fs.to_string() == normalized)
            .ok_or_else(|| format!("unknown feature set {s:?} (expected T, TF, CRM, T+CRM, TF+CRM or T+TF+CRM)"))
    }
}

/// Gross incoming and outgoing totals.
pub fn transaction_features(series: &TransactionSeries) -> (f64, f64) {
    (series.gross_incoming, series.gross_outgoing)
}

/// Vocabularies for the one-hot encoded CRM fields.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CrmEncoding {
    pub gender: Vec<String>,
    pub risk_group: Vec<String>,
    pub occupation: Vec<String>,
}

impl CrmEncoding {
    pub fn fit<'a>(records: impl IntoIterator<Item = &'a CrmRecord>) -> Self {
        let mut gender = BTreeSet::new();
        let mut risk = BTreeSet::new();
        let mut occupation = BTreeSet::new();
        for r in records {
            gender.insert(r.gender.clone());
            risk.insert(r.risk_group.clone());
            occupation.insert(r.occupation.clone());
        }
        CrmEncoding {
            gender: gender.into_iter().collect(),
            risk_group: risk.into_iter().collect(),
            occupation: occupation.into_iter().collect(),
        }
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = CRM_NUMERIC_NAMES.iter().map(|s| s.to_string()).collect();
        names.extend(self.gender.iter().map(|v| format!("GENDER={v}")));
        names.extend(self.risk_group.iter().map(|v| format!("RISK_GROUP={v}")));
        names.extend(self.occupation.iter().map(|v| format!("OCCUPATION={v}")));
        names
    }

    /// Numeric sub-vector in [`column_names`](Self::column_names) order.
    /// Categories outside the vocabulary encode as all zeros.
    pub fn encode(&self, r: &CrmRecord) -> Vec<f64> {
        fn one_hot(out: &mut Vec<f64>, vocab: &[String], v: &str) {
            out.extend(vocab.iter().map(|c| if c == v { 1.0 } else { 0.0 }));
        }
        let mut out = vec![r.age, r.customer_age, if r.is_commercial { 1.0 } else { 0.0 }];
        one_hot(&mut out, &self.gender, &r.gender);
        one_hot(&mut out, &self.risk_group, &r.risk_group);
        one_hot(&mut out, &self.occupation, &r.occupation);
        out
    }
}

/// Named feature values for one customer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub customer_id: String,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn group_of(&self, index: usize) -> FeatureGroup {
        FeatureGroup::of_name(&self.names[index])
    }
}

/// Labelled rows sharing one column layout. Rows are sorted by customer id.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub feature_names: Vec<String>,
    pub customer_ids: Vec<String>,
    pub labels: Vec<u8>,
    /// Row-major feature values.
    pub rows: Vec<Vec<f64>>,
    pub encoding: Option<CrmEncoding>,
}

impl LabeledDataset {
    pub fn new(
        feature_names: Vec<String>,
        customer_ids: Vec<String>,
        labels: Vec<u8>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let d = feature_names.len();
        if customer_ids.len() != rows.len() || labels.len() != rows.len() {
            return Err(Error::Config("dataset columns have different lengths".into()));
        }
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Config("row width does not match feature names".into()));
        }
        if labels.iter().any(|l| *l > 1) {
            return Err(Error::Config("labels must be 0 or 1".into()));
        }
        let mut seen = BTreeSet::new();
        if let Some(dup) = feature_names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Config(format!("duplicate feature name {dup}")));
        }
        if let Some(v) = rows.iter().flatten().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("non-finite feature value {v}")));
        }
        Ok(LabeledDataset {
            feature_names,
            customer_ids,
            labels,
            rows,
            encoding: None,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn groups(&self) -> Vec<FeatureGroup> {
        self.feature_names.iter().map(|n| FeatureGroup::of_name(n)).collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    /// (negatives, positives)
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|l| **l == 1).count();
        (self.labels.len() - pos, pos)
    }

    pub fn has_both_classes(&self) -> bool {
        let (neg, pos) = self.class_counts();
        neg > 0 && pos > 0
    }

    pub fn row_vector(&self, i: usize) -> FeatureVector {
        FeatureVector {
            customer_id: self.customer_ids[i].clone(),
            names: self.feature_names.clone(),
            values: self.rows[i].clone(),
        }
    }

    /// Rows at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            feature_names: self.feature_names.clone(),
            customer_ids: indices.iter().map(|&i| self.customer_ids[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            encoding: self.encoding.clone(),
        }
    }

    /// Keeps only the columns belonging to `set`.
    pub fn select(&self, set: FeatureSet) -> LabeledDataset {
        let keep: Vec<usize> = (0..self.n_features())
            .filter(|&j| set.includes(FeatureGroup::of_name(&self.feature_names[j])))
            .collect();
        LabeledDataset {
            feature_names: keep.iter().map(|&j| self.feature_names[j].clone()).collect(),
            customer_ids: self.customer_ids.clone(),
            labels: self.labels.clone(),
            rows: self.rows.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect(),
            encoding: if set.includes(FeatureGroup::Crm) { self.encoding.clone() } else { None },
        }
    }

    /// `customer_id,label,<features>`; floats use shortest round-trip form.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["customer_id".to_string(), "label".to_string()];
        header.extend(self.feature_names.iter().cloned());
        wtr.write_record(&header)?;
        let mut rec = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            rec.clear();
            rec.push(self.customer_ids[i].clone());
            rec.push(self.labels[i].to_string());
            rec.extend(self.rows[i].iter().map(f64::to_string));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| Error::io("<features>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(BufWriter::new(file))
    }

    pub fn read_csv<R: Read>(r: R, name: &str) -> Result<LabeledDataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "customer_id" || &header[1] != "label" {
            return Err(Error::Parse {
                path: name.into(),
                line: 1,
                msg: "features file must start with customer_id,label".into(),
            });
        }
        let names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
        let (mut ids, mut labels, mut rows) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |msg: String| Error::Parse {
                path: name.into(),
                line,
                msg,
            };
            ids.push(rec[0].to_string());
            labels.push(match &rec[1] {
                "0" => 0,
                "1" => 1,
                other => return Err(bad(format!("label must be 0 or 1, found {other:?}"))),
            });
            let row = rec
                .iter()
                .skip(2)
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("invalid number {v:?}"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        LabeledDataset::new(names, ids, labels, rows)
    }

    pub fn load_csv(path: &Path) -> Result<LabeledDataset> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file, &path.display().to_string())
    }
}

#[derive(Debug, Clone)]
pub struct AssembleOptions {
    pub horizon: Horizon,
    pub stft: StftConfig,
    pub execution: Execution,
}

/// Customers left out of an assembly, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssemblyReport {
    pub rows: usize,
    /// Labelled customers without a complete CRM row.
    pub dropped_missing_crm: usize,
    /// Customers with transactions or CRM data but no label.
    pub dropped_unlabelled: usize,
    /// Rows built from an all-zero series (customer listed in CRM only).
    pub zero_activity: usize,
}

/// Time-frequency features for every series.
pub fn tf_features(
    series: &BTreeMap<String, TransactionSeries>,
    cfg: &StftConfig,
    exec: Execution,
) -> Result<BTreeMap<String, TfFeatures>> {
    let stft = Stft::new(*cfg)?;
    let entries: Vec<(&String, &TransactionSeries)> = series.iter().collect();
    let computed = exec.map_slice(&entries, |(_, s)| stft.transform(&s.values).map(|sp| extract_all(&sp)));
    entries
        .into_iter()
        .zip(computed)
        .map(|((id, _), f)| f.map(|f| (id.clone(), f)))
        .collect()
}

/// Builds the labelled dataset for `set`.
///
/// The customer universe is every labelled customer with a complete CRM row,
/// independent of `set`. Such customers without transactions get an all-zero
/// series.
pub fn assemble(
    set: FeatureSet,
    series: &BTreeMap<String, TransactionSeries>,
    crm: &BTreeMap<String, CrmRecord>,
    labels: &BTreeMap<String, u8>,
    opts: &AssembleOptions,
) -> Result<(LabeledDataset, AssemblyReport)> {
    let mut report = AssemblyReport::default();
    let customers: Vec<&String> = labels.keys().filter(|id| crm.contains_key(*id)).collect();
    report.dropped_missing_crm = labels.len() - customers.len();
    report.dropped_unlabelled = series
        .keys()
        .chain(crm.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|id| !labels.contains_key(*id))
        .count();
    if customers.is_empty() {
        return Err(Error::EmptyIntersection);
    }

    let mut zero_series = BTreeMap::new();
    for id in &customers {
        if !series.contains_key(*id) {
            zero_series.insert((*id).clone(), TransactionSeries::zeros(id.as_str(), &opts.horizon));
        }
    }
    report.zero_activity = zero_series.len();
    let series_of = |id: &str| series.get(id).or_else(|| zero_series.get(id)).unwrap();

    let encoding = CrmEncoding::fit(customers.iter().map(|id| &crm[*id]));
    let mut names: Vec<String> = Vec::new();
    if set.includes(FeatureGroup::T) {
        names.extend(T_FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    if set.includes(FeatureGroup::Tf) {
        names.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    }
    if set.includes(FeatureGroup::Crm) {
        names.extend(encoding.column_names());
    }

    let tf = if set.includes(FeatureGroup::Tf) {
        let stft = Stft::new(opts.stft)?;
        let computed = opts.execution.map_slice(&customers, |id| {
            stft.transform(&series_of(id).values).map(|s| extract_all(&s))
        });
        computed.into_iter().collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let mut rows = Vec::with_capacity(customers.len());
    for (i, id) in customers.iter().enumerate() {
        let mut row = Vec::with_capacity(names.len());
        if set.includes(FeatureGroup::T) {
            let (incoming, outgoing) = transaction_features(series_of(id));
            row.extend([incoming, outgoing]);
        }
        if set.includes(FeatureGroup::Tf) {
            row.extend(tf[i].to_array());
        }
        if set.includes(FeatureGroup::Crm) {
            row.extend(encoding.encode(&crm[*id]));
        }
        rows.push(row);
    }
    report.rows = rows.len();
    let mut ds = LabeledDataset::new(
        names,
        customers.iter().map(|s| s.to_string()).collect(),
        customers.iter().map(|id| labels[*id]).collect(),
        rows,
    )?;
    if set.includes(FeatureGroup::Crm) {
        ds.encoding = Some(encoding);
    }
    Ok((ds, report))
}
