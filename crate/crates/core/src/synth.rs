//! Seeded generator of labelled synthetic customers.
//!
//! Normal customers follow a salaried routine: salary on the 15th, rent on
//! the 1st, small card spending on most days, and for some customers extra
//! irregular income and bills. Suspicious customers follow one of three
//! archetypes:
//!
//! * behaviour change: the normal routine until a changepoint drawn from
//!   days 60..=120, then dense in/out bursts;
//! * smurfing: near-periodic cycles of many small deposits, each followed by
//!   one large outflow;
//! * pass-through: near-equal incoming/outgoing pairs 0-2 days apart at an
//!   irregular rate.
//!
//! CRM attributes are drawn from label-dependent distributions (see
//! [`CrmProfile`]) so that CRM data alone is informative but imperfect.
//!
//! Customer `i` draws from its own ChaCha stream, so customers can be
//! generated in parallel with identical output.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{
    aggregate_daily, write_crm, write_labels, write_transactions, Amount, CrmRecord, Horizon,
    TransactionRecord, TransactionSeries, DEFAULT_HORIZON_DAYS,
};
use crate::{Error, Execution, Result};

pub const TRANSACTIONS_FILE: &str = "transactions.csv";
pub const CRM_FILE: &str = "crm.csv";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Archetype {
    Normal,
    BehaviourChange,
    Smurfing,
    PassThrough,
}

/// Shares of the suspicious archetypes among positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeMix {
    pub behaviour_change: f64,
    pub smurfing: f64,
    pub pass_through: f64,
}

impl Default for ArchetypeMix {
    fn default() -> Self {
        ArchetypeMix {
            behaviour_change: 1.0 / 3.0,
            smurfing: 1.0 / 3.0,
            pass_through: 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_customers: usize,
    pub positive_fraction: f64,
    pub horizon: Horizon,
    pub seed: u64,
    pub mix: ArchetypeMix,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_customers: 6680,
            positive_fraction: 1945.0 / 6680.0,
            horizon: Horizon::new(
                NaiveDate::from_ymd_opt(2019, 1, 1).unwrap(),
                DEFAULT_HORIZON_DAYS,
            ),
            seed: 0,
            mix: ArchetypeMix::default(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return Err(Error::Config("positive fraction must lie in (0, 1)".into()));
        }
        if self.horizon.is_empty() {
            return Err(Error::EmptyHorizon);
        }
        let m = &self.mix;
        let parts = [m.behaviour_change, m.smurfing, m.pass_through];
        if parts.iter().any(|p| p.is_nan() || *p < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("archetype mix must be nonnegative and sum to 1".into()));
        }
        Ok(())
    }

    pub fn positives(&self) -> usize {
        (self.n_customers as f64 * self.positive_fraction).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCustomer {
    pub customer_id: String,
    pub label: u8,
    pub archetype: Archetype,
    pub transactions: Vec<TransactionRecord>,
    pub crm: CrmRecord,
}

impl SyntheticCustomer {
    pub fn series(&self, horizon: &Horizon) -> TransactionSeries {
        aggregate_daily(&self.transactions, horizon, None)
            .expect("generated records lie inside the horizon")
            .remove(&self.customer_id)
            .unwrap_or_else(|| TransactionSeries::zeros(self.customer_id.as_str(), horizon))
    }
}

/// Label-conditional CRM distributions.
///
/// | field | clear | suspicious |
/// |---|---|---|
/// | age | N(45, 13²) | N(36, 12²) |
/// | gender M | 0.48 | 0.60 |
/// | commercial | 0.12 | 0.26 |
/// | risk LOW/MEDIUM/HIGH | .60/.30/.10 | .40/.38/.22 |
/// | customer_age (years) | Exp(mean 9) | Exp(mean 5) |
///
/// Occupation weights follow [`OCCUPATIONS`] order.
#[derive(Debug, Clone, Copy)]
pub struct CrmProfile {
    pub age_mean: f64,
    pub age_sd: f64,
    pub p_male: f64,
    pub p_commercial: f64,
    pub risk: [f64; 3],
    pub occupation: [f64; 6],
    pub tenure_mean: f64,
}

pub const RISK_GROUPS: [&str; 3] = ["LOW", "MEDIUM", "HIGH"];
pub const OCCUPATIONS: [&str; 6] = ["EMPLOYEE", "SELF_EMPLOYED", "RETIRED", "STUDENT", "TRADER", "UNEMPLOYED"];
pub const CHANNELS: [&str; 3] = ["ATM", "BRANCH", "WEB"];

pub const CLEAR_CRM: CrmProfile = CrmProfile {
    age_mean: 45.0,
    age_sd: 13.0,
    p_male: 0.48,
    p_commercial: 0.12,
    risk: [0.60, 0.30, 0.10],
    occupation: [0.42, 0.15, 0.16, 0.10, 0.09, 0.08],
    tenure_mean: 9.0,
};

pub const SUSPICIOUS_CRM: CrmProfile = CrmProfile {
    age_mean: 36.0,
    age_sd: 12.0,
    p_male: 0.60,
    p_commercial: 0.26,
    risk: [0.40, 0.38, 0.22],
    occupation: [0.30, 0.18, 0.07, 0.14, 0.17, 0.14],
    tenure_mean: 5.0,
};

fn draw_crm<R: Rng>(rng: &mut R, id: &str, p: &CrmProfile) -> CrmRecord {
    let age = Normal::new(p.age_mean, p.age_sd).unwrap().sample(rng).clamp(18.0, 90.0).round();
    let tenure = Exp::new(1.0 / p.tenure_mean).unwrap().sample(rng);
    let tenure = tenure.min(age - 17.0).floor().max(0.0);
    let risk = WeightedIndex::new(p.risk).unwrap().sample(rng);
    let occupation = WeightedIndex::new(p.occupation).unwrap().sample(rng);
    CrmRecord {
        customer_id: id.to_string(),
        age,
        gender: if rng.random_bool(p.p_male) { "M" } else { "F" }.to_string(),
        is_commercial: rng.random_bool(p.p_commercial),
        risk_group: RISK_GROUPS[risk].to_string(),
        occupation: OCCUPATIONS[occupation].to_string(),
        customer_age: tenure,
    }
}

/// Collects flows for one customer, dropping any that round to zero cents.
struct Ledger<'a> {
    id: &'a str,
    horizon: &'a Horizon,
    records: Vec<TransactionRecord>,
}

impl Ledger<'_> {
    fn push(&mut self, day: usize, units: f64, channel: &str) {
        if day >= self.horizon.len() {
            return;
        }
        let amount = Amount::from_units(units);
        if amount.is_zero() {
            return;
        }
        self.records.push(TransactionRecord {
            customer_id: self.id.to_string(),
            date: self.horizon.date_at(day),
            amount,
            channel: channel.to_string(),
        });
    }

    fn finish(mut self) -> Vec<TransactionRecord> {
        self.records.sort_by_key(|r| r.date);
        self.records
    }
}

fn channel<R: Rng>(rng: &mut R) -> &'static str {
    CHANNELS[rng.random_range(0..CHANNELS.len())]
}

/// Monthly salary scale of a customer; median 2500.
fn salary_scale<R: Rng>(rng: &mut R) -> f64 {
    LogNormal::new(2500f64.ln(), 0.5).unwrap().sample(rng)
}

/// Salaried routine over days `from..to`.
fn routine<R: Rng>(rng: &mut R, ledger: &mut Ledger, salary: f64, from: usize, to: usize) {
    let rent = 0.3 * salary * rng.random_range(0.8..1.2);
    let spend = Exp::new(1.0 / (0.012 * salary)).unwrap();
    let active = rng.random_bool(0.45);
    let side = Exp::new(1.0 / (0.25 * salary)).unwrap();
    for day in from..to {
        let date = ledger.horizon.date_at(day);
        if date.day() == 15 {
            let jitter = 1.0 + 0.02 * Normal::new(0.0, 1.0).unwrap().sample(rng);
            ledger.push(day, salary * jitter, "WEB");
        }
        if date.day() == 1 {
            ledger.push(day, -rent, "WEB");
        }
        if rng.random_bool(0.6) {
            let c = channel(rng);
            ledger.push(day, -spend.sample(rng), c);
        }
        if active {
            if rng.random_bool(0.08) {
                ledger.push(day, side.sample(rng), "WEB");
            }
            if rng.random_bool(0.08) {
                ledger.push(day, -side.sample(rng), "WEB");
            }
        }
    }
    // occasional one-off large purchase
    if to > from && rng.random_bool(0.25) {
        let day = rng.random_range(from..to);
        ledger.push(day, -salary * rng.random_range(0.5..2.0), "BRANCH");
    }
}

pub fn gen_normal<R: Rng>(rng: &mut R, customer_id: &str, horizon: &Horizon) -> SyntheticCustomer {
    let salary = salary_scale(rng);
    let mut ledger = Ledger {
        id: customer_id,
        horizon,
        records: Vec::new(),
    };
    routine(rng, &mut ledger, salary, 0, horizon.len());
    let crm = draw_crm(rng, customer_id, &CLEAR_CRM);
    SyntheticCustomer {
        customer_id: customer_id.to_string(),
        label: 0,
        archetype: Archetype::Normal,
        transactions: ledger.finish(),
        crm,
    }
}

pub fn gen_suspicious<R: Rng>(
    rng: &mut R,
    customer_id: &str,
    horizon: &Horizon,
    archetype: Archetype,
) -> SyntheticCustomer {
    let n = horizon.len();
    let salary = salary_scale(rng);
    let mut ledger = Ledger {
        id: customer_id,
        horizon,
        records: Vec::new(),
    };
    match archetype {
        Archetype::Normal => routine(rng, &mut ledger, salary, 0, n),
        Archetype::BehaviourChange => {
            let change = rng.random_range(60..=120).min(n);
            routine(rng, &mut ledger, salary, 0, change);
            let rate = rng.random_range(0.1..0.5);
            let size = LogNormal::new((0.08 * salary).ln(), 0.6).unwrap();
            for day in change..n {
                if rng.random_bool(rate) {
                    let amount = size.sample(rng);
                    let c = channel(rng);
                    ledger.push(day, amount, c);
                    let lag = rng.random_range(0..=1);
                    let out = amount * rng.random_range(0.9..1.0);
                    let c = channel(rng);
                    ledger.push(day + lag, -out, c);
                }
            }
        }
        Archetype::Smurfing => {
            if rng.random_bool(0.7) {
                routine(rng, &mut ledger, salary, 0, n);
            }
            let deposit = 0.05 * salary;
            let period = rng.random_range(6..=14);
            let mut day = rng.random_range(0..20);
            while day < n {
                let cycle = period + rng.random_range(0..=1);
                let mut total = 0.0;
                for d in day..(day + cycle).min(n) {
                    for _ in 0..rng.random_range(0..=1) {
                        let a = deposit * rng.random_range(0.5..1.0);
                        total += a;
                        ledger.push(d, a, "ATM");
                    }
                }
                let out_day = day + cycle;
                ledger.push(out_day, -total * rng.random_range(0.95..1.0), "WEB");
                day = out_day + rng.random_range(1..=3);
            }
        }
        Archetype::PassThrough => {
            if rng.random_bool(0.7) {
                routine(rng, &mut ledger, salary, 0, n);
            }
            let rate = rng.random_range(0.05..0.25);
            let size = LogNormal::new((0.2 * salary).ln(), 0.4).unwrap();
            for day in 0..n {
                if rng.random_bool(rate) {
                    let amount = size.sample(rng);
                    ledger.push(day, amount, "WEB");
                    let lag = rng.random_range(0..=2);
                    ledger.push(day + lag, -amount * rng.random_range(0.97..1.0), "WEB");
                }
            }
        }
    }
    let crm = draw_crm(rng, customer_id, &SUSPICIOUS_CRM);
    SyntheticCustomer {
        customer_id: customer_id.to_string(),
        label: 1,
        archetype,
        transactions: ledger.finish(),
        crm,
    }
}

fn customer_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

pub fn customer_id(index: usize) -> String {
    format!("C{index:05}")
}

/// Generates the population. Exactly `cfg.positives()` customers are
/// suspicious; which ones is decided by a seeded shuffle.
pub fn gen_population(cfg: &SynthConfig, exec: Execution) -> Result<Vec<SyntheticCustomer>> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..cfg.n_customers).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let mut positive = vec![false; cfg.n_customers];
    for &i in &order[..cfg.positives()] {
        positive[i] = true;
    }
    let mix = WeightedIndex::new([cfg.mix.behaviour_change, cfg.mix.smurfing, cfg.mix.pass_through])
        .map_err(|e| Error::Config(format!("archetype mix: {e}")))?;
    let archetypes = [Archetype::BehaviourChange, Archetype::Smurfing, Archetype::PassThrough];
    Ok(exec.map_indexed(cfg.n_customers, |i| {
        let mut rng = customer_rng(cfg.seed, i);
        let id = customer_id(i);
        if positive[i] {
            let a = archetypes[mix.sample(&mut rng)];
            gen_suspicious(&mut rng, &id, &cfg.horizon, a)
        } else {
            gen_normal(&mut rng, &id, &cfg.horizon)
        }
    }))
}

#[derive(Debug, Clone)]
pub struct DatasetFiles {
    pub transactions: PathBuf,
    pub crm: PathBuf,
    pub labels: PathBuf,
}

/// Writes the population as the three ingest-compatible CSV files.
pub fn write_population(customers: &[SyntheticCustomer], dir: &Path) -> Result<DatasetFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = DatasetFiles {
        transactions: dir.join(TRANSACTIONS_FILE),
        crm: dir.join(CRM_FILE),
        labels: dir.join(LABELS_FILE),
    };
    let create = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
    let records: Vec<TransactionRecord> = customers.iter().flat_map(|c| c.transactions.iter().cloned()).collect();
    write_transactions(create(&files.transactions)?, &records)?;
    let crm: Vec<CrmRecord> = customers.iter().map(|c| c.crm.clone()).collect();
    write_crm(create(&files.crm)?, &crm)?;
    let labels: Vec<(String, u8)> = customers.iter().map(|c| (c.customer_id.clone(), c.label)).collect();
    write_labels(create(&files.labels)?, &labels)?;
    Ok(files)
}

pub fn gen_dataset(cfg: &SynthConfig, dir: &Path, exec: Execution) -> Result<DatasetFiles> {
    let customers = gen_population(cfg, exec)?;
    write_population(&customers, dir)
}
