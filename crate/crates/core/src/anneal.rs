//! Simulated-annealing search over the forest's structural hyperparameters
//! (`min_leaf`, `min_split`, `max_depth`), maximizing hold-out AUC.
//!
//! The forest seed stays fixed for the whole run, so the objective is a
//! deterministic function of the three parameters and is memoized.

use std::collections::HashMap;
use std::io::Write;
use std::ops::RangeInclusive;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::eval::auc;
use crate::forest::{train_with, ForestParams};
use crate::{Error, Execution, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    pub iterations: usize,
    /// Initial temperature, on the AUC scale.
    pub t0: f64,
    /// Geometric cooling factor; `T_k = t0 * alpha^k`.
    pub alpha: f64,
    pub min_leaf: RangeInclusive<usize>,
    pub min_split: RangeInclusive<usize>,
    pub max_depth: RangeInclusive<usize>,
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig {
            iterations: 1000,
            t0: 0.05,
            alpha: 0.995,
            min_leaf: 1..=50,
            min_split: 2..=60,
            max_depth: 1..=60,
            seed: 0,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(Error::Config(format!("t0 must be positive, got {}", self.t0)));
        }
        if self.min_leaf.is_empty() || *self.min_leaf.start() < 1 {
            return Err(Error::Config("min_leaf bounds must be nonempty and >= 1".into()));
        }
        if self.min_split.is_empty() || *self.min_split.start() < 2 {
            return Err(Error::Config("min_split bounds must be nonempty and >= 2".into()));
        }
        if self.max_depth.is_empty() || *self.max_depth.start() < 1 {
            return Err(Error::Config("max_depth bounds must be nonempty and >= 1".into()));
        }
        Ok(())
    }

    pub fn temperature(&self, k: usize) -> f64 {
        self.t0 * self.alpha.powi(k as i32)
    }
}

/// A point in the search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct State {
    pub min_leaf: usize,
    pub min_split: usize,
    pub max_depth: usize,
}

impl State {
    pub fn apply(&self, base: &ForestParams) -> ForestParams {
        ForestParams {
            min_leaf: self.min_leaf,
            min_split: self.min_split,
            max_depth: self.max_depth,
            ..*base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub candidate: State,
    pub auc: f64,
    pub accepted: bool,
    pub temperature: f64,
    /// Best AUC seen so far, including the starting state.
    pub best_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub initial: State,
    pub initial_auc: f64,
    pub best: State,
    pub best_auc: f64,
    pub trace: Vec<TraceEntry>,
}

impl TuneResult {
    /// Best parameters as `train` flags.
    pub fn best_flags(&self) -> String {
        format!(
            "--min-leaf {} --min-split {} --max-depth {}",
            self.best.min_leaf, self.best.min_split, self.best.max_depth
        )
    }

    /// `iter,min_leaf,min_split,max_depth,auc,temp,accepted`
    pub fn write_trace_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["iter", "min_leaf", "min_split", "max_depth", "auc", "temp", "accepted"])?;
        for e in &self.trace {
            wtr.write_record([
                e.iteration.to_string(),
                e.candidate.min_leaf.to_string(),
                e.candidate.min_split.to_string(),
                e.candidate.max_depth.to_string(),
                e.auc.to_string(),
                e.temperature.to_string(),
                u8::from(e.accepted).to_string(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }
}

/// Stratified split: a `fraction` share of each class goes to the first
/// part. Within each part rows keep their original order.
pub fn split(data: &LabeledDataset, fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("split fraction must lie in [0, 1], got {fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut first = Vec::new();
    let mut second = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let mut take = (fraction * idx.len() as f64).round() as usize;
        // keep both parts populated when the class allows it
        if idx.len() >= 2 && fraction > 0.0 && fraction < 1.0 {
            take = take.clamp(1, idx.len() - 1);
        }
        first.extend_from_slice(&idx[..take]);
        second.extend_from_slice(&idx[take..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((data.subset(&first), data.subset(&second)))
}

fn clamp_to(v: i64, range: &RangeInclusive<usize>) -> usize {
    v.clamp(*range.start() as i64, *range.end() as i64) as usize
}

fn neighbor(state: State, cfg: &AnnealConfig, rng: &mut ChaCha8Rng) -> State {
    let step = {
        let s: i64 = rng.random_range(1..=3);
        if rng.random_bool(0.5) {
            -s
        } else {
            s
        }
    };
    let mut next = state;
    match rng.random_range(0..3) {
        0 => next.min_leaf = clamp_to(state.min_leaf as i64 + step, &cfg.min_leaf),
        1 => next.min_split = clamp_to(state.min_split as i64 + step, &cfg.min_split),
        _ => next.max_depth = clamp_to(state.max_depth as i64 + step, &cfg.max_depth),
    }
    next
}

/// Hold-out AUC of a forest trained with the given parameters.
pub fn objective(train: &LabeledDataset, valid: &LabeledDataset, params: &ForestParams, exec: Execution) -> Result<f64> {
    let model = train_with(train, params, exec)?;
    let scores = model.score_dataset(valid, exec)?;
    auc(&scores, &valid.labels)
}

pub fn tune(
    train: &LabeledDataset,
    valid: &LabeledDataset,
    cfg: &AnnealConfig,
    base: &ForestParams,
    exec: Execution,
) -> Result<TuneResult> {
    cfg.validate()?;
    base.validate()?;
    if !train.has_both_classes() {
        return Err(Error::DegenerateLabels("training split holds a single class".into()));
    }
    if !valid.has_both_classes() {
        return Err(Error::DegenerateLabels("validation split holds a single class".into()));
    }
    let mut cache: HashMap<State, f64> = HashMap::new();
    let mut evaluate = |s: State| -> Result<f64> {
        if let Some(v) = cache.get(&s) {
            return Ok(*v);
        }
        let v = objective(train, valid, &s.apply(base), exec)?;
        cache.insert(s, v);
        Ok(v)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial = State {
        min_leaf: rng.random_range(cfg.min_leaf.clone()),
        min_split: rng.random_range(cfg.min_split.clone()),
        max_depth: rng.random_range(cfg.max_depth.clone()),
    };
    let initial_auc = evaluate(initial)?;
    let (mut current, mut current_auc) = (initial, initial_auc);
    let (mut best, mut best_auc) = (initial, initial_auc);
    let mut trace = Vec::with_capacity(cfg.iterations);
    for k in 0..cfg.iterations {
        let temperature = cfg.temperature(k);
        let candidate = neighbor(current, cfg, &mut rng);
        let cand_auc = evaluate(candidate)?;
        let delta = cand_auc - current_auc;
        let u: f64 = rng.random();
        let accepted = delta >= 0.0 || u < (delta / temperature).exp();
        if accepted {
            current = candidate;
            current_auc = cand_auc;
        }
        if cand_auc > best_auc {
            best = candidate;
            best_auc = cand_auc;
        }
        trace.push(TraceEntry {
            iteration: k,
            candidate,
            auc: cand_auc,
            accepted,
            temperature,
            best_auc,
        });
    }
    Ok(TuneResult {
        initial,
        initial_auc,
        best,
        best_auc,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize) -> LabeledDataset {
        LabeledDataset::new(
            vec!["x".into(), "noise".into()],
            (0..n).map(|i| format!("c{i:03}")).collect(),
            (0..n).map(|i| u8::from(i % 3 == 0)).collect(),
            (0..n)
                .map(|i| vec![(i % 3 == 0) as u8 as f64 + (i % 7) as f64 * 0.3, ((i * 37) % 11) as f64])
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn stratified_split_preserves_ratio() {
        let d = data(90);
        let (a, b) = split(&d, 0.7, 1).unwrap();
        assert_eq!(a.len() + b.len(), 90);
        assert_eq!(a.class_counts(), (42, 21));
        assert_eq!(b.class_counts(), (18, 9));
        let (a2, _) = split(&d, 0.7, 1).unwrap();
        assert_eq!(a, a2);
        let (a3, _) = split(&d, 0.7, 2).unwrap();
        assert_ne!(a.customer_ids, a3.customer_ids);
    }

    #[test]
    fn neighbors_stay_in_bounds() {
        let cfg = AnnealConfig {
            min_leaf: 1..=3,
            min_split: 2..=4,
            max_depth: 1..=2,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = State {
            min_leaf: 1,
            min_split: 2,
            max_depth: 1,
        };
        for _ in 0..500 {
            let n = neighbor(s, &cfg, &mut rng);
            let changed = [n.min_leaf != s.min_leaf, n.min_split != s.min_split, n.max_depth != s.max_depth];
            assert!(changed.iter().filter(|c| **c).count() <= 1);
            assert!(cfg.min_leaf.contains(&n.min_leaf));
            assert!(cfg.min_split.contains(&n.min_split));
            assert!(cfg.max_depth.contains(&n.max_depth));
            s = n;
        }
    }

    #[test]
    fn single_iteration() {
        let (tr, va) = split(&data(120), 0.7, 3).unwrap();
        let cfg = AnnealConfig {
            iterations: 1,
            ..Default::default()
        };
        let base = ForestParams {
            n_trees: 5,
            ..Default::default()
        };
        let r = tune(&tr, &va, &cfg, &base, Execution::Sequential).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.best_auc, r.initial_auc.max(r.trace[0].auc));
    }

    #[test]
    fn config_validation() {
        let bad = [
            AnnealConfig { iterations: 0, ..Default::default() },
            AnnealConfig { alpha: 1.0, ..Default::default() },
            AnnealConfig { t0: 0.0, ..Default::default() },
            AnnealConfig { min_split: 1..=5, ..Default::default() },
            #[allow(clippy::reversed_empty_ranges)]
            AnnealConfig { max_depth: 5..=1, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn degenerate_split_rejected() {
        let d = data(30);
        let ones: Vec<usize> = (0..30).filter(|i| i % 3 == 0).collect();
        let one_class = d.subset(&ones);
        let cfg = AnnealConfig { iterations: 2, ..Default::default() };
        assert!(tune(&one_class, &d, &cfg, &ForestParams::default(), Execution::Sequential).is_err());
    }
}
