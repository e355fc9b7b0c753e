//! Random-forest classifier with soft voting.
//!
//! Each tree is grown on a bootstrap sample with CART/Gini splits over a
//! random subset of `ceil(sqrt(d))` features per node. A row's score is the
//! mean, over trees, of the positive fraction in the leaf it reaches.
//!
//! Tree `t` draws its randomness from a ChaCha stream keyed by
//! `(seed, t)`, so trees can be grown in any order or in parallel and the
//! model is the same.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureVector, LabeledDataset};
use crate::{Error, Execution, Result};

pub const MODEL_FORMAT: &str = "tfaml-forest";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Fewest samples a node needs before a split is attempted.
    pub min_split: usize,
    /// Fewest samples each side of a split must keep.
    pub min_leaf: usize,
    pub max_depth: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            min_split: 10,
            min_leaf: 5,
            max_depth: 30,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if self.min_split < 2 {
            return bad("min_split must be at least 2");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be at least 1");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        Ok(())
    }
}

/// Gini impurity `1 - p0² - p1²` of a label multiset.
pub fn gini(labels: &[u8]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let n = labels.len() as f64;
    let p1 = labels.iter().filter(|l| **l == 1).count() as f64 / n;
    let p0 = 1.0 - p1;
    1.0 - p0 * p0 - p1 * p1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        samples: usize,
    },
    Leaf {
        /// Fraction of positive bootstrap samples in the leaf.
        value: f64,
        samples: usize,
    },
}

impl Node {
    pub fn samples(&self) -> usize {
        match *self {
            Node::Split { samples, .. } | Node::Leaf { samples, .. } => samples,
        }
    }
}

/// Nodes stored in an arena, root first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Depth of the deepest leaf; a single-leaf tree has depth 0.
    pub fn depth(&self) -> usize {
        let mut max = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            max = max.max(d);
            if let Node::Split { left, right, .. } = self.nodes[i] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        max
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. }))
    }
}

/// Stratified split that kept rows out of training; see [`crate::anneal::split`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Holdout {
    /// Share of each class held out.
    pub fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format: String,
    pub version: u32,
    pub params: ForestParams,
    pub feature_order: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holdout: Option<Holdout>,
    pub trees: Vec<Tree>,
}

/// Score of a candidate partition, `(P_l²+Q_l²)/n_l + (P_r²+Q_r²)/n_r`, kept
/// as an exact fraction. Larger means a larger Gini decrease.
#[derive(Debug, Clone, Copy)]
struct SplitScore {
    num: u128,
    den: u128,
}

impl SplitScore {
    fn of_parent(pos: u64, n: u64) -> Self {
        let neg = n - pos;
        SplitScore {
            num: (pos * pos + neg * neg) as u128,
            den: n as u128,
        }
    }

    fn of_split(pos_l: u64, n_l: u64, pos_r: u64, n_r: u64) -> Self {
        let sq = |p: u64, n: u64| (p * p + (n - p) * (n - p)) as u128;
        SplitScore {
            num: sq(pos_l, n_l) * n_r as u128 + sq(pos_r, n_r) * n_l as u128,
            den: n_l as u128 * n_r as u128,
        }
    }

    fn beats(&self, other: &SplitScore) -> bool {
        self.num * other.den > other.num * self.den
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: SplitScore,
}

struct TreeBuilder<'a> {
    cols: &'a [Vec<f64>],
    labels: &'a [u8],
    params: &'a ForestParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    buf: Vec<(f64, u8)>,
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, slot: usize, pos: usize, n: usize) {
        self.nodes[slot] = Node::Leaf {
            value: pos as f64 / n as f64,
            samples: n,
        };
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: 0.0,
            samples: 0,
        });
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.labels[i] == 1).count();
        let p = self.params;
        if depth >= p.max_depth || n < p.min_split || n < 2 * p.min_leaf || pos == 0 || pos == n {
            self.leaf(slot, pos, n);
            return slot;
        }
        let Some(best) = self.best_split(idx, pos) else {
            self.leaf(slot, pos, n);
            return slot;
        };
        let col = &self.cols[best.feature];
        let mut split_at = 0;
        for j in 0..n {
            if col[idx[j]] <= best.threshold {
                idx.swap(split_at, j);
                split_at += 1;
            }
        }
        let (left_idx, right_idx) = idx.split_at_mut(split_at);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
            samples: n,
        };
        slot
    }

    /// Best legal split among a random feature subset. Ties go to the lowest
    /// feature index, then the smallest threshold.
    fn best_split(&mut self, idx: &[usize], pos: usize) -> Option<Candidate> {
        let n = idx.len();
        let d = self.cols.len();
        let mut features = sample(&mut self.rng, d, self.mtry).into_vec();
        features.sort_unstable();
        let min_leaf = self.params.min_leaf;
        let parent = SplitScore::of_parent(pos as u64, n as u64);
        let mut best: Option<Candidate> = None;
        for f in features {
            let col = &self.cols[f];
            self.buf.clear();
            self.buf.extend(idx.iter().map(|&i| (col[i], self.labels[i])));
            self.buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut pos_left = 0u64;
            for i in 1..n {
                pos_left += u64::from(self.buf[i - 1].1);
                let (lo, hi) = (self.buf[i - 1].0, self.buf[i].0);
                if lo == hi || i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let score = SplitScore::of_split(pos_left, i as u64, pos as u64 - pos_left, (n - i) as u64);
                if !score.beats(&parent) {
                    continue;
                }
                if best.as_ref().is_none_or(|b| score.beats(&b.score)) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if !(threshold >= lo && threshold < hi) {
                        threshold = lo;
                    }
                    best = Some(Candidate {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Number of features tried at each node.
pub fn features_per_split(d: usize) -> usize {
    ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1))
}

pub fn train(data: &LabeledDataset, params: &ForestParams) -> Result<ForestModel> {
    train_with(data, params, Execution::default())
}

pub fn train_with(data: &LabeledDataset, params: &ForestParams, exec: Execution) -> Result<ForestModel> {
    params.validate()?;
    if data.len() < 2 {
        return Err(Error::DegenerateLabels("need at least two rows".into()));
    }
    if !data.has_both_classes() {
        return Err(Error::DegenerateLabels("training data holds a single class".into()));
    }
    if data.n_features() == 0 {
        return Err(Error::Config("dataset has no features".into()));
    }
    let cols: Vec<Vec<f64>> = (0..data.n_features()).map(|j| data.column(j)).collect();
    let n = data.len();
    let mtry = features_per_split(cols.len());
    let trees = exec.map_indexed(params.n_trees, |t| {
        let mut rng = tree_rng(params.seed, t);
        let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut builder = TreeBuilder {
            cols: &cols,
            labels: &data.labels,
            params,
            mtry,
            rng,
            nodes: Vec::new(),
            buf: Vec::with_capacity(n),
        };
        builder.grow(&mut idx, 0);
        Tree {
            nodes: builder.nodes,
        }
    });
    Ok(ForestModel {
        format: MODEL_FORMAT.into(),
        version: MODEL_VERSION,
        params: *params,
        feature_order: data.feature_names.clone(),
        holdout: None,
        trees,
    })
}

/// Positive iff `score > threshold`.
pub fn decide(score: f64, threshold: f64) -> bool {
    crate::eval::predict(score, threshold)
}

impl ForestModel {
    /// Score for values already laid out in `feature_order`.
    pub fn score_values(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        (sum / self.trees.len() as f64).clamp(0.0, 1.0)
    }

    /// Column index in `names` of every model feature.
    pub fn bind(&self, names: &[String]) -> Result<Vec<usize>> {
        self.feature_order
            .iter()
            .map(|f| {
                names
                    .iter()
                    .position(|n| n == f)
                    .ok_or_else(|| Error::MissingFeature(f.clone()))
            })
            .collect()
    }

    pub fn score(&self, row: &FeatureVector) -> Result<f64> {
        let map = self.bind(&row.names)?;
        let values: Vec<f64> = map.iter().map(|&j| row.values[j]).collect();
        Ok(self.score_values(&values))
    }

    pub fn score_dataset(&self, data: &LabeledDataset, exec: Execution) -> Result<Vec<f64>> {
        let map = self.bind(&data.feature_names)?;
        let identity = map.iter().enumerate().all(|(i, &j)| i == j);
        Ok(exec.map_slice(&data.rows, |row| {
            if identity {
                self.score_values(row)
            } else {
                let v: Vec<f64> = map.iter().map(|&j| row[j]).collect();
                self.score_values(&v)
            }
        }))
    }

    /// Checks the depth, leaf-size and split-size constraints on every tree.
    /// Returns one message per violation.
    pub fn audit(&self) -> Vec<String> {
        let p = &self.params;
        let mut problems = Vec::new();
        for (t, tree) in self.trees.iter().enumerate() {
            if tree.depth() > p.max_depth {
                problems.push(format!("tree {t}: depth {} > {}", tree.depth(), p.max_depth));
            }
            for (i, node) in tree.nodes.iter().enumerate() {
                match *node {
                    Node::Leaf { samples, .. } if i != 0 && samples < p.min_leaf => {
                        problems.push(format!("tree {t} node {i}: leaf with {samples} < {} samples", p.min_leaf));
                    }
                    Node::Split {
                        samples,
                        left,
                        right,
                        ..
                    } => {
                        if samples < p.min_split {
                            problems.push(format!("tree {t} node {i}: split on {samples} < {} samples", p.min_split));
                        }
                        let (l, r) = (tree.nodes[left].samples(), tree.nodes[right].samples());
                        if l < p.min_leaf || r < p.min_leaf {
                            problems.push(format!("tree {t} node {i}: children {l}/{r} below min_leaf {}", p.min_leaf));
                        }
                        if l + r != samples {
                            problems.push(format!("tree {t} node {i}: children {l}+{r} != {samples}"));
                        }
                    }
                    _ => {}
                }
            }
        }
        problems
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: ForestModel = serde_json::from_str(s)?;
        if model.format != MODEL_FORMAT || model.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("{} v{}", model.format, model.version)));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny() -> LabeledDataset {
        LabeledDataset::new(
            vec!["x".into()],
            (0..4).map(|i| format!("c{i}")).collect(),
            vec![0, 0, 1, 1],
            (0..4).map(|i| vec![i as f64]).collect(),
        )
        .unwrap()
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[0, 0, 1, 1]), 0.5);
        assert_eq!(gini(&[1, 1, 1]), 0.0);
        assert_relative_eq!(gini(&[0, 1, 1, 1]), 0.375, max_relative = 1e-15);
    }

    #[test]
    fn invalid_params() {
        for p in [
            ForestParams { n_trees: 0, ..Default::default() },
            ForestParams { min_split: 1, ..Default::default() },
            ForestParams { min_leaf: 0, ..Default::default() },
            ForestParams { max_depth: 0, ..Default::default() },
        ] {
            assert!(train(&tiny(), &p).is_err());
        }
    }

    #[test]
    fn single_class_rejected() {
        let mut d = tiny();
        d.labels = vec![1; 4];
        let err = train(&d, &ForestParams::default()).unwrap_err();
        assert!(err.to_string().contains("degenerate labels"));
    }

    #[test]
    fn min_leaf_of_n_gives_stumps() {
        let p = ForestParams {
            n_trees: 20,
            min_leaf: 4,
            min_split: 2,
            max_depth: 5,
            seed: 3,
        };
        let m = train(&tiny(), &p).unwrap();
        for t in &m.trees {
            assert_eq!(t.nodes.len(), 1);
        }
        // each leaf is its bootstrap's positive fraction: a multiple of 1/4
        for t in &m.trees {
            if let Node::Leaf { value, samples } = t.nodes[0] {
                assert_eq!(samples, 4);
                assert_eq!((value * 4.0).fract(), 0.0);
            }
        }
    }

    #[test]
    fn constant_leaf_scores() {
        let leaf = Tree {
            nodes: vec![Node::Leaf { value: 0.3, samples: 5 }],
        };
        let m = ForestModel {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            params: ForestParams::default(),
            feature_order: vec!["x".into()],
            holdout: None,
            trees: vec![leaf; 7],
        };
        assert_relative_eq!(m.score_values(&[1.0]), 0.3, max_relative = 1e-15);
    }

    #[test]
    fn missing_feature_is_error() {
        let m = train(&tiny(), &ForestParams { n_trees: 3, ..Default::default() }).unwrap();
        let row = FeatureVector {
            customer_id: "c".into(),
            names: vec!["y".into()],
            values: vec![1.0],
        };
        assert!(matches!(m.score(&row), Err(Error::MissingFeature(_))));
    }

    #[test]
    fn rejects_foreign_model_format() {
        let m = train(&tiny(), &ForestParams { n_trees: 2, ..Default::default() }).unwrap();
        let json = m.to_json().unwrap().replace(MODEL_FORMAT, "other");
        assert!(ForestModel::from_json(&json).is_err());
    }

    #[test]
    fn features_per_split_is_ceil_sqrt() {
        assert_eq!(features_per_split(1), 1);
        assert_eq!(features_per_split(2), 2);
        assert_eq!(features_per_split(4), 2);
        assert_eq!(features_per_split(5), 3);
        assert_eq!(features_per_split(30), 6);
    }
}
