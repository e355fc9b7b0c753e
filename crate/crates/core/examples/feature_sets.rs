//! Hold-out AUC of each of the six feature sets on a synthetic population.
//!
//! cargo run --release -p tfaml-core --example feature_sets -- [n_customers] [seed]

use std::collections::BTreeMap;
use std::time::Instant;

use tfaml::anneal::split;
use tfaml::dataset::{assemble, AssembleOptions, FeatureSet};
use tfaml::eval::{auc, rank_features};
use tfaml::forest::{train, ForestParams};
use tfaml::ingest::aggregate_daily;
use tfaml::spectral::StftConfig;
use tfaml::synth::{gen_population, SynthConfig};
use tfaml::Execution;

fn main() -> tfaml::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let n = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(6680);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let start = Instant::now();
    let cfg = SynthConfig {
        n_customers: n,
        seed,
        ..Default::default()
    };
    let pop = gen_population(&cfg, Execution::default())?;
    let records: Vec<_> = pop.iter().flat_map(|c| c.transactions.iter().cloned()).collect();
    let series = aggregate_daily(&records, &cfg.horizon, None)?;
    let crm: BTreeMap<_, _> = pop.iter().map(|c| (c.customer_id.clone(), c.crm.clone())).collect();
    let labels: BTreeMap<_, _> = pop.iter().map(|c| (c.customer_id.clone(), c.label)).collect();
    let opts = AssembleOptions {
        horizon: cfg.horizon,
        stft: StftConfig::default(),
        execution: Execution::default(),
    };
    let (full, _) = assemble(FeatureSet::TTfCrm, &series, &crm, &labels, &opts)?;
    println!("featurized {} customers in {:.1?}", full.len(), start.elapsed());
    for name in ["KURT", "TDISC", "SKEW", "ENTROPY"] {
        let j = full.feature_names.iter().position(|n| n == name).unwrap();
        let col = full.column(j);
        let group = |label: u8| -> Vec<f64> {
            col.iter().zip(&full.labels).filter(|(_, l)| **l == label).map(|(v, _)| *v).collect()
        };
        println!("{name:>8}: cohen d = {:.3}", cohens_d(&group(1), &group(0)));
    }
    let (tr, te) = split(&full, 0.7, 7)?;
    for set in FeatureSet::ALL {
        let t = Instant::now();
        let (a, b) = (tr.select(set), te.select(set));
        let model = train(&a, &ForestParams::default())?;
        let scores = model.score_dataset(&b, Execution::default())?;
        println!("{:>9}: AUC {:.4}  ({:.1?})", set.to_string(), auc(&scores, &b.labels)?, t.elapsed());
    }
    let ranking = rank_features(&full, 16, Execution::default())?;
    for (i, e) in ranking.entries.iter().enumerate() {
        println!("{:>3} {:<28} {:.5}", i + 1, e.feature, e.mi);
    }
    Ok(())
}

fn cohens_d(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    let (ma, mb) = (mean(a), mean(b));
    let pooled = (((a.len() - 1) as f64 * var(a, ma) + (b.len() - 1) as f64 * var(b, mb))
        / (a.len() + b.len() - 2) as f64)
        .sqrt();
    (ma - mb) / pooled
}
