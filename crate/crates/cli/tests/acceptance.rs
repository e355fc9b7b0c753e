//! Acceptance suite: one PASS/FAIL line per criterion.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tfaml::anneal::{split, tune, AnnealConfig};
use tfaml::dataset::{assemble, AssembleOptions, FeatureSet, LabeledDataset};
use tfaml::eval::{auc, rank_features, rates, DEFAULT_MI_BINS};
use tfaml::forest::{train, ForestParams};
use tfaml::ingest::{aggregate_daily, TransactionRecord};
use tfaml::spectral::{Spectrogram, Stft, StftConfig};
use tfaml::synth::{gen_population, SynthConfig};
use tfaml::tffeatures::{extract_all, moments};
use tfaml::Execution;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Outcome {
    check(elapsed < limit, format!("{detail}; {elapsed:.2?} (limit {limit:?})"))
}

fn reference_rates() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for p in &common::REFERENCE {
        let r = rates(&p.cm);
        for (got, want) in [(r.fpr, p.fpr), (r.fnr, p.fnr), (r.accuracy, p.accuracy)] {
            worst = worst.max((got.ok_or("undefined rate")? * 100.0 - want).abs());
        }
    }
    let ok = worst <= 0.005 + 1e-9;
    let detail = format!("18 rates, max deviation {worst:.4} pp (tolerance 0.005)");
    if !ok {
        return Err(detail);
    }
    within(t.elapsed(), Duration::from_secs(1), detail)
}

fn stft_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = StftConfig::default();
    let stft = Stft::new(cfg).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(cfg.window_len..=256);
        let x = common::random_series(&mut rng, n);
        let got = stft.transform(&x).map_err(|e| e.to_string())?;
        let want = common::dft_magnitudes(&x, &cfg);
        for (m, row) in want.iter().enumerate() {
            for (k, &w) in row.iter().enumerate() {
                let g = got.get(m, k);
                let err = if w == 0.0 { g.abs() } else { (g - w).abs() / w };
                worst = worst.max(err);
            }
        }
    }
    let detail = format!("200 series, max relative error {worst:.2e} (tolerance 1e-9)");
    if worst > 1e-9 {
        return Err(detail);
    }
    within(t.elapsed(), Duration::from_secs(10), detail)
}

fn feature_boundaries() -> Outcome {
    let spec = |m, k, v| Spectrogram::new(m, k, v).unwrap();
    let mut failures = Vec::new();
    let u = extract_all(&spec(10, 8, vec![2.0; 80]));
    if (u.entropy - 1.0).abs() > 1e-12 {
        failures.push(format!("uniform entropy {}", u.entropy));
    }
    for (name, v) in [
        ("tspar", u.tspar),
        ("fspar", u.fspar),
        ("ftspar", u.ftspar),
        ("tdisc", u.tdisc),
        ("fdisc", u.fdisc),
        ("ftdisc", u.ftdisc),
    ] {
        if v.abs() > 1e-12 {
            failures.push(format!("uniform {name} {v}"));
        }
    }
    if (u.variance, u.skewness, u.kurtosis) != (0.0, 0.0, 0.0) {
        failures.push(format!("constant moments {:?}", (u.variance, u.skewness, u.kurtosis)));
    }
    let mut hot = vec![0.0; 80];
    hot[33] = 4.0;
    let h = extract_all(&spec(10, 8, hot));
    if h.entropy != 0.0 || (h.ftspar - 1.0).abs() > 1e-12 {
        failures.push(format!("one-hot entropy {} ftspar {}", h.entropy, h.ftspar));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (m, k) = (rng.random_range(1..50), rng.random_range(1..70));
        let v: Vec<f64> = (0..m * k).map(|_| rng.random_range(0.0..1e3f64).powi(2)).collect();
        let got = moments(&spec(m, k, v.clone()));
        let want = common::two_pass_moments(&v);
        for (g, w) in [got.mean, got.variance, got.skewness, got.kurtosis].iter().zip(want) {
            worst = worst.max((g - w).abs() / w.abs().max(1.0));
        }
    }
    if worst > 1e-9 {
        failures.push(format!("moments deviate {worst:.2e} from two-pass oracle"));
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!("uniform, one-hot and constant cases hold; moments within {worst:.1e} of oracle")
        } else {
            failures.join("; ")
        },
    )
}

fn auc_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=500);
        let levels = rng.random_range(2..100);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        labels[0] = 0;
        labels[n - 1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..levels) as f64 / levels as f64).collect();
        let got = auc(&scores, &labels).map_err(|e| e.to_string())?;
        worst = worst.max((got - common::mann_whitney(&scores, &labels)).abs());
    }
    let constant = auc(&[0.7; 9], &[0, 1, 0, 1, 1, 0, 0, 0, 1]).map_err(|e| e.to_string())?;
    check(
        worst <= 1e-12 && constant == 0.5,
        format!("100 sets, max |AUC - Mann-Whitney| {worst:.1e}; constant scorer {constant}"),
    )
}

fn holdout_auc(data: &LabeledDataset, params: &ForestParams, seed: u64) -> Result<(f64, Vec<String>), String> {
    let (tr, te) = split(data, 0.7, seed).map_err(|e| e.to_string())?;
    let model = train(&tr, params).map_err(|e| e.to_string())?;
    let scores = model.score_dataset(&te, Execution::default()).map_err(|e| e.to_string())?;
    Ok((auc(&scores, &te.labels).map_err(|e| e.to_string())?, model.audit()))
}

fn forest_sanity() -> Outcome {
    let params = ForestParams {
        n_trees: 50,
        ..Default::default()
    };
    let (sep, mut problems) = holdout_auc(&common::separable(1000, 1), &params, 1)?;
    let mut inside = 0;
    let mut aucs = Vec::new();
    for seed in 0..10 {
        let data = common::permute_labels(&common::separable(1000, seed + 10), seed);
        let (a, p) = holdout_auc(&data, &ForestParams { seed, ..params }, seed)?;
        problems.extend(p);
        inside += usize::from((0.40..=0.60).contains(&a));
        aucs.push(format!("{a:.3}"));
    }
    check(
        sep >= 0.95 && inside >= 9 && problems.is_empty(),
        format!(
            "separable hold-out AUC {sep:.4}; permuted labels in [0.40, 0.60] for {inside}/10 ({}); {} audit violations",
            aucs.join(" "),
            problems.len()
        ),
    )
}

fn anneal_contract() -> Outcome {
    let base = common::separable(300, 4);
    let labels = base.labels.iter().enumerate().map(|(i, &l)| if i % 4 == 0 { 1 - l } else { l }).collect();
    let data = LabeledDataset::new(base.feature_names, base.customer_ids, labels, base.rows).unwrap();
    let (tr, va) = split(&data, 0.7, 0).map_err(|e| e.to_string())?;
    let forest = ForestParams {
        n_trees: 10,
        ..Default::default()
    };
    let cfg = AnnealConfig {
        iterations: 200,
        seed: 12,
        ..Default::default()
    };
    let run = |cfg: &AnnealConfig| tune(&tr, &va, cfg, &forest, Execution::default()).map_err(|e| e.to_string());
    let a = run(&cfg)?;
    let mut monotone = a.trace.len() == 200;
    let mut prev = a.initial_auc;
    for e in &a.trace {
        monotone &= e.best_auc >= prev;
        prev = e.best_auc;
    }
    let b = run(&cfg)?;
    let cold = run(&AnnealConfig { t0: 1e-12, ..cfg.clone() })?;
    let mut current = cold.initial_auc;
    let (mut worse_seen, mut worse_accepted) = (0, 0);
    for e in &cold.trace {
        if e.auc < current {
            worse_seen += 1;
            worse_accepted += usize::from(e.accepted);
        }
        if e.accepted {
            current = e.auc;
        }
    }
    check(
        monotone && a == b && worse_accepted == 0,
        format!(
            "best-so-far non-decreasing: {monotone}; identical seeds identical traces: {}; cold run accepted {worse_accepted} of {worse_seen} worse candidates",
            a == b
        ),
    )
}

fn end_to_end_ordering() -> Outcome {
    let t = Instant::now();
    let cfg = SynthConfig::default();
    let people = gen_population(&cfg, Execution::default()).map_err(|e| e.to_string())?;
    let records: Vec<TransactionRecord> = people.iter().flat_map(|c| c.transactions.iter().cloned()).collect();
    let series = aggregate_daily(&records, &cfg.horizon, None).map_err(|e| e.to_string())?;
    let crm = people.iter().map(|c| (c.customer_id.clone(), c.crm.clone())).collect();
    let labels = people.iter().map(|c| (c.customer_id.clone(), c.label)).collect();
    let opts = AssembleOptions {
        horizon: cfg.horizon,
        stft: StftConfig::default(),
        execution: Execution::default(),
    };
    let (full, _) = assemble(FeatureSet::TTfCrm, &series, &crm, &labels, &opts).map_err(|e| e.to_string())?;
    let mut auc_of = std::collections::BTreeMap::new();
    for set in FeatureSet::ALL {
        let (a, _) = holdout_auc(&full.select(set), &ForestParams::default(), 0)?;
        auc_of.insert(set.to_string(), a);
    }
    let g = |s: &str| auc_of[s];
    let ok = g("TF+CRM") > g("CRM") && g("T+TF+CRM") >= g("TF+CRM") - 0.01 && g("T+TF+CRM") > g("T+CRM");
    let listing: Vec<String> = FeatureSet::ALL.iter().map(|s| format!("{s} {:.4}", g(&s.to_string()))).collect();
    let detail = format!("{} customers, hold-out AUC: {}", people.len(), listing.join(", "));
    if !ok {
        return Err(detail);
    }
    within(t.elapsed(), Duration::from_secs(600), detail)
}

fn mi_ranking() -> Outcome {
    let mut wins = 0;
    let mut constant_zero = true;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 400;
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        let rows = labels.iter().map(|&y| vec![y as f64, rng.random(), -3.0]).collect();
        let data = LabeledDataset::new(
            vec!["informative".into(), "noise".into(), "constant".into()],
            (0..n).map(|i| format!("r{i}")).collect(),
            labels,
            rows,
        )
        .map_err(|e| e.to_string())?;
        let r = rank_features(&data, DEFAULT_MI_BINS, Execution::default()).map_err(|e| e.to_string())?;
        wins += usize::from(r.rank_of("informative") < r.rank_of("noise"));
        constant_zero &= r.entries[r.rank_of("constant").unwrap()].mi == 0.0;
    }
    check(
        wins >= 95 && constant_zero,
        format!("informative outranks noise in {wins}/100 runs; constant MI exactly 0: {constant_zero}"),
    )
}

fn tfaml(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tfaml"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("tfaml {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn pipeline(dir: &Path) -> Result<(), String> {
    tfaml(dir, &["synth", "--n", "1500", "--seed", "5", "--out-dir", "data"])?;
    tfaml(
        dir,
        &[
            "featurize", "--transactions", "data/transactions.csv", "--crm", "data/crm.csv", "--labels",
            "data/labels.csv", "--out", "features.csv",
        ],
    )?;
    tfaml(dir, &["train", "--features", "features.csv", "--trees", "40", "--model-out", "model.json"])?;
    tfaml(
        dir,
        &["evaluate", "--model", "model.json", "--features", "features.csv", "--report-out", "report.json"],
    )
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    for d in [&a, &b] {
        std::fs::create_dir_all(d).map_err(|e| e.to_string())?;
        pipeline(d)?;
    }
    let files = [
        "features.csv",
        "model.json",
        "report.json",
        "features.csv.manifest.json",
        "model.json.manifest.json",
        "report.json.manifest.json",
    ];
    let mut differing = Vec::new();
    for f in files {
        let read = |d: &Path| std::fs::read(d.join(f)).map_err(|e| format!("{f}: {e}"));
        if read(&a)? != read(&b)? {
            differing.push(f);
        }
    }
    check(
        differing.is_empty(),
        if differing.is_empty() {
            "two runs: features.csv, model.json, report.json and their manifests byte-identical".into()
        } else {
            format!("differing files: {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("1 reference error rates", reference_rates),
        ("2 STFT vs direct DFT", stft_oracle),
        ("3 feature boundary suite", feature_boundaries),
        ("4 AUC vs Mann-Whitney", auc_oracle),
        ("5 forest sanity", forest_sanity),
        ("6 annealing contract", anneal_contract),
        ("7 feature-set ordering", end_to_end_ordering),
        ("8 mutual information ranking", mi_ranking),
        ("9 pipeline determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
