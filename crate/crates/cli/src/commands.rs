use std::fmt;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use serde_json::json;
use tfaml::anneal::{split, tune, AnnealConfig};
use tfaml::dataset::{assemble, AssembleOptions, FeatureSet, LabeledDataset};
use tfaml::eval::{auc, rank_features, write_roc_csv, EvalReport, DEFAULT_MI_BINS, DEFAULT_THRESHOLD};
use tfaml::forest::{train_with, ForestModel, ForestParams, Holdout};
use tfaml::ingest::{
    aggregate_daily, earliest_date, parse_crm, parse_labels, parse_transactions, Horizon, TransactionSeries,
    DEFAULT_HORIZON_DAYS,
};
use tfaml::spectral::{export_spectrogram, stft, ExportFormat, StftConfig};
use tfaml::synth::{gen_population, write_population, SynthConfig};
use tfaml::Execution;

use crate::config::{Echo, Settings};
use crate::manifest::{beside, Manifest};
use crate::{
    Cli, Command, EvaluateArgs, FeaturizeArgs, HorizonArgs, ImportanceArgs, SpectrogramArgs, SplitArgs, StftArgs,
    SynthArgs, TrainArgs, TuneArgs,
};

const DEFAULT_HOLDOUT: f64 = 0.3;

/// Which rows `evaluate` scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rows {
    Auto,
    All,
    Holdout,
}

impl FromStr for Rows {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Rows::Auto),
            "all" => Ok(Rows::All),
            "holdout" => Ok(Rows::Holdout),
            _ => Err(format!("expected auto, all or holdout, found {s:?}")),
        }
    }
}

impl fmt::Display for Rows {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rows::Auto => "auto",
            Rows::All => "all",
            Rows::Holdout => "holdout",
        })
    }
}

impl Echo for Rows {
    fn echo(&self) -> serde_json::Value {
        self.to_string().into()
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut settings = Settings::load(cli.config.as_deref(), cli.command.name())?;
    let threads = settings.get("threads", cli.threads, 0usize)?;
    let exec = execution(threads)?;
    match cli.command {
        Command::Synth(a) => synth(a, &mut settings, exec),
        Command::Featurize(a) => featurize(a, &mut settings, exec),
        Command::Train(a) => train(a, &mut settings, exec),
        Command::Tune(a) => tune_cmd(a, &mut settings, exec),
        Command::Evaluate(a) => evaluate(a, &mut settings, exec),
        Command::Importance(a) => importance(a, &mut settings, exec),
        Command::Spectrogram(a) => spectrogram(a, &mut settings),
    }
}

#[cfg(feature = "parallel")]
fn execution(threads: usize) -> Result<Execution> {
    if threads == 1 {
        return Ok(Execution::Sequential);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("starting worker threads")?;
    Ok(Execution::Parallel)
}

#[cfg(not(feature = "parallel"))]
fn execution(_threads: usize) -> Result<Execution> {
    Ok(Execution::Sequential)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn horizon(h: HorizonArgs, s: &mut Settings, transactions: &Path) -> Result<(Horizon, Option<String>)> {
    let start = match s.optional("start", h.start)? {
        Some(d) => d,
        None => match earliest_date(transactions)? {
            Some(d) => d,
            None => bail!("{} holds no transactions; pass --start", transactions.display()),
        },
    };
    s.note("start", start);
    let days = s.get("days", h.days, DEFAULT_HORIZON_DAYS)?;
    let channel = s.optional("channel", h.channel)?;
    Ok((Horizon::new(start, days), channel))
}

fn stft_config(a: StftArgs, s: &mut Settings) -> Result<StftConfig> {
    let d = StftConfig::default();
    let cfg = StftConfig {
        window_len: s.get("window", a.window, d.window_len)?,
        hop: s.get("hop", a.hop, d.hop)?,
        fft_len: s.get("fft-len", a.fft_len, d.fft_len)?,
        window_fn: s.get("window-fn", a.window_fn, d.window_fn)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Splits off the hold-out rows; returns `(training, held_out)`.
fn holdout_split(data: &LabeledDataset, h: &Holdout) -> Result<(LabeledDataset, LabeledDataset)> {
    Ok(split(data, 1.0 - h.fraction, h.seed)?)
}

fn holdout(a: SplitArgs, s: &mut Settings) -> Result<Option<Holdout>> {
    let fraction = s.get("holdout", a.holdout, DEFAULT_HOLDOUT)?;
    let seed = s.get("split-seed", a.split_seed, 0u64)?;
    if !(0.0..1.0).contains(&fraction) {
        bail!("--holdout must lie in [0, 1), got {fraction}");
    }
    Ok((fraction > 0.0).then_some(Holdout { fraction, seed }))
}

fn load_features(path: &Path, m: &mut Manifest) -> Result<LabeledDataset> {
    m.input(path)?;
    Ok(LabeledDataset::load_csv(path)?)
}

fn synth(a: SynthArgs, s: &mut Settings, exec: Execution) -> Result<()> {
    let d = SynthConfig::default();
    let cfg = SynthConfig {
        n_customers: s.get("n", a.n, d.n_customers)?,
        positive_fraction: s.get("positive-frac", a.positive_frac, d.positive_fraction)?,
        seed: s.get("seed", a.seed, d.seed)?,
        horizon: Horizon::new(
            s.get("start", a.start, d.horizon.start)?,
            s.get("days", a.days, d.horizon.days)?,
        ),
        mix: d.mix,
    };
    let out_dir: PathBuf = s.required("out-dir", a.out_dir)?;
    let people = gen_population(&cfg, exec)?;
    let files = write_population(&people, &out_dir)?;
    let mut m = Manifest::new("synth");
    for f in [&files.transactions, &files.crm, &files.labels] {
        m.output(f)?;
    }
    let transactions: usize = people.iter().map(|c| c.transactions.len()).sum();
    m.summary(json!({
        "customers": people.len(),
        "positives": cfg.positives(),
        "transactions": transactions,
    }));
    m.finish(s, &out_dir.join("manifest.json"))?;
    eprintln!(
        "synth: {} customers ({} suspicious), {} transactions in {}",
        people.len(),
        cfg.positives(),
        transactions,
        out_dir.display()
    );
    Ok(())
}

fn featurize(a: FeaturizeArgs, s: &mut Settings, exec: Execution) -> Result<()> {
    let tx_path: PathBuf = s.required("transactions", a.transactions)?;
    let crm_path: PathBuf = s.required("crm", a.crm)?;
    let labels_path: PathBuf = s.required("labels", a.labels)?;
    let (horizon, channel) = horizon(a.horizon, s, &tx_path)?;
    let stft = stft_config(a.stft, s)?;
    let set = s.get("feature-set", a.feature_set, FeatureSet::TTfCrm)?;
    let out: PathBuf = s.required("out", a.out)?;

    let mut m = Manifest::new("featurize");
    for p in [&tx_path, &crm_path, &labels_path] {
        m.input(p)?;
    }
    let parsed = parse_transactions(&tx_path, &horizon)?;
    let series = aggregate_daily(&parsed.records, &horizon, channel.as_deref())?;
    let crm = parse_crm(&crm_path)?;
    let labels = parse_labels(&labels_path)?;
    let opts = AssembleOptions {
        horizon,
        stft,
        execution: exec,
    };
    let (data, report) = assemble(set, &series, &crm.records, &labels, &opts)?;
    data.write_csv(create(&out)?)?;
    m.output(&out)?;
    let (neg, pos) = data.class_counts();
    m.summary(json!({
        "rows": report.rows,
        "negatives": neg,
        "positives": pos,
        "features": data.n_features(),
        "dropped_outside_horizon": parsed.dropped_outside_horizon,
        "dropped_incomplete_crm": crm.dropped_incomplete,
        "dropped_missing_crm": report.dropped_missing_crm,
        "dropped_unlabelled": report.dropped_unlabelled,
        "zero_activity": report.zero_activity,
    }));
    m.finish(s, &beside(&out))?;
    eprintln!(
        "featurize: {} rows x {} features ({set}); dropped: {} outside horizon, {} incomplete crm, {} missing crm, {} unlabelled; {} without activity",
        report.rows,
        data.n_features(),
        parsed.dropped_outside_horizon,
        crm.dropped_incomplete,
        report.dropped_missing_crm,
        report.dropped_unlabelled,
        report.zero_activity
    );
    Ok(())
}

fn train(a: TrainArgs, s: &mut Settings, exec: Execution) -> Result<()> {
    let features: PathBuf = s.required("features", a.features)?;
    let d = ForestParams::default();
    let params = ForestParams {
        n_trees: s.get("trees", a.trees, d.n_trees)?,
        min_split: s.get("min-split", a.min_split, d.min_split)?,
        min_leaf: s.get("min-leaf", a.min_leaf, d.min_leaf)?,
        max_depth: s.get("max-depth", a.max_depth, d.max_depth)?,
        seed: s.get("seed", a.seed, d.seed)?,
    };
    let held = holdout(a.split, s)?;
    let model_out: PathBuf = s.required("model-out", a.model_out)?;

    let mut m = Manifest::new("train");
    let data = load_features(&features, &mut m)?;
    let (train_rows, held_rows) = match &held {
        Some(h) => {
            let (t, v) = holdout_split(&data, h)?;
            (t, v.len())
        }
        None => (data, 0),
    };
    let mut model = train_with(&train_rows, &params, exec)?;
    model.holdout = held;
    model.save(&model_out)?;
    m.output(&model_out)?;

    let scores = model.score_dataset(&train_rows, exec)?;
    let train_auc = auc(&scores, &train_rows.labels)?;
    let depths: Vec<usize> = model.trees.iter().map(|t| t.depth()).collect();
    let leaves: usize = model.trees.iter().map(|t| t.leaves().count()).sum();
    m.summary(json!({
        "training_rows": train_rows.len(),
        "holdout_rows": held_rows,
        "features": model.feature_order.len(),
        "training_auc": train_auc,
        "max_tree_depth": depths.iter().max(),
        "mean_leaves_per_tree": leaves as f64 / model.trees.len() as f64,
    }));
    m.finish(s, &beside(&model_out))?;
    eprintln!(
        "train: {} trees on {} rows ({} held out), training AUC {train_auc:.4}",
        params.n_trees,
        train_rows.len(),
        held_rows
    );
    Ok(())
}

fn tune_cmd(a: TuneArgs, s: &mut Settings, exec: Execution) -> Result<()> {
    let features: PathBuf = s.required("features", a.features)?;
    let d = AnnealConfig::default();
    let cfg = AnnealConfig {
        iterations: s.get("iterations", a.iterations, d.iterations)?,
        t0: s.get("t0", a.t0, d.t0)?,
        alpha: s.get("alpha", a.alpha, d.alpha)?,
        seed: s.get("seed", a.seed, d.seed)?,
        ..d
    };
    s.note("min-leaf-range", format!("{:?}", cfg.min_leaf));
    s.note("min-split-range", format!("{:?}", cfg.min_split));
    s.note("max-depth-range", format!("{:?}", cfg.max_depth));
    let base = ForestParams {
        n_trees: s.get("trees", a.trees, ForestParams::default().n_trees)?,
        seed: s.get("forest-seed", a.forest_seed, 0u64)?,
        ..Default::default()
    };
    let held = holdout(a.split, s)?;
    let valid_frac = s.get("valid-frac", a.valid_frac, 0.3f64)?;
    if !(valid_frac > 0.0 && valid_frac < 1.0) {
        bail!("--valid-frac must lie in (0, 1), got {valid_frac}");
    }
    let split_seed = held.map_or(0, |h| h.seed);
    let trace_out: PathBuf = s.required("trace-out", a.trace_out)?;

    let mut m = Manifest::new("tune");
    let data = load_features(&features, &mut m)?;
    let pool = match &held {
        Some(h) => holdout_split(&data, h)?.0,
        None => data,
    };
    let (train_rows, valid_rows) = split(&pool, 1.0 - valid_frac, split_seed.wrapping_add(1))?;
    let result = tune(&train_rows, &valid_rows, &cfg, &base, exec)?;
    result.write_trace_csv(create(&trace_out)?)?;
    m.output(&trace_out)?;
    m.summary(json!({
        "training_rows": train_rows.len(),
        "validation_rows": valid_rows.len(),
        "initial": result.initial,
        "initial_auc": result.initial_auc,
        "best": result.best,
        "best_auc": result.best_auc,
        "accepted": result.trace.iter().filter(|e| e.accepted).count(),
        "best_flags": result.best_flags(),
    }));
    m.finish(s, &beside(&trace_out))?;
    eprintln!("tune: best validation AUC {:.4} after {} iterations", result.best_auc, cfg.iterations);
    println!("{}", result.best_flags());
    Ok(())
}

fn evaluate(a: EvaluateArgs, s: &mut Settings, exec: Execution) -> Result<()> {
    let model_path: PathBuf = s.required("model", a.model)?;
    let features: PathBuf = s.required("features", a.features)?;
    let threshold = s.get("threshold", a.threshold, DEFAULT_THRESHOLD)?;
    if !(0.0..=1.0).contains(&threshold) {
        bail!("--threshold must lie in [0, 1], got {threshold}");
    }
    let rows = s.get("rows", a.rows, Rows::Auto)?;
    let report_out: PathBuf = s.required("report-out", a.report_out)?;
    let roc_out: Option<PathBuf> = s.optional("roc-out", a.roc_out)?;

    let mut m = Manifest::new("evaluate");
    m.input(&model_path)?;
    let model = ForestModel::load(&model_path)?;
    let data = load_features(&features, &mut m)?;
    let scored = match (rows, model.holdout) {
        (Rows::All, _) | (Rows::Auto, None) => data,
        (_, Some(h)) => holdout_split(&data, &h)?.1,
        (Rows::Holdout, None) => bail!("model records no hold-out split; use --rows all"),
    };
    let scores = model.score_dataset(&scored, exec)?;
    let report = EvalReport::build(&scores, &scored.labels, threshold)?;
    let mut text = report.to_json()?;
    text.push('\n');
    std::fs::write(&report_out, text).with_context(|| format!("writing {}", report_out.display()))?;
    m.output(&report_out)?;
    if let Some(p) = &roc_out {
        write_roc_csv(&report.roc, create(p)?)?;
        m.output(p)?;
    }
    let pct = |x: Option<f64>| x.map(|v| format!("{:.2}%", v * 100.0)).unwrap_or_else(|| "n/a".into());
    m.summary(json!({
        "rows": report.rows,
        "auc": report.roc.auc,
        "fpr": report.rates.fpr,
        "fnr": report.rates.fnr,
        "accuracy": report.rates.accuracy,
    }));
    m.finish(s, &beside(&report_out))?;
    println!(
        "rows {}  AUC {:.4}  FPR {}  FNR {}  accuracy {}",
        report.rows,
        report.roc.auc,
        pct(report.rates.fpr),
        pct(report.rates.fnr),
        pct(report.rates.accuracy)
    );
    Ok(())
}

fn importance(a: ImportanceArgs, s: &mut Settings, exec: Execution) -> Result<()> {
    let features: PathBuf = s.required("features", a.features)?;
    let bins = s.get("bins", a.bins, DEFAULT_MI_BINS)?;
    if bins == 0 {
        bail!("--bins must be at least 1");
    }
    let out: PathBuf = s.required("out", a.out)?;
    let mut m = Manifest::new("importance");
    let data = load_features(&features, &mut m)?;
    let ranking = rank_features(&data, bins, exec)?;
    ranking.write_csv(create(&out)?)?;
    m.output(&out)?;
    m.summary(json!({ "top": ranking.entries.iter().take(5).map(|e| &e.feature).collect::<Vec<_>>() }));
    m.finish(s, &beside(&out))?;
    for (i, e) in ranking.entries.iter().enumerate() {
        println!("{:>3}  {:<24} {:.6}", i + 1, e.feature, e.mi);
    }
    Ok(())
}

fn spectrogram(a: SpectrogramArgs, s: &mut Settings) -> Result<()> {
    let tx_path: PathBuf = s.required("transactions", a.transactions)?;
    let customer: String = s.required("customer", a.customer)?;
    let (horizon, channel) = horizon(a.horizon, s, &tx_path)?;
    let cfg = stft_config(a.stft, s)?;
    let format = s.get("format", a.format, ExportFormat::Csv)?;
    let out: PathBuf = s.required("out", a.out)?;

    let mut m = Manifest::new("spectrogram");
    m.input(&tx_path)?;
    let parsed = parse_transactions(&tx_path, &horizon)?;
    let mine: Vec<_> = parsed.records.into_iter().filter(|r| r.customer_id == customer).collect();
    if mine.is_empty() {
        bail!(tfaml::Error::Config(format!("customer {customer:?} has no transactions in the horizon")));
    }
    let series = aggregate_daily(&mine, &horizon, channel.as_deref())?
        .remove(&customer)
        .unwrap_or_else(|| TransactionSeries::zeros(customer.as_str(), &horizon));
    let spec = stft(&series, &cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    export_spectrogram(&spec, &out, format)?;
    m.output(&out)?;
    m.summary(json!({ "frames": spec.frames(), "bins": spec.bins() }));
    m.finish(s, &beside(&out))?;
    eprintln!("spectrogram: {} frames x {} bins -> {}", spec.frames(), spec.bins(), out.display());
    Ok(())
}
