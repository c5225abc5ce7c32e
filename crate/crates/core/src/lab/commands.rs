//! The four lab commands. Each reads its inputs from the output directory
//! written by earlier stages, writes its own files, and finishes with a
//! manifest. On error nothing it wrote is left behind.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::manifest::{sha256_hex, ModelFailure, OutputWriter, RunManifest, CODE_VERSION};
use super::pipeline::{self, apply_scaler, fit, model_columns, predict, resample_train, ResampleSummary};
use super::LabError;
use crate::classifiers::{persistence, ModelKind, TrainedModel};
use crate::evaluation::{
    band_series, confusion_metrics, pp_scatter_export, summarize, write_bands_csv, ConfusionMetrics,
    EvaluationSummary,
};
use crate::resampling::{ResamplePlan, Scheme};
use crate::rng;
use crate::surrender::{Dataset, Scaler, SurrenderProfile};

const DATA: &str = "data";
const MODELS: &str = "models";
const REPORTS: &str = "reports";

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub models: Option<Vec<String>>,
    /// A scheme name, or `none` to disable resampling.
    pub resample: Option<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &self.out {
            // relative to the working directory, not the config file
            cfg.out_dir = std::path::absolute(o).unwrap_or_else(|_| o.clone());
        }
        if let Some(m) = &self.models {
            cfg.models.roster = m.clone();
        }
        match self.resample.as_deref() {
            None => {}
            Some("none") => cfg.resampling = None,
            Some(s) => {
                let mut r = cfg.resampling.clone().unwrap_or(super::config::ResamplingSection {
                    scheme: String::new(),
                    target_minority_share: 0.5,
                    smote_k: 5,
                });
                r.scheme = s.to_string();
                cfg.resampling = Some(r);
            }
        }
    }
}

fn train_seed(master: u64, kind: ModelKind) -> u64 {
    let id = ModelKind::ALL.iter().position(|&k| k == kind).expect("kind listed") as u64;
    rng::derive_seed(master, "train", &[id])
}

fn resample_seed(plan: &ResamplePlan) -> u64 {
    let id = Scheme::ALL.iter().position(|&s| s == plan.scheme).expect("scheme listed") as u64;
    rng::derive_seed(plan.seed, "resample", &[id])
}

/// Hash of the configuration as it affects results; the output location is
/// left out so the same experiment hashes alike wherever it is written.
fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.out_dir = PathBuf::new();
    c.profile.path = PathBuf::new();
    sha256_hex(c.canonical().as_bytes())
}

fn manifest(cfg: &ExperimentConfig, command: &str, profile: &SurrenderProfile) -> Result<RunManifest, LabError> {
    Ok(RunManifest {
        command: command.to_string(),
        code_version: CODE_VERSION.to_string(),
        config_hash: config_hash(cfg),
        profile_hash: sha256_hex(profile.to_toml().as_bytes()),
        master_seed: cfg.seed()?,
        stage_seeds: BTreeMap::new(),
        files: Vec::new(),
        failures: Vec::new(),
        resampling: None,
    })
}

fn csv_bytes(d: &Dataset, provenance: bool) -> Result<Vec<u8>, LabError> {
    let mut buf = Vec::new();
    d.write_csv(&mut buf, provenance)?;
    Ok(buf)
}

/// Sizes and rates written next to the datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub total_observations: usize,
    pub train_observations: usize,
    pub test_observations: usize,
    pub train_surrenders: usize,
    pub test_surrenders: usize,
    pub train_imbalance: f64,
    pub test_imbalance: f64,
    pub first_year: u32,
    pub split_year: u32,
    pub last_year: u32,
    pub calibrated_intercept: f64,
}

fn review_csv(raw: &Dataset, split_year: u32) -> Result<Vec<u8>, LabError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["calendar_year", "observations", "surrenders", "rate", "set"])
        .map_err(crate::surrender::SurrenderError::from)?;
    let counts = raw.records_per_year();
    let rates = raw.yearly_rates();
    for (year, n) in counts {
        let rate = rates[&year];
        let set = if year <= split_year { "train" } else { "test" };
        let surrenders = (rate * n as f64).round() as usize;
        w.write_record([
            year.to_string(),
            n.to_string(),
            surrenders.to_string(),
            rate.to_string(),
            set.to_string(),
        ])
        .map_err(crate::surrender::SurrenderError::from)?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

/// Simulates the portfolio and writes raw, train and test data, the scaler,
/// the calibrated profile and a per-year review.
pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<RunManifest, LabError> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let profile = cfg.load_profile()?;
    let sim = pipeline::simulate(&profile, &cfg.simulation(), seed)?;
    let (train, test) = crate::surrender::split_in_time(&sim.raw, cfg.split.share)?;
    let split_year = train.split_year.expect("split sets the split year");
    let (_, _, scaler) = crate::surrender::preprocess(&train, &test)?;
    let years = sim.raw.records_per_year();
    let summary = DataSummary {
        total_observations: sim.raw.len(),
        train_observations: train.len(),
        test_observations: test.len(),
        train_surrenders: train.positives(),
        test_surrenders: test.positives(),
        train_imbalance: train.imbalance(),
        test_imbalance: test.imbalance(),
        first_year: *years.keys().next().expect("non-empty simulation"),
        split_year,
        last_year: *years.keys().next_back().expect("non-empty simulation"),
        calibrated_intercept: sim.profile.intercept,
    };
    log::info!(
        "simulated {} observations ({} train / {} test, split after year {split_year})",
        summary.total_observations,
        summary.train_observations,
        summary.test_observations
    );

    let mut out = OutputWriter::new(&cfg.out_dir())?;
    out.write(&format!("{DATA}/raw.csv"), &csv_bytes(&sim.raw, false)?)?;
    out.write(&format!("{DATA}/train.csv"), &csv_bytes(&train, false)?)?;
    out.write(&format!("{DATA}/test.csv"), &csv_bytes(&test, false)?)?;
    out.write_json(&format!("{DATA}/scaler.json"), &scaler)?;
    out.write(&format!("{DATA}/profile.toml"), sim.profile.to_toml().as_bytes())?;
    out.write(&format!("{DATA}/review.csv"), &review_csv(&sim.raw, split_year)?)?;
    out.write_json(&format!("{DATA}/summary.json"), &summary)?;

    let mut m = manifest(cfg, "simulate", &profile)?;
    for stage in ["contract", "death", "surrender", "tie"] {
        m.stage_seeds.insert(stage.to_string(), seed);
    }
    out.commit(m)
}

/// Persisted outputs of `simulate`, scaled for modelling.
#[derive(Debug, Clone)]
pub struct StoredData {
    pub profile: SurrenderProfile,
    pub train: Dataset,
    pub test: Dataset,
    pub scaler: Scaler,
    pub summary: DataSummary,
}

impl StoredData {
    pub fn columns(&self) -> Vec<usize> {
        model_columns(&self.profile)
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, LabError> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| LabError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn read_dataset(path: &Path) -> Result<Dataset, LabError> {
    let f = fs::File::open(path).map_err(|e| LabError::io(path, e))?;
    Dataset::read_csv(std::io::BufReader::new(f)).map_err(|e| LabError::Format {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn load_data(out_dir: &Path) -> Result<StoredData, LabError> {
    let dir = out_dir.join(DATA);
    let profile = SurrenderProfile::load(&dir.join("profile.toml"))?;
    let scaler: Scaler = read_json(&dir.join("scaler.json"))?;
    let summary: DataSummary = read_json(&dir.join("summary.json"))?;
    let split = Some(summary.split_year);
    let train = apply_scaler(&read_dataset(&dir.join("train.csv"))?, &scaler, split)?;
    let test = apply_scaler(&read_dataset(&dir.join("test.csv"))?, &scaler, split)?;
    Ok(StoredData {
        profile,
        train,
        test,
        scaler,
        summary,
    })
}

fn model_file(kind: ModelKind) -> String {
    format!("{MODELS}/{}.json", kind.as_str())
}

/// Trains every model in the roster on the (optionally resampled) training
/// data. A failing model is listed in the manifest; the others proceed.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<RunManifest, LabError> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let root = cfg.out_dir();
    let data = load_data(&root)?;
    let columns = data.columns();
    let mut m = manifest(cfg, "train", &data.profile)?;
    let mut out = OutputWriter::new(&root)?;

    let (train, resampled) = match cfg.resample_plan()? {
        Some(plan) => {
            let (d, summary) = resample_train(&data.train, &plan, &columns)?;
            log::info!(
                "{} resampling: {} -> {} records, minority share {:.4} -> {:.4}",
                plan.scheme,
                summary.original_size,
                summary.resampled_size,
                summary.original_rate,
                summary.resampled_rate
            );
            m.stage_seeds.insert("resample".into(), resample_seed(&plan));
            out.write_json(&format!("{MODELS}/resampling.json"), &summary)?;
            (d, Some(summary))
        }
        None => (data.train.clone(), None),
    };
    m.resampling = resampled;

    let mut trained = 0;
    for kind in cfg.model_kinds()? {
        let spec = cfg.model_spec(kind)?;
        let s = train_seed(seed, kind);
        m.stage_seeds.insert(format!("train.{}", kind.as_str()), s);
        let started = std::time::Instant::now();
        match fit(&spec, &train, &columns, s) {
            Ok(model) => {
                log::info!("trained {kind} in {:.2?}", started.elapsed());
                let json = persistence::to_json(&model)?;
                out.write(&model_file(kind), json.as_bytes())?;
                trained += 1;
            }
            Err(e) => {
                log::error!("training {kind} failed: {e}");
                m.failures.push(ModelFailure {
                    model: kind.as_str().to_string(),
                    message: e.to_string(),
                });
            }
        }
    }
    if trained == 0 {
        let list = m
            .failures
            .iter()
            .map(|f| format!("{}: {}", f.model, f.message))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(LabError::AllModelsFailed(list));
    }
    out.commit(m)
}

/// Report entry for one model on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub model: String,
    pub split: String,
    pub summary: EvaluationSummary,
    /// Confusion metrics at every configured threshold.
    pub thresholds: Vec<ConfusionMetrics>,
}

fn evaluate_split(
    model: &str,
    split: &str,
    d: &Dataset,
    predicted: &[f64],
    thresholds: &[f64],
) -> Result<MetricsRow, LabError> {
    let labels = d.labels();
    let truth = d.true_probabilities();
    if truth.is_none() {
        log::warn!("{split} data lacks latent probabilities; latent statistics skipped for {model}");
    }
    let summary = summarize(&labels, predicted, truth.as_deref(), thresholds[0])?;
    let thresholds = thresholds
        .iter()
        .map(|&t| confusion_metrics(&labels, predicted, t))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MetricsRow {
        model: model.to_string(),
        split: split.to_string(),
        summary,
        thresholds,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metrics_csv(rows: &[MetricsRow], thresholds: &[f64]) -> Result<Vec<u8>, LabError> {
    let mut header: Vec<String> = [
        "model",
        "split",
        "n",
        "observed_rate",
        "mean_prediction",
        "roc_auc",
        "pr_auc",
        "cross_entropy",
        "mae",
        "variance",
        "mean_signed_error",
    ]
    .map(String::from)
    .to_vec();
    for t in thresholds {
        for m in ["accuracy", "precision", "recall", "f1"] {
            header.push(format!("{m}@{t}"));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = crate::surrender::SurrenderError::from;
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let s = &r.summary;
        let mut rec = vec![
            r.model.clone(),
            r.split.clone(),
            s.n.to_string(),
            s.observed_rate.to_string(),
            s.mean_prediction.to_string(),
            opt(s.roc_auc),
            opt(s.pr_auc),
            s.cross_entropy.to_string(),
            opt(s.latent.map(|l| l.mae)),
            opt(s.latent.map(|l| l.variance)),
            opt(s.latent.map(|l| l.mean_signed_error)),
        ];
        for c in &r.thresholds {
            rec.extend([opt(c.accuracy), opt(c.precision), opt(c.recall), opt(c.f1)]);
        }
        w.write_record(&rec).map_err(err)?;
    }
    Ok(w.into_inner().expect("in-memory writer"))
}

fn load_models(cfg: &ExperimentConfig, root: &Path) -> Result<Vec<TrainedModel>, LabError> {
    let mut models = Vec::new();
    for kind in cfg.model_kinds()? {
        let path = root.join(model_file(kind));
        if !path.exists() {
            log::warn!("no trained {kind} model at {}; skipped", path.display());
            continue;
        }
        models.push(persistence::load(&path)?);
    }
    if models.is_empty() {
        return Err(LabError::config("models.roster", "no trained model found; run `train` first"));
    }
    Ok(models)
}

/// Metrics on train and test, yearly bands over all calendar years and
/// p / p-hat scatter data on the test set.
pub fn cmd_evaluate(cfg: &ExperimentConfig) -> Result<RunManifest, LabError> {
    cfg.validate()?;
    let root = cfg.out_dir();
    let data = load_data(&root)?;
    let columns = data.columns();
    let models = load_models(cfg, &root)?;
    let resampling_path = root.join(MODELS).join("resampling.json");
    let resampling: Option<ResampleSummary> = if resampling_path.exists() {
        Some(read_json(&resampling_path)?)
    } else {
        None
    };
    let ev = &cfg.evaluation;
    let mut m = manifest(cfg, "evaluate", &data.profile)?;
    m.resampling = resampling.clone();
    let mut out = OutputWriter::new(&root)?;
    let mut rows = Vec::new();

    for model in &models {
        let name = model.kind().as_str().to_string();
        let p_train = predict(model, &data.train, &columns)?;
        let p_test = predict(model, &data.test, &columns)?;
        let mut variants = vec![(name.clone(), p_train, p_test)];
        if let (Some(r), true) = (&resampling, ev.bias_correction) {
            let (a, b) = (r.correct(&variants[0].1), r.correct(&variants[0].2));
            variants.push((format!("{name}_corrected"), a, b));
        }
        for (label, p_train, p_test) in variants {
            rows.push(evaluate_split(&label, "train", &data.train, &p_train, &ev.thresholds)?);
            rows.push(evaluate_split(&label, "test", &data.test, &p_test, &ev.thresholds)?);

            let years: Vec<u32> = data
                .train
                .records
                .iter()
                .chain(&data.test.records)
                .map(|r| r.calendar_year)
                .collect();
            let mut labels = data.train.labels();
            labels.extend(data.test.labels());
            let predicted: Vec<f64> = p_train.iter().chain(&p_test).copied().collect();
            let bands = band_series(&years, &labels, &predicted, ev.level)?;
            let mut buf = Vec::new();
            write_bands_csv(&bands, &mut buf)?;
            out.write(&format!("{REPORTS}/bands_{label}.csv"), &buf)?;

            if let Some(truth) = data.test.true_probabilities() {
                let mut buf = Vec::new();
                pp_scatter_export(&truth, &p_test, &mut buf)?;
                out.write(&format!("{REPORTS}/pp_{label}.csv"), &buf)?;
            }
        }
    }
    out.write(&format!("{REPORTS}/metrics.csv"), &metrics_csv(&rows, &ev.thresholds)?)?;
    out.write_json(&format!("{REPORTS}/metrics.json"), &rows)?;
    out.commit(m)
}

/// One line of the bias study: the study model under one resampling variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasStudyRow {
    pub model: String,
    /// `none` or a resampling scheme.
    pub resampling: String,
    pub corrected: bool,
    pub train_size: usize,
    pub train_rate: f64,
    pub threshold: f64,
    pub f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub cross_entropy: f64,
    pub mae: Option<f64>,
    pub mean_signed_error: Option<f64>,
}

/// Trains the study model with and without each resampling scheme and
/// reports the test metrics side by side.
pub fn cmd_bias_study(cfg: &ExperimentConfig) -> Result<RunManifest, LabError> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let ev = &cfg.evaluation;
    let kind: ModelKind = ev.study_model.parse().map_err(|e: String| LabError::config("evaluation.study_model", e))?;
    let spec = cfg.model_spec(kind)?;
    let profile = cfg.load_profile()?;
    let prep = pipeline::prepare(&profile, &cfg.simulation(), cfg.split.share, seed)?;
    let columns = prep.columns();
    let (share, k) = cfg
        .resampling
        .as_ref()
        .map_or((0.5, 5), |r| (r.target_minority_share, r.smote_k));
    let mut m = manifest(cfg, "bias_study", &profile)?;
    let mut out = OutputWriter::new(&cfg.out_dir())?;
    let truth = prep.test.true_probabilities();
    let labels = prep.test.labels();
    let threshold = ev.thresholds[0];
    let s = train_seed(seed, kind);
    m.stage_seeds.insert(format!("train.{}", kind.as_str()), s);

    let mut rows = Vec::new();
    let mut record = |variant: &str, corrected: bool, train: &Dataset, p: &[f64], out: &mut OutputWriter| -> Result<(), LabError> {
        let summary = summarize(&labels, p, truth.as_deref(), threshold)?;
        let tag = if corrected { format!("{variant}_corrected") } else { variant.to_string() };
        if let Some(t) = &truth {
            let mut buf = Vec::new();
            pp_scatter_export(t, p, &mut buf)?;
            out.write(&format!("{REPORTS}/pp_bias_{tag}.csv"), &buf)?;
        }
        rows.push(BiasStudyRow {
            model: kind.as_str().to_string(),
            resampling: variant.to_string(),
            corrected,
            train_size: train.len(),
            train_rate: train.imbalance(),
            threshold,
            f1: summary.metrics.f1,
            accuracy: summary.metrics.accuracy,
            cross_entropy: summary.cross_entropy,
            mae: summary.latent.map(|l| l.mae),
            mean_signed_error: summary.latent.map(|l| l.mean_signed_error),
        });
        Ok(())
    };

    let plain = fit(&spec, &prep.train, &columns, s)?;
    let p = predict(&plain, &prep.test, &columns)?;
    record("none", false, &prep.train, &p, &mut out)?;

    for scheme in Scheme::ALL {
        let plan = ResamplePlan {
            scheme,
            target_minority_share: share,
            smote_k: k,
            seed,
        };
        m.stage_seeds.insert(format!("resample.{}", scheme.as_str()), resample_seed(&plan));
        let (train, summary) = resample_train(&prep.train, &plan, &columns)?;
        let model = fit(&spec, &train, &columns, s)?;
        let p = predict(&model, &prep.test, &columns)?;
        record(scheme.as_str(), false, &train, &p, &mut out)?;
        record(scheme.as_str(), true, &train, &summary.correct(&p), &mut out)?;
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(crate::surrender::SurrenderError::from)?;
    }
    out.write(&format!("{REPORTS}/bias_study.csv"), &w.into_inner().expect("in-memory writer"))?;
    out.write_json(&format!("{REPORTS}/bias_study.json"), &rows)?;
    out.commit(m)
}
