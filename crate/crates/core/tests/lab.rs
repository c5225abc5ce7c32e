use std::fs;
use std::path::Path;

use surrender_lab::lab::commands::{load_data, MetricsRow};
use surrender_lab::lab::pipeline::{prepare, SimulationSpec};
use surrender_lab::lab::{self, ExperimentConfig, LabError, RunManifest};
use surrender_lab::resampling::Scheme;
use surrender_lab::surrender::Dataset;

fn config(out: &Path, extra: &str) -> ExperimentConfig {
    let profile = Path::new(env!("CARGO_MANIFEST_DIR")).join("profiles/profile1.toml");
    let text = format!(
        "seed = 5\nout_dir = \"{}\"\n[profile]\npath = \"{}\"\n[portfolio]\nn0 = 1200\nhorizon = 6\n\
         [models.overrides.random_forest]\nn_estimators = 10\n[models.overrides.gbt]\nn_estimators = 30\n{extra}",
        out.display(),
        profile.display()
    );
    ExperimentConfig::parse(&text, "test").unwrap()
}

fn metrics(out: &Path) -> Vec<MetricsRow> {
    serde_json::from_str(&fs::read_to_string(out.join("reports/metrics.json")).unwrap()).unwrap()
}

#[test]
fn persisted_data_matches_in_memory_preparation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    lab::cmd_simulate(&cfg).unwrap();
    let stored = load_data(dir.path()).unwrap();
    let prep = prepare(&cfg.load_profile().unwrap(), &cfg.simulation(), 0.7, 5).unwrap();
    assert_eq!(stored.train, prep.train);
    assert_eq!(stored.test, prep.test);
    assert_eq!(stored.profile, prep.profile);
}

#[test]
fn simulate_reports_the_data_review() {
    let dir = tempfile::tempdir().unwrap();
    let m = lab::cmd_simulate(&config(dir.path(), "")).unwrap();
    let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    for f in ["data/raw.csv", "data/train.csv", "data/test.csv", "data/review.csv", "data/summary.json"] {
        assert!(names.contains(&f), "{f} missing from manifest");
    }
    let raw = Dataset::read_csv(fs::File::open(dir.path().join("data/raw.csv")).unwrap()).unwrap();
    let review = fs::read_to_string(dir.path().join("data/review.csv")).unwrap();
    // header plus one line per calendar year
    assert_eq!(review.lines().count(), raw.records_per_year().len() + 1);
    assert!(m.verify(dir.path()).unwrap().is_empty());
}

#[test]
fn baseline_roster_gives_one_model_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[models]\nroster = [\"baseline\"]\n");
    lab::cmd_simulate(&cfg).unwrap();
    let m = lab::cmd_train(&cfg).unwrap();
    assert_eq!(m.files.len(), 1);
    assert_eq!(m.files[0].path, "models/baseline.json");
}

#[test]
fn resampling_provenance_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[models]\nroster = [\"baseline\"]\n[resampling]\nscheme = \"ros\"\ntarget_minority_share = 0.3\n");
    lab::cmd_simulate(&cfg).unwrap();
    let m = lab::cmd_train(&cfg).unwrap();
    let r = m.resampling.expect("resampling recorded");
    assert_eq!(r.plan.scheme, Scheme::RandomOversample);
    assert_eq!(r.plan.target_minority_share, 0.3);
    assert!(r.resampled_size > r.original_size);
    assert!((r.resampled_rate - 0.3).abs() < 1e-3);
    assert!(m.stage_seeds.contains_key("resample"));
}

#[test]
fn evaluation_report_has_one_row_per_model_and_split() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[evaluation]\nthresholds = [0.5, 0.2, 0.01]\n");
    lab::cmd_simulate(&cfg).unwrap();
    lab::cmd_train(&cfg).unwrap();
    lab::cmd_evaluate(&cfg).unwrap();
    let rows = metrics(dir.path());
    assert_eq!(rows.len(), 8);
    let csv = fs::read_to_string(dir.path().join("reports/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 9);
    let baseline = rows.iter().find(|r| r.model == "baseline" && r.split == "test").unwrap();
    // 0.5 and 0.2 both exceed the constant prediction; 0.01 lies below it
    let acc: Vec<f64> = baseline.thresholds.iter().map(|t| t.accuracy.unwrap()).collect();
    assert_eq!(acc[0], acc[1]);
    assert_eq!(acc[2], baseline.summary.observed_rate);
    assert!(dir.path().join("reports/bands_gbt.csv").exists());
    assert!(dir.path().join("reports/pp_gbt.csv").exists());
}

#[test]
fn missing_latent_probabilities_only_disable_latent_stats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[models]\nroster = [\"baseline\", \"logistic\"]\n");
    lab::cmd_simulate(&cfg).unwrap();
    lab::cmd_train(&cfg).unwrap();
    let path = dir.path().join("data/test.csv");
    let mut test = Dataset::read_csv(fs::File::open(&path).unwrap()).unwrap();
    test.records.iter_mut().for_each(|r| r.true_p = None);
    test.write_csv(fs::File::create(&path).unwrap(), false).unwrap();

    lab::cmd_evaluate(&cfg).unwrap();
    for r in metrics(dir.path()) {
        assert_eq!(r.summary.latent.is_some(), r.split == "train", "{} {}", r.model, r.split);
    }
    assert!(!dir.path().join("reports/pp_baseline.csv").exists());
}

#[test]
fn failing_model_is_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[models]\nroster = [\"baseline\", \"logistic\"]\n[models.overrides.logistic_bag]\nmax_iter = 1\n",
    );
    lab::cmd_simulate(&cfg).unwrap();
    let m = lab::cmd_train(&cfg).unwrap();
    assert_eq!(m.failures.len(), 1);
    assert_eq!(m.failures[0].model, "logistic_bag");
    assert!(dir.path().join("models/baseline.json").exists());
    assert!(!dir.path().join("models/logistic_bag.json").exists());
}

#[test]
fn failed_command_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[models]\nroster = [\"logistic\"]\n[models.overrides.logistic_bag]\nmax_iter = 1\n[resampling]\nscheme = \"rus\"\n",
    );
    lab::cmd_simulate(&cfg).unwrap();
    let err = lab::cmd_train(&cfg).unwrap_err();
    assert!(matches!(err, LabError::AllModelsFailed(_)), "{err}");
    assert!(!dir.path().join("models/resampling.json").exists());
    assert!(!dir.path().join(RunManifest::file_name("train")).exists());
}

#[test]
fn stage_isolation_of_resampling() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let plain = config(a.path(), "[models]\nroster = [\"baseline\"]\n");
    let resampled = config(b.path(), "[models]\nroster = [\"baseline\"]\n[resampling]\nscheme = \"smote\"\n");
    let (ma, mb) = (lab::cmd_simulate(&plain).unwrap(), lab::cmd_simulate(&resampled).unwrap());
    let train = |m: &RunManifest| m.files.iter().find(|f| f.path == "data/train.csv").unwrap().sha256.clone();
    assert_eq!(train(&ma), train(&mb));
    assert_eq!(load_data(a.path()).unwrap().train, load_data(b.path()).unwrap().train);
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let extra = "[models]\nroster = [\"baseline\", \"gbt\"]\n";
    let run = |d: &Path| {
        let cfg = config(d, extra);
        [lab::cmd_simulate(&cfg).unwrap(), lab::cmd_train(&cfg).unwrap(), lab::cmd_evaluate(&cfg).unwrap()]
    };
    assert_eq!(run(a.path()), run(b.path()));
    for f in ["data/raw.csv", "models/gbt.json", "reports/metrics.csv", "manifest_evaluate.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn different_seed_changes_the_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let a = prepare(&cfg.load_profile().unwrap(), &SimulationSpec { n0: 300, horizon: 3, ..SimulationSpec::default() }, 0.7, 1).unwrap();
    let b = prepare(&cfg.load_profile().unwrap(), &SimulationSpec { n0: 300, horizon: 3, ..SimulationSpec::default() }, 0.7, 2).unwrap();
    assert_ne!(a.raw, b.raw);
}
