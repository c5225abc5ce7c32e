//! Trains the four model families with their tuned presets, saves them as
//! JSON, reloads them and compares test errors against the latent
//! probabilities.
//!
//! cargo run --release --example train_models -- [seed]

use surrender_lab::classifiers::{persistence, presets, ModelKind};
use surrender_lab::evaluation::summarize;
use surrender_lab::lab::pipeline::{fit, predict, prepare, SimulationSpec};
use surrender_lab::surrender::SurrenderProfile;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(1), |s| s.parse())?;
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let profile = SurrenderProfile::load(&dir.join("profiles/profile1.toml"))?;
    let prep = prepare(&profile, &SimulationSpec::desk(), 0.7, seed)?;
    let cols = prep.columns();
    let truth = prep.test.true_probabilities();
    let store = tempfile::tempdir()?;

    println!("model           roc-auc  cross-entropy  mae     variance");
    for kind in [ModelKind::Baseline, ModelKind::LogisticBag, ModelKind::RandomForest, ModelKind::Gbt] {
        let spec = presets::spec(kind, 1).expect("preset");
        let path = store.path().join(format!("{kind}.json"));
        persistence::save(&fit(&spec, &prep.train, &cols, seed)?, &path)?;

        let model = persistence::load(&path)?;
        let p = predict(&model, &prep.test, &cols)?;
        let s = summarize(&prep.test.labels(), &p, truth.as_deref(), 0.5)?;
        let latent = s.latent.expect("simulated data carries latent p");
        println!(
            "{:<15} {:>7}  {:>13.4}  {:.4}  {:.6}",
            kind.as_str(),
            s.roc_auc.map_or("-".into(), |a| format!("{a:.4}")),
            s.cross_entropy,
            latent.mae,
            latent.variance
        );
    }
    Ok(())
}
