//! Logistic regression fitted on balanced data overstates surrender
//! probabilities; shifting the odds back by the change in base rate repairs it.
//!
//! cargo run --release --example resampling_bias -- [seed]

use surrender_lab::classifiers::{presets, ModelKind};
use surrender_lab::evaluation::{cross_entropy, latent_error_stats};
use surrender_lab::lab::pipeline::{fit, predict, prepare, resample_train, SimulationSpec};
use surrender_lab::resampling::{ResamplePlan, Scheme};
use surrender_lab::surrender::SurrenderProfile;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(3), |s| s.parse())?;
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let profile = SurrenderProfile::load(&dir.join("profiles/profile1.toml"))?;
    let prep = prepare(&profile, &SimulationSpec::desk(), 0.7, seed)?;
    let cols = prep.columns();
    let spec = presets::spec(ModelKind::LogisticBag, 1).expect("preset");
    let truth = prep.test.true_probabilities().expect("simulated data");
    let labels = prep.test.labels();

    let report = |name: &str, p: &[f64]| -> Result<(), Box<dyn std::error::Error>> {
        let s = latent_error_stats(&truth, p)?;
        println!(
            "{name:<28} mae {:.4}  signed {:+.4}  cross-entropy {:.4}",
            s.mae,
            s.mean_signed_error,
            cross_entropy(&labels, p)?
        );
        Ok(())
    };

    let plain = fit(&spec, &prep.train, &cols, seed)?;
    report("no resampling", &predict(&plain, &prep.test, &cols)?)?;

    for scheme in Scheme::ALL {
        let (train, summary) = resample_train(&prep.train, &ResamplePlan::new(scheme, seed), &cols)?;
        let model = fit(&spec, &train, &cols, seed)?;
        let p = predict(&model, &prep.test, &cols)?;
        report(scheme.as_str(), &p)?;
        report(&format!("{} corrected", scheme.as_str()), &summary.correct(&p))?;
    }
    Ok(())
}
