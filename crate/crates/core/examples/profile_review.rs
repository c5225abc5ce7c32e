//! Yearly surrender rates and data sizes for each shipped profile, plus a
//! quick model comparison on desk-scale data.
//!
//! cargo run --release --example profile_review -- [n0] [horizon] [seeds] [profile|0] [--no-models]

use std::time::Instant;

use surrender_lab::classifiers::{presets, ModelKind};
use surrender_lab::evaluation::latent_error_stats;
use surrender_lab::lab::pipeline::{fit, predict, prepare, yearly_review, SimulationSpec};
use surrender_lab::surrender::SurrenderProfile;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let n0 = args.first().map_or(Ok(30_000), |a| a.parse())?;
    let horizon = args.get(1).map_or(Ok(15), |a| a.parse())?;
    let seeds: u64 = args.get(2).map_or(Ok(1), |a| a.parse())?;
    let only: Option<u8> = args.get(3).map(|a| a.parse()).transpose()?.filter(|&o| o != 0);
    let models = args.get(4).is_none_or(|a| a != "--no-models");
    let spec = SimulationSpec {
        n0,
        horizon,
        ..SimulationSpec::default()
    };
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("profiles");
    for id in presets::PROFILES {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let profile = SurrenderProfile::load(&dir.join(format!("profile{id}.toml")))?;
        for seed in 0..seeds {
            let t = Instant::now();
            let prep = prepare(&profile, &spec, 0.7, seed)?;
            let sim_time = t.elapsed();
            let rates: Vec<String> = yearly_review(&prep.raw)
                .values()
                .map(|(_, r)| format!("{r:.3}"))
                .collect();
            println!(
                "profile {id} seed {seed}: n={} train={} test={} split={} imbalance={:.4} sim={:.2?} b0={:.3}\n  rates [{}]",
                prep.raw.len(),
                prep.train.len(),
                prep.test.len(),
                prep.split_year,
                prep.train.imbalance(),
                sim_time,
                prep.profile.intercept,
                rates.join(" ")
            );
            if !models {
                continue;
            }
            let cols = prep.columns();
            let truth = prep.test.true_probabilities().expect("simulated data carries latent p");
            for kind in [ModelKind::Baseline, ModelKind::LogisticBag, ModelKind::RandomForest, ModelKind::Gbt] {
                let t = Instant::now();
                let spec = presets::spec(kind, id).expect("preset");
                let model = fit(&spec, &prep.train, &cols, seed)?;
                let p = predict(&model, &prep.test, &cols)?;
                let s = latent_error_stats(&truth, &p)?;
                println!(
                    "  {:>14}: mae={:.5} signed={:+.5} ({:.2?})",
                    kind.as_str(),
                    s.mae,
                    s.mean_signed_error,
                    t.elapsed()
                );
            }
        }
    }
    Ok(())
}
