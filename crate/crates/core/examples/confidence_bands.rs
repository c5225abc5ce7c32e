//! Yearly 0.95 bands around predicted surrender rates on the drifting profile:
//! the latent probabilities track the observed rate, the constant baseline
//! misses it once behaviour shifts.
//!
//! cargo run --release --example confidence_bands -- [seed]

use surrender_lab::classifiers::ModelSpec;
use surrender_lab::evaluation::{band_series, BandPoint};
use surrender_lab::lab::pipeline::{fit, predict, prepare, SimulationSpec};
use surrender_lab::surrender::SurrenderProfile;

fn show(title: &str, bands: &[BandPoint]) {
    println!("{title}");
    for b in bands {
        let mark = if b.covers_observed() { "" } else { "  <- outside" };
        println!(
            "  {:>2}  [{:.4}, {:.4}]  observed {:.4}{mark}",
            b.calendar_year, b.lower, b.upper, b.observed_rate
        );
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed: u64 = std::env::args().nth(1).map_or(Ok(0), |s| s.parse())?;
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
    let profile = SurrenderProfile::load(&dir.join("profiles/profile4.toml"))?;
    let prep = prepare(&profile, &SimulationSpec::desk(), 0.7, seed)?;

    let years: Vec<u32> = prep.test.records.iter().map(|r| r.calendar_year).collect();
    let labels = prep.test.labels();
    let truth = prep.test.true_probabilities().expect("simulated data");
    show("latent probabilities", &band_series(&years, &labels, &truth, 0.95)?);

    let cols = prep.columns();
    let baseline = fit(&ModelSpec::Baseline, &prep.train, &cols, seed)?;
    let p = predict(&baseline, &prep.test, &cols)?;
    show("constant baseline", &band_series(&years, &labels, &p, 0.95)?);
    Ok(())
}
