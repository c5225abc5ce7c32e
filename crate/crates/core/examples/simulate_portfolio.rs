//! Simulates a portfolio under a surrender profile and prints the per-year
//! observation counts and surrender rates, split into train and test years.
//!
//! cargo run --release --example simulate_portfolio -- [profile.toml] [seed]

use std::path::PathBuf;

use surrender_lab::lab::pipeline::{prepare, yearly_review, SimulationSpec};
use surrender_lab::surrender::SurrenderProfile;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("profiles/profile2.toml"));
    let seed: u64 = args.next().map_or(Ok(1), |s| s.parse())?;

    let profile = SurrenderProfile::load(&path)?;
    let prep = prepare(&profile, &SimulationSpec::default(), 0.7, seed)?;
    println!(
        "{}: intercept calibrated to {:.4}, {} observations",
        profile.name,
        prep.profile.intercept,
        prep.raw.len()
    );
    println!("year  observations  rate    set");
    for (year, (n, rate)) in yearly_review(&prep.raw) {
        let set = if year <= prep.split_year { "train" } else { "test" };
        println!("{year:>4}  {n:>12}  {rate:.4}  {set}");
    }
    println!(
        "train {} ({:.4} surrendered), test {} ({:.4})",
        prep.train.len(),
        prep.train.imbalance(),
        prep.test.len(),
        prep.test.imbalance()
    );
    Ok(())
}
