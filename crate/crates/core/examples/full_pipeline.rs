//! Runs simulate, train, evaluate and the bias study from a config file, then
//! checks every manifest against the files on disk.
//!
//! cargo run --release --example full_pipeline -- [config.toml]

use std::path::PathBuf;

use surrender_lab::lab::{self, ExperimentConfig, Overrides};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/desk.toml"));
    let out = tempfile::tempdir()?;
    let mut cfg = ExperimentConfig::load(&config)?;
    Overrides {
        out: Some(out.path().to_path_buf()),
        resample: Some("rus".into()),
        ..Overrides::default()
    }
    .apply(&mut cfg);

    for (name, run) in [
        ("simulate", lab::cmd_simulate as fn(&ExperimentConfig) -> _),
        ("train", lab::cmd_train),
        ("evaluate", lab::cmd_evaluate),
        ("bias_study", lab::cmd_bias_study),
    ] {
        let manifest = run(&cfg)?;
        let stale = manifest.verify(out.path())?;
        println!("{name:<10} {} files, config {}, stale {:?}", manifest.files.len(), &manifest.config_hash[..12], stale);
    }
    print!("{}", std::fs::read_to_string(out.path().join("reports/bias_study.csv"))?);
    Ok(())
}
