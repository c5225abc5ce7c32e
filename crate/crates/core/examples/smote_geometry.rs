//! SMOTE on a tiny two-feature minority class: every synthetic point sits on
//! the segment between a minority record and one of its nearest neighbours.
//!
//! cargo run --example smote_geometry

use surrender_lab::resampling::{smote_traced, ResamplePlan, Scheme};
use surrender_lab::surrender::{Dataset, ObservationRecord, N_COLUMNS};

fn record(id: u64, age: f64, premium: f64, y: u8) -> ObservationRecord {
    let mut x = [0.0; N_COLUMNS];
    x[1] = age;
    x[9] = premium;
    ObservationRecord {
        policy_id: id,
        calendar_year: 0,
        x,
        y,
        true_p: None,
        synthetic: false,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let minority = [(25.0, 900.0), (27.0, 1_100.0), (31.0, 950.0), (45.0, 2_000.0), (48.0, 2_300.0)];
    let mut records: Vec<_> = minority
        .iter()
        .enumerate()
        .map(|(i, &(a, p))| record(i as u64, a, p, 1))
        .collect();
    records.extend((0..20).map(|i| record(100 + i, 30.0 + i as f64, 1_000.0 + 40.0 * i as f64, 0)));
    let data = Dataset::new(records);

    let mut plan = ResamplePlan::new(Scheme::Smote, 4);
    plan.smote_k = 2;
    plan.target_minority_share = 0.4;
    let (out, origins) = smote_traced(&data, &plan, &[1, 9], &mut plan.stream())?;

    println!("synthetic point          base -> neighbour     u");
    for (r, o) in out.records.iter().filter(|r| r.synthetic).zip(&origins) {
        let (a, b) = (&data.records[o.base], &data.records[o.neighbour]);
        println!(
            "({:5.2}, {:7.2})   ({}, {}) -> ({}, {})   {:.3}",
            r.x[1], r.x[9], a.x[1], a.x[9], b.x[1], b.x[9], o.u
        );
    }
    println!("minority share {:.3} -> {:.3}", data.imbalance(), out.imbalance());
    Ok(())
}
