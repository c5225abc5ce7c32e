//! Class-rebalancing schemes and the closed-form bias they induce on
//! probability estimates.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::surrender::{Dataset, ObservationRecord};

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("target minority share must lie in (0, 1), got {0}")]
    InvalidShare(f64),
    #[error("smote_k must be at least 1")]
    InvalidNeighbours,
    #[error("dataset has no minority (y=1) records")]
    EmptyMinority,
    #[error("dataset has no majority (y=0) records")]
    EmptyMajority,
    #[error("smote needs more than {k} minority records, got {n}")]
    TooFewMinority { n: usize, k: usize },
    #[error("{scheme} cannot reach minority share {share}: current share is {current}")]
    Unreachable {
        scheme: Scheme,
        share: f64,
        current: f64,
    },
    #[error("{name} must lie strictly inside (0, 1), got {value}")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("no records with label {0}")]
    EmptyClass(u8),
    #[error("bins must be at least 1")]
    InvalidBins,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    RandomUndersample,
    RandomOversample,
    Smote,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Self::RandomUndersample, Self::RandomOversample, Self::Smote];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RandomUndersample => "random_undersample",
            Self::RandomOversample => "random_oversample",
            Self::Smote => "smote",
        }
    }

    fn stream_id(self) -> u64 {
        match self {
            Self::RandomUndersample => 0,
            Self::RandomOversample => 1,
            Self::Smote => 2,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random_undersample" | "undersample" | "rus" => Ok(Self::RandomUndersample),
            "random_oversample" | "oversample" | "ros" => Ok(Self::RandomOversample),
            "smote" => Ok(Self::Smote),
            other => Err(format!(
                "unknown resampling scheme '{other}' (expected random_undersample, random_oversample or smote)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResamplePlan {
    pub scheme: Scheme,
    #[serde(default = "default_share")]
    pub target_minority_share: f64,
    #[serde(default = "default_k")]
    pub smote_k: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_share() -> f64 {
    0.5
}

fn default_k() -> usize {
    5
}

impl ResamplePlan {
    pub fn new(scheme: Scheme, seed: u64) -> Self {
        Self {
            scheme,
            target_minority_share: default_share(),
            smote_k: default_k(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ResampleError> {
        let s = self.target_minority_share;
        if !(s > 0.0 && s < 1.0) {
            return Err(ResampleError::InvalidShare(s));
        }
        if self.smote_k < 1 {
            return Err(ResampleError::InvalidNeighbours);
        }
        Ok(())
    }

    /// The random stream consumed by [`resample`].
    pub fn stream(&self) -> rng::Stream {
        rng::stream(self.seed, "resample", &[self.scheme.stream_id()])
    }
}

/// Where a SMOTE point came from: `x + u (x̃ - x)` with `x` the minority record
/// at `base` and `x̃` the one at `neighbour` (indices into the input dataset).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoteOrigin {
    pub base: usize,
    pub neighbour: usize,
    pub u: f64,
}

fn class_indices(d: &Dataset) -> (Vec<usize>, Vec<usize>) {
    (0..d.len()).partition(|&i| d.records[i].y == 1)
}

fn with_records(template: &Dataset, records: Vec<ObservationRecord>) -> Dataset {
    Dataset {
        records,
        scaler: template.scaler.clone(),
        split_year: template.split_year,
    }
}

fn round_count(x: f64) -> usize {
    x.round() as usize
}

/// Random undersampling: every minority record is kept and majority records
/// are subsampled without replacement down to the target share. Input order
/// is preserved.
pub fn undersample<R: Rng + ?Sized>(
    dataset: &Dataset,
    plan: &ResamplePlan,
    rng: &mut R,
) -> Result<Dataset, ResampleError> {
    plan.validate()?;
    let (pos, neg) = class_indices(dataset);
    if pos.is_empty() {
        return Err(ResampleError::EmptyMinority);
    }
    let s = plan.target_minority_share;
    let keep = round_count(pos.len() as f64 * (1.0 - s) / s);
    if keep > neg.len() {
        return Err(ResampleError::Unreachable {
            scheme: Scheme::RandomUndersample,
            share: s,
            current: pos.len() as f64 / dataset.len() as f64,
        });
    }
    let mut chosen: Vec<usize> = index::sample(rng, neg.len(), keep)
        .into_iter()
        .map(|i| neg[i])
        .collect();
    chosen.extend_from_slice(&pos);
    chosen.sort_unstable();
    let records = chosen.into_iter().map(|i| dataset.records[i].clone()).collect();
    Ok(with_records(dataset, records))
}

fn minority_target(n_pos: usize, n_neg: usize, plan: &ResamplePlan, scheme: Scheme) -> Result<usize, ResampleError> {
    let s = plan.target_minority_share;
    let target = round_count(n_neg as f64 * s / (1.0 - s));
    if target < n_pos {
        return Err(ResampleError::Unreachable {
            scheme,
            share: s,
            current: n_pos as f64 / (n_pos + n_neg) as f64,
        });
    }
    Ok(target)
}

/// Random oversampling: the original data followed by minority records drawn
/// uniformly with replacement until the target share holds. Duplicates are
/// flagged as synthetic.
pub fn oversample<R: Rng + ?Sized>(
    dataset: &Dataset,
    plan: &ResamplePlan,
    rng: &mut R,
) -> Result<Dataset, ResampleError> {
    plan.validate()?;
    let (pos, neg) = class_indices(dataset);
    if pos.is_empty() {
        return Err(ResampleError::EmptyMinority);
    }
    let target = minority_target(pos.len(), neg.len(), plan, Scheme::RandomOversample)?;
    let mut records = dataset.records.clone();
    records.reserve(target - pos.len());
    for _ in pos.len()..target {
        let mut r = dataset.records[pos[rng.random_range(0..pos.len())]].clone();
        r.synthetic = true;
        records.push(r);
    }
    Ok(with_records(dataset, records))
}

fn squared_distance(a: &ObservationRecord, b: &ObservationRecord, columns: &[usize]) -> f64 {
    columns.iter().map(|&c| (a.x[c] - b.x[c]).powi(2)).sum()
}

/// The `k` nearest minority neighbours (excluding the point itself) of every
/// minority record, by exact search. Ties go to the lower record index.
pub fn minority_neighbours(dataset: &Dataset, minority: &[usize], columns: &[usize], k: usize) -> Vec<Vec<usize>> {
    minority
        .par_iter()
        .map(|&i| {
            let mut cand: Vec<(f64, usize)> = minority
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| (squared_distance(&dataset.records[i], &dataset.records[j], columns), j))
                .collect();
            let k = k.min(cand.len());
            let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if k < cand.len() {
                cand.select_nth_unstable_by(k, by_dist);
                cand.truncate(k);
            }
            cand.sort_by(by_dist);
            cand.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// SMOTE with provenance of every synthetic row, in output order.
///
/// Neighbours are searched on `columns`; interpolation applies to all stored
/// columns. Synthetic rows inherit the base record's id and calendar year and
/// carry no latent probability.
pub fn smote_traced<R: Rng + ?Sized>(
    dataset: &Dataset,
    plan: &ResamplePlan,
    columns: &[usize],
    rng: &mut R,
) -> Result<(Dataset, Vec<SmoteOrigin>), ResampleError> {
    plan.validate()?;
    let (pos, neg) = class_indices(dataset);
    if pos.len() <= plan.smote_k {
        return Err(ResampleError::TooFewMinority {
            n: pos.len(),
            k: plan.smote_k,
        });
    }
    let target = minority_target(pos.len(), neg.len(), plan, Scheme::Smote)?;
    let neighbours = minority_neighbours(dataset, &pos, columns, plan.smote_k);

    let mut records = dataset.records.clone();
    let mut origins = Vec::with_capacity(target - pos.len());
    for _ in pos.len()..target {
        let m = rng.random_range(0..pos.len());
        let nb = &neighbours[m];
        let neighbour = nb[rng.random_range(0..nb.len())];
        let u: f64 = rng.random();
        let base = pos[m];
        let a = &dataset.records[base];
        let b = &dataset.records[neighbour];
        let mut r = a.clone();
        for c in 0..r.x.len() {
            r.x[c] = a.x[c] + u * (b.x[c] - a.x[c]);
        }
        r.y = 1;
        r.true_p = None;
        r.synthetic = true;
        records.push(r);
        origins.push(SmoteOrigin { base, neighbour, u });
    }
    Ok((with_records(dataset, records), origins))
}

pub fn smote<R: Rng + ?Sized>(
    dataset: &Dataset,
    plan: &ResamplePlan,
    columns: &[usize],
    rng: &mut R,
) -> Result<Dataset, ResampleError> {
    smote_traced(dataset, plan, columns, rng).map(|(d, _)| d)
}

/// Applies `plan` with its own seeded stream. `columns` drive the SMOTE
/// neighbour search and are ignored by the random schemes.
pub fn resample(dataset: &Dataset, plan: &ResamplePlan, columns: &[usize]) -> Result<Dataset, ResampleError> {
    let mut s = plan.stream();
    match plan.scheme {
        Scheme::RandomUndersample => undersample(dataset, plan, &mut s),
        Scheme::RandomOversample => oversample(dataset, plan, &mut s),
        Scheme::Smote => smote(dataset, plan, columns, &mut s),
    }
}

fn check_open(name: &'static str, value: f64) -> Result<(), ResampleError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(ResampleError::InvalidProbability { name, value })
    }
}

/// Probability that a model fitted on resampled data reports, given the
/// unbiased estimate `p_hat`, the original base rate and the resampled rate.
pub fn resample_map(p_hat: f64, base_rate: f64, resampled_rate: f64) -> Result<f64, ResampleError> {
    check_open("p_hat", p_hat)?;
    check_open("base_rate", base_rate)?;
    check_open("resampled_rate", resampled_rate)?;
    let num = p_hat * resampled_rate * (1.0 - base_rate);
    let den = base_rate * (1.0 - p_hat) + resampled_rate * (p_hat - base_rate);
    if den <= 0.0 {
        return Err(ResampleError::InvalidProbability {
            name: "denominator",
            value: den,
        });
    }
    Ok(num / den)
}

/// Recovers the unbiased probability from a prediction made by a model fitted
/// on perfectly balanced data. Exact inverse of `resample_map(., b, 0.5)`.
pub fn bias_correct(p_hat_s: f64, base_rate: f64) -> Result<f64, ResampleError> {
    check_open("p_hat_s", p_hat_s)?;
    check_open("base_rate", base_rate)?;
    Ok(base_rate / (base_rate + (1.0 - p_hat_s) * (1.0 - base_rate) / p_hat_s))
}

/// Bin edges at the deciles (for `bins` = 10) of the equal-weight mixture of
/// two samples, each edge halfway between the values it separates.
fn mixture_edges(a: &[f64], b: &[f64], bins: usize) -> Vec<f64> {
    let mut pooled: Vec<(f64, f64)> = a
        .iter()
        .map(|&v| (v, 0.5 / a.len() as f64))
        .chain(b.iter().map(|&v| (v, 0.5 / b.len() as f64)))
        .collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut edges = Vec::with_capacity(bins.saturating_sub(1));
    let mut cum = 0.0;
    let mut next = 1;
    for w in pooled.windows(2) {
        cum += w[0].1;
        // a quantile inside a run of ties moves to the end of the run
        if w[1].0 == w[0].0 {
            continue;
        }
        let reached = |k: usize| cum >= k as f64 / bins as f64 - 1e-12;
        if next < bins && reached(next) {
            edges.push(0.5 * (w[0].0 + w[1].0));
            while next < bins && reached(next) {
                next += 1;
            }
        }
    }
    edges
}

fn histogram(values: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut h = vec![0.0; edges.len() + 1];
    for &v in values {
        h[edges.partition_point(|&e| e <= v)] += 1.0;
    }
    let n = values.len() as f64;
    h.iter_mut().for_each(|c| *c /= n);
    h
}

/// Total-variation distance between two samples discretized into `bins`
/// quantile bins of their equal-weight mixture.
pub fn binned_tv(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let edges = mixture_edges(a, b, bins);
    let (ha, hb) = (histogram(a, &edges), histogram(b, &edges));
    0.5 * ha.iter().zip(&hb).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Largest per-column total-variation distance between the class-conditional
/// feature distributions of `original` and `resampled`.
pub fn consistency_stat(
    original: &Dataset,
    resampled: &Dataset,
    class_label: u8,
    columns: &[usize],
    bins: usize,
) -> Result<f64, ResampleError> {
    if bins < 1 {
        return Err(ResampleError::InvalidBins);
    }
    let column = |d: &Dataset, c: usize| -> Vec<f64> {
        d.records.iter().filter(|r| r.y == class_label).map(|r| r.x[c]).collect()
    };
    let mut worst = 0.0f64;
    for &c in columns {
        let (a, b) = (column(original, c), column(resampled, c));
        if a.is_empty() || b.is_empty() {
            return Err(ResampleError::EmptyClass(class_label));
        }
        worst = worst.max(binned_tv(&a, &b, bins));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrender::N_COLUMNS;

    fn toy(n_pos: usize, n_neg: usize) -> Dataset {
        let records = (0..n_pos + n_neg)
            .map(|i| {
                let mut x = [0.0; N_COLUMNS];
                x[1] = (i % 37) as f64 / 37.0;
                x[4] = (i % 11) as f64 / 11.0;
                ObservationRecord {
                    policy_id: i as u64,
                    calendar_year: 2000,
                    x,
                    y: u8::from(i < n_pos),
                    true_p: Some(0.01),
                    synthetic: false,
                }
            })
            .collect();
        Dataset::new(records)
    }

    fn counts(d: &Dataset) -> (usize, usize) {
        let p = d.positives();
        (p, d.len() - p)
    }

    #[test]
    fn scheme_sizes() {
        let d = toy(10, 990);
        let plan = |s| ResamplePlan::new(s, 3);
        let mut r = rng::stream(3, "t", &[]);
        assert_eq!(counts(&undersample(&d, &plan(Scheme::RandomUndersample), &mut r).unwrap()), (10, 10));
        assert_eq!(counts(&oversample(&d, &plan(Scheme::RandomOversample), &mut r).unwrap()), (990, 990));
        assert_eq!(counts(&smote(&d, &plan(Scheme::Smote), &[1, 4], &mut r).unwrap()), (990, 990));

        let balanced = toy(50, 50);
        assert_eq!(counts(&undersample(&balanced, &plan(Scheme::RandomUndersample), &mut r).unwrap()), (50, 50));
    }

    #[test]
    fn table_scale_counts() {
        // 5483 positives among 189285 records
        let d = toy(5_483, 183_802);
        let mut r = rng::stream(1, "t", &[]);
        let rus = undersample(&d, &ResamplePlan::new(Scheme::RandomUndersample, 1), &mut r).unwrap();
        assert_eq!(rus.len(), 10_966);
        let s = d.positives();
        let target = minority_target(s, d.len() - s, &ResamplePlan::new(Scheme::Smote, 1), Scheme::Smote).unwrap();
        assert_eq!(target + d.len() - s, 367_604);
    }

    #[test]
    fn set_inclusions() {
        let d = toy(30, 500);
        let mut r = rng::stream(9, "t", &[]);
        let rus = undersample(&d, &ResamplePlan::new(Scheme::RandomUndersample, 9), &mut r).unwrap();
        let ids: Vec<u64> = rus.records.iter().filter(|r| r.y == 1).map(|r| r.policy_id).collect();
        assert_eq!(ids, (0..30).collect::<Vec<_>>());
        let ros = oversample(&d, &ResamplePlan::new(Scheme::RandomOversample, 9), &mut r).unwrap();
        assert_eq!(&ros.records[..d.len()], &d.records[..]);
        for extra in &ros.records[d.len()..] {
            let orig = &d.records[extra.policy_id as usize];
            assert_eq!(extra.x, orig.x);
            assert_eq!(orig.y, 1);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut r = rng::stream(0, "t", &[]);
        let plan = ResamplePlan::new(Scheme::RandomOversample, 0);
        assert_eq!(oversample(&toy(0, 10), &plan, &mut r).unwrap_err(), ResampleError::EmptyMinority);
        let smote_plan = ResamplePlan::new(Scheme::Smote, 0);
        assert!(matches!(
            smote(&toy(5, 100), &smote_plan, &[1], &mut r),
            Err(ResampleError::TooFewMinority { n: 5, k: 5 })
        ));
        let mut bad = plan.clone();
        bad.target_minority_share = 1.0;
        assert!(bad.validate().is_err());
        // majority already smaller than the balanced target
        assert!(undersample(&toy(60, 40), &ResamplePlan::new(Scheme::RandomUndersample, 0), &mut r).is_err());
    }

    #[test]
    fn neighbour_ties_prefer_lower_index() {
        // minority points at 0, 1, -1 on one axis: both neighbours of 0 are equidistant
        let mut d = toy(3, 0);
        for (r, v) in d.records.iter_mut().zip([0.0, 1.0, -1.0]) {
            r.x[1] = v;
        }
        let nb = minority_neighbours(&d, &[0, 1, 2], &[1], 1);
        assert_eq!(nb[0], vec![1]);
    }

    #[test]
    fn smote_points_lie_on_segments() {
        let d = toy(40, 400);
        let mut r = rng::stream(5, "t", &[]);
        let (out, origins) = smote_traced(&d, &ResamplePlan::new(Scheme::Smote, 5), &[1, 4], &mut r).unwrap();
        for (syn, o) in out.records[d.len()..].iter().zip(&origins) {
            let (a, b) = (&d.records[o.base].x, &d.records[o.neighbour].x);
            for c in 0..N_COLUMNS {
                let expected = a[c] + o.u * (b[c] - a[c]);
                assert!((syn.x[c] - expected).abs() < 1e-12);
            }
            assert!(syn.synthetic && syn.true_p.is_none() && syn.y == 1);
        }
    }

    #[test]
    fn resample_map_examples() {
        assert!((resample_map(0.02, 0.02, 0.5).unwrap() - 0.5).abs() < 1e-15);
        assert!((resample_map(0.1, 0.02, 0.5).unwrap() - 0.049 / 0.058).abs() < 1e-15);
        assert!((resample_map(0.37, 0.04, 0.04).unwrap() - 0.37).abs() < 1e-15);
        assert!((bias_correct(0.5, 0.02).unwrap() - 0.02).abs() < 1e-15);
        assert!((bias_correct(0.049 / 0.058, 0.02).unwrap() - 0.1).abs() < 1e-10);
        assert!(bias_correct(1.0, 0.02).is_err());
        assert!(resample_map(0.0, 0.02, 0.5).is_err());
    }

    #[test]
    fn correction_inverts_balanced_map() {
        for b in [0.01, 0.02, 0.05] {
            for i in 1..1000 {
                let p = i as f64 / 1000.0;
                let q = resample_map(p, b, 0.5).unwrap();
                assert!((bias_correct(q, b).unwrap() - p).abs() < 1e-12, "p {p} b {b}");
            }
        }
    }

    #[test]
    fn map_is_above_identity_increasing_concave() {
        let h = 1e-4;
        for (b, s) in [(0.02, 0.5), (0.01, 0.3), (0.05, 0.9)] {
            let f = |p: f64| resample_map(p, b, s).unwrap();
            let mut p = 2.0 * h;
            while p < 1.0 - 2.0 * h {
                assert!(f(p) > p);
                assert!(f(p + h) - f(p - h) > 0.0);
                assert!(f(p + h) - 2.0 * f(p) + f(p - h) < 0.0, "p {p}");
                p += h;
            }
        }
    }

    #[test]
    fn tv_extremes() {
        let a: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..300).map(|i| 1_000.0 + i as f64).collect();
        assert_eq!(binned_tv(&a, &a, 10), 0.0);
        assert!((binned_tv(&a, &b, 10) - 1.0).abs() < 1e-12);
        let d = toy(100, 1000);
        assert_eq!(consistency_stat(&d, &d, 0, &[1, 4], 10).unwrap(), 0.0);
        assert_eq!(consistency_stat(&toy(0, 10), &d, 1, &[1], 10).unwrap_err(), ResampleError::EmptyClass(1));
    }

    #[test]
    fn tv_with_heavy_ties() {
        // ten values; b puts 55% of its mass on the first. Exact TV is 0.45 and
        // the tie-aware decile bins separate every value where a and b differ
        // in sign.
        let a: Vec<f64> = (0..100).map(|i| f64::from(i % 10)).collect();
        let mut b = vec![0.0; 55];
        b.extend((0..45).map(|i| f64::from(1 + i % 9)));
        assert!((binned_tv(&a, &b, 10) - 0.45).abs() < 1e-12);
        // duplicating records shifts mass: values 0..4 get 26/255, the rest 25/255
        let dup: Vec<f64> = a.iter().chain(&a).chain(&a[..55]).copied().collect();
        assert!((binned_tv(&a, &dup, 10) - 1.0 / 102.0).abs() < 1e-12);
    }

    #[test]
    fn undersampling_keeps_majority_distribution() {
        let d = toy(600, 12_000);
        let mut plan = ResamplePlan::new(Scheme::RandomUndersample, 2);
        plan.target_minority_share = 0.05;
        let rus = resample(&d, &plan, &[]).unwrap();
        assert!(rus.len() - rus.positives() >= 10_000);
        assert!(consistency_stat(&d, &rus, 0, &[1, 4], 10).unwrap() < 0.05);
    }
}
