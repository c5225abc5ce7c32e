//! Policy-year observation records, their CSV schema, the split in calendar
//! time and min-max preprocessing.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::SurrenderError;
use crate::portfolio::{Contract, Feature};

pub const N_COLUMNS: usize = 10;

/// Feature columns of an observation, in storage and CSV order.
pub const COLUMN_NAMES: [&str; N_COLUMNS] = [
    "calendar_year",
    "age",
    "face_amount",
    "duration",
    "elapsed_duration",
    "remaining_duration",
    "premium_freq_upfront",
    "premium_freq_annual",
    "premium_freq_monthly",
    "annual_premium",
];

/// Columns rescaled by min-max preprocessing; the rest are indicators.
pub const NUMERIC_COLUMNS: [usize; 7] = [0, 1, 2, 3, 4, 5, 9];
pub const INDICATOR_COLUMNS: [usize; 3] = [6, 7, 8];

/// Storage columns that carry a contract feature.
pub fn feature_columns(feature: Feature) -> &'static [usize] {
    match feature {
        Feature::CalendarYear => &[0],
        Feature::Age => &[1],
        Feature::FaceAmount => &[2],
        Feature::Duration => &[3],
        Feature::ElapsedDuration => &[4],
        Feature::RemainingDuration => &[5],
        Feature::PremiumFrequency => &INDICATOR_COLUMNS,
        Feature::AnnualPremium => &[9],
    }
}

/// Storage columns for a feature list, ascending and without duplicates.
pub fn columns_for(features: &[Feature]) -> Vec<usize> {
    let mut cols: Vec<usize> = features
        .iter()
        .flat_map(|f| feature_columns(*f).iter().copied())
        .collect();
    cols.sort_unstable();
    cols.dedup();
    cols
}

pub fn is_indicator(column: usize) -> bool {
    INDICATOR_COLUMNS.contains(&column)
}

/// One active policy observed over one calendar year.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRecord {
    pub policy_id: u64,
    pub calendar_year: u32,
    pub x: [f64; N_COLUMNS],
    /// 1 iff the policy surrendered during the year.
    pub y: u8,
    /// Latent surrender probability; privileged, evaluation only. Absent for
    /// synthetic rows.
    pub true_p: Option<f64>,
    pub synthetic: bool,
}

impl ObservationRecord {
    pub fn from_contract(c: &Contract, y: u8, true_p: f64) -> Self {
        let oh = c.premium_frequency.one_hot();
        Self {
            policy_id: c.policy_id,
            calendar_year: c.calendar_year,
            x: [
                f64::from(c.calendar_year),
                c.age,
                c.face_amount,
                c.duration,
                c.elapsed_duration,
                c.remaining_duration,
                oh[0],
                oh[1],
                oh[2],
                c.annual_premium,
            ],
            y,
            true_p: Some(true_p),
            synthetic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub column: usize,
    pub min: f64,
    pub max: f64,
}

/// Per-column min-max map onto `[-1, 1]`, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub ranges: Vec<ColumnRange>,
    /// Numeric columns that were constant on the training data (`min == max`).
    pub dropped: Vec<ColumnRange>,
}

impl Scaler {
    pub fn fit(records: &[ObservationRecord]) -> Result<Self, SurrenderError> {
        if records.is_empty() {
            return Err(SurrenderError::EmptyDataset("scaler fit"));
        }
        let mut ranges = Vec::new();
        let mut dropped = Vec::new();
        for &col in &NUMERIC_COLUMNS {
            let (lo, hi) = records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r.x[col]), hi.max(r.x[col]))
            });
            if hi > lo {
                ranges.push(ColumnRange { column: col, min: lo, max: hi });
            } else {
                log::warn!(
                    "column '{}' is constant ({lo}) on training data; dropped",
                    COLUMN_NAMES[col]
                );
                dropped.push(ColumnRange { column: col, min: lo, max: hi });
            }
        }
        Ok(Self { ranges, dropped })
    }

    pub fn transform_value(range: &ColumnRange, x: f64) -> f64 {
        2.0 * (x - range.min) / (range.max - range.min) - 1.0
    }

    pub fn inverse_value(range: &ColumnRange, z: f64) -> f64 {
        range.min + (z + 1.0) * 0.5 * (range.max - range.min)
    }

    pub fn transform(&self, x: &mut [f64; N_COLUMNS]) {
        for r in &self.ranges {
            x[r.column] = Self::transform_value(r, x[r.column]);
        }
        for d in &self.dropped {
            x[d.column] = 0.0;
        }
    }

    /// Maps scaled features back to raw units; dropped columns get their
    /// training constant back.
    pub fn inverse(&self, x: &mut [f64; N_COLUMNS]) {
        for r in &self.ranges {
            x[r.column] = Self::inverse_value(r, x[r.column]);
        }
        for d in &self.dropped {
            x[d.column] = d.min;
        }
    }

    pub fn is_dropped(&self, column: usize) -> bool {
        self.dropped.iter().any(|d| d.column == column)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<ObservationRecord>,
    /// Present when features have been preprocessed with this scaler.
    pub scaler: Option<Scaler>,
    /// Last calendar year of the training portion, once split.
    pub split_year: Option<u32>,
}

impl Dataset {
    pub fn new(records: Vec<ObservationRecord>) -> Self {
        Self {
            records,
            scaler: None,
            split_year: None,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_scaled(&self) -> bool {
        self.scaler.is_some()
    }

    pub fn positives(&self) -> usize {
        self.records.iter().filter(|r| r.y == 1).count()
    }

    /// Share of records with `y = 1`.
    pub fn imbalance(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.positives() as f64 / self.records.len() as f64
    }

    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.y).collect()
    }

    /// Latent probabilities, if every record carries one.
    pub fn true_probabilities(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.true_p).collect()
    }

    pub fn records_per_year(&self) -> BTreeMap<u32, usize> {
        let mut m = BTreeMap::new();
        for r in &self.records {
            *m.entry(r.calendar_year).or_insert(0) += 1;
        }
        m
    }

    /// Observed surrender rate per calendar year.
    pub fn yearly_rates(&self) -> BTreeMap<u32, f64> {
        let mut m: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
        for r in &self.records {
            let e = m.entry(r.calendar_year).or_insert((0, 0));
            e.0 += 1;
            e.1 += usize::from(r.y);
        }
        m.into_iter()
            .map(|(y, (n, k))| (y, k as f64 / n as f64))
            .collect()
    }

    /// Raw-unit copy of a preprocessed dataset.
    pub fn unscaled(&self) -> Dataset {
        let Some(scaler) = &self.scaler else {
            return self.clone();
        };
        let mut out = self.clone();
        for r in &mut out.records {
            scaler.inverse(&mut r.x);
        }
        out.scaler = None;
        out
    }

    /// Writes the dataset CSV (raw units). With `provenance`, a trailing
    /// `synthetic` column marks generated rows.
    pub fn write_csv<W: Write>(&self, writer: W, provenance: bool) -> Result<(), SurrenderError> {
        let raw = self.unscaled();
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = vec!["policy_id"];
        header.extend(COLUMN_NAMES);
        header.extend(["y", "true_p"]);
        if provenance {
            header.push("synthetic");
        }
        w.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for r in &raw.records {
            row.clear();
            row.push(r.policy_id.to_string());
            row.push(r.calendar_year.to_string());
            row.extend(r.x[1..].iter().map(|v| v.to_string()));
            row.push(r.y.to_string());
            row.push(r.true_p.map(|p| p.to_string()).unwrap_or_default());
            if provenance {
                row.push(u8::from(r.synthetic).to_string());
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a dataset CSV written by [`Dataset::write_csv`].
    pub fn read_csv<R: Read>(reader: R) -> Result<Dataset, SurrenderError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected_prefix: Vec<&str> = std::iter::once("policy_id")
            .chain(COLUMN_NAMES)
            .chain(["y", "true_p"])
            .collect();
        let names: Vec<&str> = headers.iter().collect();
        if names.len() < expected_prefix.len() || names[..expected_prefix.len()] != expected_prefix[..]
        {
            return Err(SurrenderError::Schema(format!(
                "unexpected dataset header: {}",
                names.join(",")
            )));
        }
        let provenance = names.get(expected_prefix.len()) == Some(&"synthetic");
        let mut records = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| SurrenderError::Schema(format!("row {}: bad {what}", line + 1));
            let num = |i: usize| -> Result<f64, SurrenderError> {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| bad(names[i]))
            };
            let policy_id: u64 = rec.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("policy_id"))?;
            let calendar_year: u32 =
                rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("calendar_year"))?;
            let mut x = [0.0; N_COLUMNS];
            x[0] = f64::from(calendar_year);
            for (c, slot) in x.iter_mut().enumerate().skip(1) {
                *slot = num(c + 1)?;
            }
            let y: u8 = rec.get(11).and_then(|s| s.parse().ok()).ok_or_else(|| bad("y"))?;
            if y > 1 {
                return Err(bad("y"));
            }
            let true_p = match rec.get(12) {
                Some("") | None => None,
                Some(s) => Some(s.parse::<f64>().map_err(|_| bad("true_p"))?),
            };
            let synthetic = provenance && rec.get(13) == Some("1");
            records.push(ObservationRecord {
                policy_id,
                calendar_year,
                x,
                y,
                true_p,
                synthetic,
            });
        }
        Ok(Dataset::new(records))
    }
}

/// Splits at the first calendar year whose cumulative share of observations
/// reaches `share`; records of that year and before form the training set.
/// The last observed year always stays in the test set.
pub fn split_in_time(dataset: &Dataset, share: f64) -> Result<(Dataset, Dataset), SurrenderError> {
    if !(share > 0.0 && share < 1.0) {
        return Err(SurrenderError::InvalidShare(share));
    }
    let counts = dataset.records_per_year();
    if counts.len() < 2 {
        return Err(SurrenderError::DegenerateSplit(counts.len()));
    }
    let total = dataset.len() as f64;
    let years: Vec<u32> = counts.keys().copied().collect();
    let mut cum = 0usize;
    let mut split_year = years[years.len() - 2];
    for (year, n) in &counts {
        cum += n;
        if cum as f64 / total >= share {
            split_year = (*year).min(split_year);
            break;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = dataset
        .records
        .iter()
        .cloned()
        .partition(|r| r.calendar_year <= split_year);
    let mk = |records| Dataset {
        records,
        scaler: dataset.scaler.clone(),
        split_year: Some(split_year),
    };
    Ok((mk(train), mk(test)))
}

/// Fits the min-max scaler on `train` and applies it to both sets.
pub fn preprocess(
    train: &Dataset,
    test: &Dataset,
) -> Result<(Dataset, Dataset, Scaler), SurrenderError> {
    if train.is_scaled() || test.is_scaled() {
        return Err(SurrenderError::AlreadyScaled);
    }
    let scaler = Scaler::fit(&train.records)?;
    let apply = |d: &Dataset| {
        let mut out = d.clone();
        for r in &mut out.records {
            scaler.transform(&mut r.x);
        }
        out.scaler = Some(scaler.clone());
        out
    };
    Ok((apply(train), apply(test), scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::PremiumFrequency;

    fn rec(policy_id: u64, year: u32, age: f64, y: u8) -> ObservationRecord {
        let mut x = [0.0; N_COLUMNS];
        x[0] = f64::from(year);
        x[1] = age;
        x[2] = 10_000.0 + age;
        x[3] = 10.0;
        x[4] = 1.0;
        x[5] = 9.0;
        x[8] = 1.0;
        x[9] = 900.0 + age;
        ObservationRecord {
            policy_id,
            calendar_year: year,
            x,
            y,
            true_p: Some(0.02),
            synthetic: false,
        }
    }

    fn uniform_years(years: u32, per_year: usize) -> Dataset {
        let mut v = Vec::new();
        for y in 0..years {
            for i in 0..per_year {
                v.push(rec(i as u64, y, 20.0 + i as f64, 0));
            }
        }
        Dataset::new(v)
    }

    #[test]
    fn split_at_cumulative_share() {
        let d = uniform_years(10, 100);
        let (train, test) = split_in_time(&d, 0.7).unwrap();
        assert_eq!(train.split_year, Some(6));
        assert_eq!(train.len(), 700);
        assert_eq!(test.len(), 300);
        assert!(train.records.iter().all(|r| r.calendar_year <= 6));
        assert!(test.records.iter().all(|r| r.calendar_year > 6));
    }

    #[test]
    fn split_keeps_last_year_for_testing() {
        let d = uniform_years(2, 50);
        let (train, test) = split_in_time(&d, 0.999_999).unwrap();
        assert_eq!(train.split_year, Some(0));
        assert_eq!(train.len(), 50);
        assert_eq!(test.len(), 50);
        assert!(split_in_time(&uniform_years(1, 10), 0.7).is_err());
        assert!(split_in_time(&d, 1.0).is_err());
    }

    #[test]
    fn split_is_an_order_preserving_partition() {
        let d = uniform_years(5, 7);
        let (train, test) = split_in_time(&d, 0.5).unwrap();
        let mut joined = train.records.clone();
        joined.extend(test.records.clone());
        assert_eq!(joined, d.records);
    }

    #[test]
    fn scaling_endpoints_and_midpoint() {
        let r = ColumnRange { column: 1, min: 0.0, max: 10.0 };
        assert_eq!(Scaler::transform_value(&r, 5.0), 0.0);
        assert_eq!(Scaler::transform_value(&r, 0.0), -1.0);
        assert_eq!(Scaler::transform_value(&r, 10.0), 1.0);
        assert_eq!(Scaler::inverse_value(&r, 0.0), 5.0);
    }

    #[test]
    fn one_hot_order() {
        assert_eq!(PremiumFrequency::Monthly.one_hot(), [0.0, 0.0, 1.0]);
        assert_eq!(PremiumFrequency::Upfront.one_hot(), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn preprocess_uses_train_statistics_only() {
        let d = uniform_years(4, 20);
        let (train, mut test) = split_in_time(&d, 0.5).unwrap();
        // an out-of-range test age
        test.records[0].x[1] = 1_000.0;
        let (tr, te, scaler) = preprocess(&train, &test).unwrap();
        for r in &tr.records {
            for &c in &NUMERIC_COLUMNS {
                if !scaler.is_dropped(c) {
                    assert!((-1.0..=1.0).contains(&r.x[c]));
                }
            }
        }
        assert!(te.records[0].x[1] > 1.0);
        // duration, elapsed and remaining are constant in this toy data
        let dropped: Vec<usize> = scaler.dropped.iter().map(|d| d.column).collect();
        assert_eq!(dropped, vec![3, 4, 5]);
        assert!(te.records.iter().all(|r| r.x[3] == 0.0));
        let age = scaler.ranges.iter().find(|r| r.column == 1).unwrap();
        assert_eq!((age.min, age.max), (20.0, 39.0));
    }

    #[test]
    fn csv_round_trip_raw_units() {
        let d = uniform_years(3, 4);
        let (train, test) = split_in_time(&d, 0.5).unwrap();
        let (tr, _, _) = preprocess(&train, &test).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, false).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.records, train.records);
        let header = String::from_utf8(buf).unwrap().lines().next().unwrap().to_string();
        assert_eq!(
            header,
            "policy_id,calendar_year,age,face_amount,duration,elapsed_duration,remaining_duration,premium_freq_upfront,premium_freq_annual,premium_freq_monthly,annual_premium,y,true_p"
        );
    }

    #[test]
    fn provenance_column() {
        let mut d = uniform_years(1, 2);
        d.records[1].synthetic = true;
        d.records[1].true_p = None;
        let mut buf = Vec::new();
        d.write_csv(&mut buf, true).unwrap();
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert!(back.records[1].synthetic && !back.records[0].synthetic);
        assert_eq!(back.records[1].true_p, None);
        assert!(back.true_probabilities().is_none());
    }
}
