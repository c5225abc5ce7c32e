//! Model assessment: confusion metrics, ROC and precision-recall curves,
//! cross-entropy, errors against the latent probabilities and per-year
//! confidence bands for the mean surrender rate.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifiers::clamp_probability;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("no observations to evaluate")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("curve needs both classes present")]
    SingleClass,
    #[error("confidence band needs at least 2 predictions, got {0}")]
    TooFew(usize),
    #[error("confidence level must lie in (0, 1), got {0}")]
    InvalidLevel(f64),
    #[error("label {0} is not 0 or 1")]
    InvalidLabel(u8),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

fn check_lengths(a: usize, b: usize) -> Result<(), EvaluationError> {
    if a != b {
        return Err(EvaluationError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(EvaluationError::Empty);
    }
    Ok(())
}

fn check_labels(labels: &[u8]) -> Result<(), EvaluationError> {
    match labels.iter().find(|&&y| y > 1) {
        Some(&bad) => Err(EvaluationError::InvalidLabel(bad)),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionMatrix {
    /// Labels predicted as 1 iff the probability reaches `threshold`.
    pub fn from_predictions(labels: &[u8], probabilities: &[f64], threshold: f64) -> Result<Self, EvaluationError> {
        check_lengths(labels.len(), probabilities.len())?;
        check_labels(labels)?;
        let mut m = ConfusionMatrix { tp: 0, fp: 0, fn_: 0, tn: 0 };
        for (&y, &p) in labels.iter().zip(probabilities) {
            match (y == 1, p >= threshold) {
                (true, true) => m.tp += 1,
                (false, true) => m.fp += 1,
                (true, false) => m.fn_ += 1,
                (false, false) => m.tn += 1,
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn false_positive_rate(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    /// `(1 + b^2) P R / (b^2 P + R)`; absent when precision or recall is, or
    /// when both vanish.
    pub fn f_beta(&self, beta: f64) -> Option<f64> {
        let (p, r) = (self.precision()?, self.recall()?);
        let b2 = beta * beta;
        let den = b2 * p + r;
        (den > 0.0).then(|| (1.0 + b2) * p * r / den)
    }

    pub fn f1(&self) -> Option<f64> {
        self.f_beta(1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub threshold: f64,
    pub matrix: ConfusionMatrix,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub fpr: Option<f64>,
    pub f1: Option<f64>,
}

pub fn confusion_metrics(labels: &[u8], probabilities: &[f64], threshold: f64) -> Result<ConfusionMetrics, EvaluationError> {
    let m = ConfusionMatrix::from_predictions(labels, probabilities, threshold)?;
    Ok(ConfusionMetrics {
        threshold,
        matrix: m,
        accuracy: m.accuracy(),
        precision: m.precision(),
        recall: m.recall(),
        specificity: m.specificity(),
        fpr: m.false_positive_rate(),
        f1: m.f1(),
    })
}

/// Cumulative (true positives, false positives) after each distinct score,
/// sweeping the threshold from high to low.
fn sweep(labels: &[u8], scores: &[f64]) -> Result<(Vec<(f64, f64)>, f64, f64), EvaluationError> {
    check_lengths(labels.len(), scores.len())?;
    check_labels(labels)?;
    let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(EvaluationError::SingleClass);
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut out = Vec::new();
    let (mut tp, mut fp) = (0.0, 0.0);
    for (k, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        let last_of_tie = order.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_tie {
            out.push((tp, fp));
        }
    }
    Ok((out, pos, neg))
}

/// ROC curve as (false positive rate, true positive rate), from (0,0) to (1,1).
pub fn roc_points(labels: &[u8], scores: &[f64]) -> Result<Vec<(f64, f64)>, EvaluationError> {
    let (cum, pos, neg) = sweep(labels, scores)?;
    let mut pts = vec![(0.0, 0.0)];
    pts.extend(cum.into_iter().map(|(tp, fp)| (fp / neg, tp / pos)));
    Ok(pts)
}

/// Precision-recall curve as (recall, precision), starting at (0, 1).
pub fn pr_points(labels: &[u8], scores: &[f64]) -> Result<Vec<(f64, f64)>, EvaluationError> {
    let (cum, pos, _) = sweep(labels, scores)?;
    let mut pts = vec![(0.0, 1.0)];
    pts.extend(cum.into_iter().map(|(tp, fp)| (tp / pos, tp / (tp + fp))));
    Ok(pts)
}

/// Trapezoid area under a curve given in ascending x order.
pub fn auc(curve: &[(f64, f64)]) -> f64 {
    curve
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * 0.5 * (w[0].1 + w[1].1))
        .sum()
}

/// Mean binary cross-entropy, probabilities clamped to [1e-12, 1 - 1e-12].
pub fn cross_entropy(labels: &[u8], probabilities: &[f64]) -> Result<f64, EvaluationError> {
    check_lengths(labels.len(), probabilities.len())?;
    check_labels(labels)?;
    let total: f64 = labels
        .iter()
        .zip(probabilities)
        .map(|(&y, &p)| {
            let p = clamp_probability(p);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(total / labels.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentErrorStats {
    pub mae: f64,
    /// Population variance of `p - p_hat`.
    pub variance: f64,
    /// Mean of `p_hat - p`; positive when the model overestimates.
    pub mean_signed_error: f64,
}

pub fn latent_error_stats(true_p: &[f64], predicted_p: &[f64]) -> Result<LatentErrorStats, EvaluationError> {
    check_lengths(true_p.len(), predicted_p.len())?;
    let n = true_p.len() as f64;
    let errs: Vec<f64> = true_p.iter().zip(predicted_p).map(|(p, q)| p - q).collect();
    let mean = errs.iter().sum::<f64>() / n;
    Ok(LatentErrorStats {
        mae: errs.iter().map(|e| e.abs()).sum::<f64>() / n,
        variance: errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n,
        mean_signed_error: -mean,
    })
}

/// Standard normal quantile (Wichura's AS 241, about 1e-16 relative accuracy).
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((2509.0809287301226727 * r + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((5226.495278852545925 * r + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r + 0.0012426609473880784386)
            * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r
                + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Two-sided normal critical value for confidence `level` (1.96 at 0.95).
pub fn critical_value(level: f64) -> Result<f64, EvaluationError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(EvaluationError::InvalidLevel(level));
    }
    Ok(inverse_normal_cdf(1.0 - (1.0 - level) / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Normal-approximation interval for the mean surrender rate of a group of
/// independent policies with predicted probabilities `predicted`:
/// `mean ± z * sqrt(sum p(1-p)) / sqrt(N (N-1))`. Bounds may leave [0, 1].
pub fn confidence_band(predicted: &[f64], level: f64) -> Result<Band, EvaluationError> {
    let n = predicted.len();
    if n < 2 {
        return Err(EvaluationError::TooFew(n));
    }
    let z = critical_value(level)?;
    let nf = n as f64;
    let point = predicted.iter().sum::<f64>() / nf;
    let spread: f64 = predicted.iter().map(|p| p * (1.0 - p)).sum();
    let half = z * spread.sqrt() / (nf * (nf - 1.0)).sqrt();
    Ok(Band {
        point,
        lower: point - half,
        upper: point + half,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub calendar_year: u32,
    pub point_estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub observed_rate: f64,
    pub n: usize,
}

impl BandPoint {
    pub fn covers_observed(&self) -> bool {
        self.lower <= self.observed_rate && self.observed_rate <= self.upper
    }
}

/// One band per calendar year, ascending; years with fewer than two records
/// are skipped with a warning.
pub fn band_series(years: &[u32], labels: &[u8], predicted: &[f64], level: f64) -> Result<Vec<BandPoint>, EvaluationError> {
    check_lengths(years.len(), labels.len())?;
    check_lengths(years.len(), predicted.len())?;
    let mut groups: BTreeMap<u32, (Vec<f64>, u64)> = BTreeMap::new();
    for ((&yr, &y), &p) in years.iter().zip(labels).zip(predicted) {
        let e = groups.entry(yr).or_default();
        e.0.push(p);
        e.1 += u64::from(y);
    }
    let mut out = Vec::with_capacity(groups.len());
    for (year, (ps, surrenders)) in groups {
        if ps.len() < 2 {
            log::warn!("calendar year {year} has {} record(s); no band computed", ps.len());
            continue;
        }
        let band = confidence_band(&ps, level)?;
        out.push(BandPoint {
            calendar_year: year,
            point_estimate: band.point,
            lower: band.lower,
            upper: band.upper,
            observed_rate: surrenders as f64 / ps.len() as f64,
            n: ps.len(),
        });
    }
    Ok(out)
}

pub fn write_bands_csv<W: Write>(bands: &[BandPoint], writer: W) -> Result<(), EvaluationError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["calendar_year", "point", "lower", "upper", "observed", "n"])?;
    for b in bands {
        w.write_record([
            b.calendar_year.to_string(),
            b.point_estimate.to_string(),
            b.lower.to_string(),
            b.upper.to_string(),
            b.observed_rate.to_string(),
            b.n.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Two-column p / p-hat scatter data, one row per record.
pub fn pp_scatter_export<W: Write>(true_p: &[f64], predicted_p: &[f64], writer: W) -> Result<(), EvaluationError> {
    check_lengths(true_p.len(), predicted_p.len())?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["true_p", "predicted_p"])?;
    for (p, q) in true_p.iter().zip(predicted_p) {
        w.write_record([p.to_string(), q.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Everything reported for one model on one data split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub n: usize,
    pub observed_rate: f64,
    pub mean_prediction: f64,
    pub metrics: ConfusionMetrics,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub cross_entropy: f64,
    /// Absent when the split carries no latent probabilities.
    pub latent: Option<LatentErrorStats>,
}

pub fn summarize(
    labels: &[u8],
    predicted: &[f64],
    true_p: Option<&[f64]>,
    threshold: f64,
) -> Result<EvaluationSummary, EvaluationError> {
    check_lengths(labels.len(), predicted.len())?;
    let n = labels.len();
    let roc_auc = match roc_points(labels, predicted) {
        Ok(c) => Some(auc(&c)),
        Err(EvaluationError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    let pr_auc = match pr_points(labels, predicted) {
        Ok(c) => Some(auc(&c)),
        Err(EvaluationError::SingleClass) => None,
        Err(e) => return Err(e),
    };
    Ok(EvaluationSummary {
        n,
        observed_rate: labels.iter().map(|&y| f64::from(y)).sum::<f64>() / n as f64,
        mean_prediction: predicted.iter().sum::<f64>() / n as f64,
        metrics: confusion_metrics(labels, predicted, threshold)?,
        roc_auc,
        pr_auc,
        cross_entropy: cross_entropy(labels, predicted)?,
        latent: true_p.map(|t| latent_error_stats(t, predicted)).transpose()?,
    })
}
