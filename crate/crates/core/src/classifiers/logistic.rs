//! Penalized logistic regression on polynomially expanded inputs, bagged.
//!
//! The objective of one fit is `sum_i w_i * loss_i + pen(beta) / C` with the
//! intercept unpenalized, `pen = |beta|^2 / 2` (L2) or `|beta|_1` (L1). L2 is
//! solved by damped Newton, L1 by proximal Newton with a coordinate-descent
//! inner solver.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training, clamp_probability, ClassifierError, FeatureMatrix};
use crate::rng;
use crate::surrender::profile::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogisticParams {
    pub penalty: Penalty,
    /// Inverse regularization strength.
    pub c: f64,
    #[serde(default = "default_bag")]
    pub n_bag: usize,
    #[serde(default = "default_degree")]
    pub max_degree: u32,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_bag() -> usize {
    10
}
fn default_degree() -> u32 {
    4
}
fn default_max_iter() -> usize {
    10_000
}
fn default_tol() -> f64 {
    1e-8
}

impl LogisticParams {
    pub fn new(penalty: Penalty, c: f64) -> Self {
        Self {
            penalty,
            c,
            n_bag: default_bag(),
            max_degree: default_degree(),
            max_iter: default_max_iter(),
            tol: default_tol(),
        }
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(ClassifierError::InvalidHyperparameter(format!("C must be positive, got {}", self.c)));
        }
        if self.n_bag == 0 || self.max_degree == 0 || self.max_iter == 0 || !(self.tol > 0.0) {
            return Err(ClassifierError::InvalidHyperparameter(
                "n_bag, max_degree, max_iter and tol must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Appends `x^2 ..= x^degree` for every non-indicator column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialExpansion {
    pub degree: u32,
    pub numeric: Vec<usize>,
    pub n_inputs: usize,
}

impl PolynomialExpansion {
    pub fn for_matrix(x: &FeatureMatrix, degree: u32) -> Self {
        Self {
            degree,
            numeric: (0..x.n_cols()).filter(|&j| !x.indicator[j]).collect(),
            n_inputs: x.n_cols(),
        }
    }

    pub fn n_outputs(&self) -> usize {
        self.n_inputs + self.numeric.len() * (self.degree as usize - 1)
    }

    pub fn expand_row(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(row);
        for &j in &self.numeric {
            let v = row[j];
            let mut pow = v;
            for _ in 2..=self.degree {
                pow *= v;
                out.push(pow);
            }
        }
    }

    pub fn expand(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let mut names = x.names.clone();
        let mut indicator = x.indicator.clone();
        for &j in &self.numeric {
            for k in 2..=self.degree {
                names.push(format!("{}^{k}", x.names[j]));
                indicator.push(false);
            }
        }
        let mut data = Vec::with_capacity(x.n_rows() * self.n_outputs());
        let mut buf = Vec::with_capacity(self.n_outputs());
        for i in 0..x.n_rows() {
            self.expand_row(x.row(i), &mut buf);
            data.extend_from_slice(&buf);
        }
        let mut m = FeatureMatrix::new(names, indicator, data);
        if m.n_cols() == 0 {
            m = FeatureMatrix::empty(x.n_rows());
        }
        m
    }
}

pub fn engineer_polynomial(x: &FeatureMatrix, max_degree: u32) -> FeatureMatrix {
    PolynomialExpansion::for_matrix(x, max_degree).expand(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LogisticModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(row).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        clamp_probability(sigmoid(self.decision(row)))
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// One penalized fit. Parameters are packed as `[intercept, coefficients..]`.
pub struct PenalizedProblem<'a> {
    pub x: &'a FeatureMatrix,
    pub y: &'a [u8],
    pub w: &'a [f64],
    pub penalty: Penalty,
    pub c: f64,
}

impl PenalizedProblem<'_> {
    fn dim(&self) -> usize {
        self.x.n_cols() + 1
    }

    fn z(&self, beta: &[f64], i: usize) -> f64 {
        beta[0] + beta[1..].iter().zip(self.x.row(i)).map(|(b, v)| b * v).sum::<f64>()
    }

    pub fn smooth_loss(&self, beta: &[f64]) -> f64 {
        (0..self.y.len())
            .filter(|&i| self.w[i] > 0.0)
            .map(|i| {
                let z = self.z(beta, i);
                self.w[i] * (softplus(z) - f64::from(self.y[i]) * z)
            })
            .sum()
    }

    pub fn penalty_value(&self, beta: &[f64]) -> f64 {
        let tail = &beta[1..];
        match self.penalty {
            Penalty::L2 => 0.5 * tail.iter().map(|b| b * b).sum::<f64>() / self.c,
            Penalty::L1 => tail.iter().map(|b| b.abs()).sum::<f64>() / self.c,
        }
    }

    pub fn objective(&self, beta: &[f64]) -> f64 {
        self.smooth_loss(beta) + self.penalty_value(beta)
    }

    /// Gradient of the objective (for L1, valid away from zero coefficients).
    pub fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = self.smooth_gradient(beta);
        for j in 1..g.len() {
            g[j] += match self.penalty {
                Penalty::L2 => beta[j] / self.c,
                Penalty::L1 => beta[j].signum() / self.c,
            };
        }
        g
    }

    fn smooth_gradient(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for i in 0..self.y.len() {
            if self.w[i] == 0.0 {
                continue;
            }
            let r = self.w[i] * (sigmoid(self.z(beta, i)) - f64::from(self.y[i]));
            g[0] += r;
            for (gj, v) in g[1..].iter_mut().zip(self.x.row(i)) {
                *gj += r * v;
            }
        }
        g
    }

    fn smooth_hessian(&self, beta: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::<f64>::zeros(d, d);
        let mut xi = vec![1.0; d];
        for i in 0..self.y.len() {
            if self.w[i] == 0.0 {
                continue;
            }
            xi[1..].copy_from_slice(self.x.row(i));
            let p = sigmoid(self.z(beta, i));
            let s = self.w[i] * p * (1.0 - p);
            for a in 0..d {
                let sa = s * xi[a];
                for b in a..d {
                    h[(a, b)] += sa * xi[b];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        h
    }

    /// Largest entry of the minimum-norm subgradient.
    pub fn optimality(&self, beta: &[f64]) -> f64 {
        let g = self.smooth_gradient(beta);
        let lam = 1.0 / self.c;
        let mut worst = g[0].abs();
        for j in 1..g.len() {
            let v = match self.penalty {
                Penalty::L2 => (g[j] + beta[j] * lam).abs(),
                Penalty::L1 if beta[j] != 0.0 => (g[j] + lam * beta[j].signum()).abs(),
                Penalty::L1 => (g[j].abs() - lam).max(0.0),
            };
            worst = worst.max(v);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitReport {
    pub iterations: usize,
    /// Optimality measure divided by the total row weight.
    pub gradient_norm: f64,
}

fn solve_spd(mut h: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let scale = (0..h.nrows()).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut ridge = 0.0;
    loop {
        if let Some(ch) = h.clone().cholesky() {
            return ch.solve(rhs);
        }
        let bump = if ridge == 0.0 { 1e-12 * scale } else { ridge * 9.0 };
        for i in 0..h.nrows() {
            h[(i, i)] += bump;
        }
        ridge += bump;
    }
}

fn newton_l2(p: &PenalizedProblem, params: &LogisticParams, beta: &mut Vec<f64>) -> Result<FitReport, ClassifierError> {
    let total_w: f64 = p.w.iter().sum();
    let d = p.dim();
    let mut obj = p.objective(beta);
    for it in 0..params.max_iter {
        let g = p.gradient(beta);
        let norm = g.iter().fold(0.0f64, |m, v| m.max(v.abs())) / total_w;
        if norm <= params.tol {
            return Ok(FitReport { iterations: it, gradient_norm: norm });
        }
        let mut h = p.smooth_hessian(beta);
        for j in 1..d {
            h[(j, j)] += 1.0 / p.c;
        }
        let step = solve_spd(h, &DVector::from_vec(g.iter().map(|v| -v).collect()));
        let slope: f64 = g.iter().zip(step.iter()).map(|(a, b)| a * b).sum();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let f = p.objective(&trial);
            if f <= obj + 1e-4 * t * slope || f - obj <= 1e-14 * obj.abs() || t < 1e-12 {
                if t < 1e-12 && f > obj {
                    // no descent possible at machine precision
                    let norm = p.optimality(beta) / total_w;
                    return finish(it, norm, params);
                }
                *beta = trial;
                obj = f;
                break;
            }
            t *= 0.5;
        }
    }
    let norm = p.optimality(beta) / total_w;
    finish(params.max_iter, norm, params)
}

fn finish(iterations: usize, norm: f64, params: &LogisticParams) -> Result<FitReport, ClassifierError> {
    if norm <= params.tol {
        Ok(FitReport { iterations, gradient_norm: norm })
    } else {
        Err(ClassifierError::NotConverged {
            iterations,
            gradient_norm: norm,
        })
    }
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn prox_newton_l1(p: &PenalizedProblem, params: &LogisticParams, beta: &mut Vec<f64>) -> Result<FitReport, ClassifierError> {
    let total_w: f64 = p.w.iter().sum();
    let d = p.dim();
    let lam = 1.0 / p.c;
    let l1 = |b: &[f64]| b[1..].iter().map(|v| v.abs()).sum::<f64>() * lam;
    let mut obj = p.objective(beta);
    for it in 0..params.max_iter {
        let norm = p.optimality(beta) / total_w;
        if norm <= params.tol {
            return Ok(FitReport { iterations: it, gradient_norm: norm });
        }
        let g = p.smooth_gradient(beta);
        let mut h = p.smooth_hessian(beta);
        let scale = (0..d).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1e-300);
        for j in 0..d {
            h[(j, j)] += 1e-12 * scale;
        }
        // coordinate descent on the quadratic model
        let mut delta = vec![0.0; d];
        let mut h_delta = vec![0.0; d];
        for _sweep in 0..1_000 {
            let mut biggest = 0.0f64;
            for j in 0..d {
                let a = h[(j, j)];
                let grad_j = g[j] + h_delta[j] - a * delta[j];
                let u = beta[j] - grad_j / a;
                let z = if j == 0 { u } else { soft(u, lam / a) };
                let change = z - beta[j] - delta[j];
                if change != 0.0 {
                    delta[j] += change;
                    for (k, hd) in h_delta.iter_mut().enumerate() {
                        *hd += h[(k, j)] * change;
                    }
                    biggest = biggest.max(change.abs() * a.sqrt());
                }
            }
            if biggest <= 1e-14 * (1.0 + total_w.sqrt()) {
                break;
            }
        }
        let proposed: Vec<f64> = beta.iter().zip(&delta).map(|(b, s)| b + s).collect();
        let decrease: f64 = g.iter().zip(&delta).map(|(a, b)| a * b).sum::<f64>() + l1(&proposed) - l1(beta);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = beta.iter().zip(&delta).map(|(b, s)| b + t * s).collect();
            let f = p.objective(&trial);
            if f <= obj + 1e-4 * t * decrease.min(0.0) || f - obj <= 1e-14 * obj.abs() || t < 1e-12 {
                if t < 1e-12 && f > obj {
                    let norm = p.optimality(beta) / total_w;
                    return finish(it, norm, params);
                }
                *beta = trial;
                obj = f;
                break;
            }
            t *= 0.5;
        }
    }
    let norm = p.optimality(beta) / total_w;
    finish(params.max_iter, norm, params)
}

/// Fits one model on already expanded features with row weights `w`.
pub fn fit_logistic(
    x: &FeatureMatrix,
    y: &[u8],
    w: &[f64],
    params: &LogisticParams,
) -> Result<(LogisticModel, FitReport), ClassifierError> {
    check_training(x, y)?;
    params.validate()?;
    let problem = PenalizedProblem {
        x,
        y,
        w,
        penalty: params.penalty,
        c: params.c,
    };
    let total_w: f64 = w.iter().sum();
    let pos: f64 = w.iter().zip(y).map(|(wi, &yi)| wi * f64::from(yi)).sum();
    let rate = clamp_probability(pos / total_w);
    let mut beta = vec![0.0; problem.dim()];
    beta[0] = (rate / (1.0 - rate)).ln();
    let report = match params.penalty {
        Penalty::L2 => newton_l2(&problem, params, &mut beta)?,
        Penalty::L1 => prox_newton_l1(&problem, params, &mut beta)?,
    };
    Ok((
        LogisticModel {
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
        },
        report,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticBag {
    pub expansion: PolynomialExpansion,
    pub members: Vec<LogisticModel>,
}

impl LogisticBag {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.expansion.n_outputs());
        self.expansion.expand_row(row, &mut buf);
        self.members.iter().map(|m| m.predict(&buf)).sum::<f64>() / self.members.len() as f64
    }
}

/// Bag member `m` is fitted on a bootstrap sample drawn from its own stream.
pub fn train_bag(x: &FeatureMatrix, y: &[u8], params: &LogisticParams, seed: u64) -> Result<LogisticBag, ClassifierError> {
    check_training(x, y)?;
    params.validate()?;
    let expansion = PolynomialExpansion::for_matrix(x, params.max_degree);
    let z = expansion.expand(x);
    let n = y.len();
    let members = (0..params.n_bag)
        .into_par_iter()
        .map(|m| {
            let mut s = rng::stream(seed, "logistic_bag", &[m as u64]);
            let mut w = vec![0.0; n];
            for _ in 0..n {
                w[s.random_range(0..n)] += 1.0;
            }
            fit_logistic(&z, y, &w, params).map(|(model, _)| model)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LogisticBag { expansion, members })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, seed: u64, p: usize) -> (FeatureMatrix, Vec<u8>) {
        let mut s = rng::stream(seed, "logit-toy", &[]);
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let row: Vec<f64> = (0..p).map(|_| s.random::<f64>()).collect();
            let z = -2.0 + 3.0 * row[0] - 1.5 * row[1] * row[1];
            y.push(u8::from(s.random::<f64>() < sigmoid(z)));
            data.extend(row);
        }
        let names = (0..p).map(|j| format!("x{j}")).collect();
        (FeatureMatrix::new(names, vec![false; p], data), y)
    }

    #[test]
    fn polynomial_expansion_layout() {
        let x = FeatureMatrix::new(vec!["a".into(), "flag".into()], vec![false, true], vec![2.0, 1.0, 0.0, 0.0]);
        let z = engineer_polynomial(&x, 4);
        assert_eq!(z.names, ["a", "flag", "a^2", "a^3", "a^4"]);
        assert_eq!(z.row(0), [2.0, 1.0, 4.0, 8.0, 16.0]);
        assert_eq!(z.row(1), [0.0; 5]);
        assert_eq!(z.n_cols(), 4 + 1);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, y) = toy(300, 1, 3);
        let z = engineer_polynomial(&x, 2);
        let w = vec![1.0; y.len()];
        let mut s = rng::stream(2, "fd", &[]);
        for penalty in [Penalty::L2, Penalty::L1] {
            let p = PenalizedProblem { x: &z, y: &y, w: &w, penalty, c: 0.7 };
            for _ in 0..5 {
                // coordinates bounded away from the L1 kink
                let beta: Vec<f64> = (0..=z.n_cols())
                    .map(|_| (0.2 + s.random::<f64>()) * if s.random::<bool>() { 1.0 } else { -1.0 })
                    .collect();
                let g = p.gradient(&beta);
                for j in 0..beta.len() {
                    let h = 1e-5;
                    let mut up = beta.clone();
                    let mut dn = beta.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (p.objective(&up) - p.objective(&dn)) / (2.0 * h);
                    assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "{penalty:?} j {j}: {fd} vs {}", g[j]);
                }
            }
        }
    }

    #[test]
    fn intercept_only_fit_equals_base_rate() {
        let y: Vec<u8> = (0..1000).map(|i| u8::from(i % 37 == 0)).collect();
        let x = FeatureMatrix::empty(y.len());
        let w = vec![1.0; y.len()];
        for penalty in [Penalty::L1, Penalty::L2] {
            let (m, _) = fit_logistic(&x, &y, &w, &LogisticParams::new(penalty, 1.0)).unwrap();
            let rate = y.iter().filter(|&&v| v == 1).count() as f64 / y.len() as f64;
            assert!((m.predict(&[]) - rate).abs() < 1e-6);
        }
    }

    #[test]
    fn separable_data_gives_monotone_fit() {
        let xs: Vec<f64> = (0..60).map(|i| i as f64 / 59.0).collect();
        let y: Vec<u8> = xs.iter().map(|&v| u8::from(v > 0.5)).collect();
        let x = FeatureMatrix::new(vec!["x".into()], vec![false], xs.clone());
        let w = vec![1.0; y.len()];
        let params = LogisticParams { max_degree: 1, ..LogisticParams::new(Penalty::L2, 1e4) };
        let (m, _) = fit_logistic(&x, &y, &w, &params).unwrap();
        let preds: Vec<f64> = xs.iter().map(|&v| m.predict(&[v])).collect();
        assert!(preds.windows(2).all(|p| p[1] >= p[0]));
        let ce = |ps: &[f64]| -> f64 {
            ps.iter().zip(&y).map(|(&p, &t)| if t == 1 { -p.ln() } else { -(1.0 - p).ln() }).sum::<f64>() / ps.len() as f64
        };
        assert!(ce(&preds) < ce(&vec![0.5; y.len()]));
    }

    #[test]
    fn l1_is_sparser_than_l2() {
        let (x, y) = toy(2_000, 3, 6);
        let z = engineer_polynomial(&x, 3);
        let w = vec![1.0; y.len()];
        let zeros = |penalty| {
            let (m, _) = fit_logistic(&z, &y, &w, &LogisticParams::new(penalty, 0.05)).unwrap();
            m.coefficients.iter().filter(|b| b.abs() < 1e-8).count()
        };
        assert!(zeros(Penalty::L1) > zeros(Penalty::L2));
    }

    #[test]
    fn converged_solution_is_stationary() {
        let (x, y) = toy(1_500, 4, 2);
        let z = engineer_polynomial(&x, 4);
        let w = vec![1.0; y.len()];
        for penalty in [Penalty::L1, Penalty::L2] {
            let params = LogisticParams::new(penalty, 5.0);
            let (m, report) = fit_logistic(&z, &y, &w, &params).unwrap();
            let mut beta = vec![m.intercept];
            beta.extend(&m.coefficients);
            let p = PenalizedProblem { x: &z, y: &y, w: &w, penalty, c: 5.0 };
            assert!(p.optimality(&beta) / y.len() as f64 <= 1e-8);
            assert!(report.gradient_norm <= 1e-8);
        }
    }

    #[test]
    fn bag_is_deterministic_and_calibrated() {
        let (x, y) = toy(3_000, 5, 2);
        let params = LogisticParams::new(Penalty::L2, 100.0);
        let a = train_bag(&x, &y, &params, 1).unwrap();
        assert_eq!(a, train_bag(&x, &y, &params, 1).unwrap());
        assert_eq!(a.members.len(), 10);
        let mean = (0..x.n_rows()).map(|i| a.predict_row(x.row(i))).sum::<f64>() / x.n_rows() as f64;
        let rate = y.iter().map(|&v| f64::from(v)).sum::<f64>() / y.len() as f64;
        assert!((mean - rate).abs() < 0.005);
    }
}
