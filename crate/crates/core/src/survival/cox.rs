//! Cox proportional hazards with Breslow ties, fitted by damped Newton-Raphson.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{unique_sorted, Interpolation, SurvivalCurve, SurvivalData};

const SEPARATION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxConfig {
    /// Stop once the gradient max-norm falls below this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for CoxConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxModel {
    pub coefficients: Vec<f64>,
    /// Unique training times (events and censorings); prediction grid.
    pub grid: Vec<f64>,
    /// Breslow baseline cumulative hazard at each grid time.
    pub baseline_cumhaz: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Records grouped by distinct time, latest first, so risk sets accumulate.
struct TimeBlocks {
    order: Vec<usize>,
    /// `(start, end)` into `order` per distinct time, descending in time.
    blocks: Vec<(usize, usize)>,
}

impl TimeBlocks {
    fn new(times: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by(|&a, &b| times[b].total_cmp(&times[a]));
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let t = times[order[i]];
            let start = i;
            while i < order.len() && times[order[i]] == t {
                i += 1;
            }
            blocks.push((start, i));
        }
        Self { order, blocks }
    }
}

fn linear_predictor(x: &[f64], beta: &[f64]) -> f64 {
    x.iter().zip(beta).map(|(a, b)| a * b).sum()
}

struct Derivatives {
    loglik: f64,
    gradient: Vec<f64>,
    /// Observed information (negative Hessian).
    information: Option<DMatrix<f64>>,
}

fn derivatives(data: &SurvivalData, blocks: &TimeBlocks, beta: &[f64], with_hessian: bool) -> Derivatives {
    let d = beta.len();
    let eta: Vec<f64> = data.x.iter().map(|x| linear_predictor(x, beta)).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();

    let mut s0 = 0.0;
    let mut s1 = vec![0.0; d];
    let mut s2 = if with_hessian { Some(DMatrix::<f64>::zeros(d, d)) } else { None };
    let mut loglik = 0.0;
    let mut gradient = vec![0.0; d];
    let mut information = if with_hessian { Some(DMatrix::<f64>::zeros(d, d)) } else { None };

    for &(start, end) in &blocks.blocks {
        let members = &blocks.order[start..end];
        for &i in members {
            s0 += w[i];
            for (a, x) in s1.iter_mut().zip(&data.x[i]) {
                *a += w[i] * x;
            }
            if let Some(s2) = s2.as_mut() {
                let xi = &data.x[i];
                for r in 0..d {
                    let wr = w[i] * xi[r];
                    for c in r..d {
                        s2[(r, c)] += wr * xi[c];
                    }
                }
            }
        }
        let deaths = members.iter().filter(|&&i| data.events[i]).count() as f64;
        if deaths == 0.0 {
            continue;
        }
        let log_s0 = s0.ln() + shift;
        for &i in members.iter().filter(|&&i| data.events[i]) {
            loglik += eta[i] - log_s0;
            for (g, x) in gradient.iter_mut().zip(&data.x[i]) {
                *g += x;
            }
        }
        for (g, a) in gradient.iter_mut().zip(&s1) {
            *g -= deaths * a / s0;
        }
        if let (Some(info), Some(s2)) = (information.as_mut(), s2.as_ref()) {
            for r in 0..d {
                for c in r..d {
                    let v = deaths * (s2[(r, c)] / s0 - s1[r] * s1[c] / (s0 * s0));
                    info[(r, c)] += v;
                }
            }
        }
    }
    if let Some(info) = information.as_mut() {
        for r in 0..d {
            for c in 0..r {
                info[(r, c)] = info[(c, r)];
            }
        }
    }
    Derivatives {
        loglik,
        gradient,
        information,
    }
}

/// Breslow partial log-likelihood.
pub fn partial_log_likelihood(data: &SurvivalData, beta: &[f64]) -> f64 {
    derivatives(data, &TimeBlocks::new(&data.times), beta, false).loglik
}

/// Analytic gradient of [`partial_log_likelihood`].
pub fn partial_gradient(data: &SurvivalData, beta: &[f64]) -> Vec<f64> {
    derivatives(data, &TimeBlocks::new(&data.times), beta, false).gradient
}

fn column_sd(data: &SurvivalData, j: usize) -> f64 {
    let n = data.len() as f64;
    let mean = data.x.iter().map(|r| r[j]).sum::<f64>() / n;
    (data.x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves `(info + mu I) step = gradient`, growing `mu` until the system is positive definite.
fn newton_step(info: &DMatrix<f64>, gradient: &[f64]) -> Option<Vec<f64>> {
    let d = gradient.len();
    let g = DVector::from_column_slice(gradient);
    let scale = (0..d).map(|i| info[(i, i)].abs()).fold(1.0, f64::max);
    let mut mu = 1e-12 * scale;
    for _ in 0..12 {
        let mut m = info.clone();
        for i in 0..d {
            m[(i, i)] += mu;
        }
        if let Some(chol) = m.cholesky() {
            let step = chol.solve(&g);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step.iter().copied().collect());
            }
        }
        mu *= 100.0;
    }
    None
}

pub fn cox_fit(data: &SurvivalData, config: &CoxConfig) -> Result<CoxModel> {
    data.validate()?;
    if data.n_events() == 0 {
        return Err(Error::NoEvents("Cox fit needs at least one event".into()));
    }
    let d = data.dim();
    let blocks = TimeBlocks::new(&data.times);
    let mut beta = vec![0.0; d];
    let mut current = derivatives(data, &blocks, &beta, true);
    let mut iterations = 0;
    let mut converged = max_abs(&current.gradient) < config.tolerance;

    while !converged && iterations < config.max_iter {
        iterations += 1;
        let info = current.information.as_ref().expect("hessian requested");
        let Some(step) = newton_step(info, &current.gradient) else {
            break;
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let loglik = derivatives(data, &blocks, &trial, false).loglik;
            if loglik.is_finite() && loglik >= current.loglik {
                let next = derivatives(data, &blocks, &trial, true);
                accepted = Some((trial, next));
                break;
            }
            scale *= 0.5;
        }
        let Some((trial, next)) = accepted else {
            // no ascent direction left at working precision
            converged = max_abs(&current.gradient) < config.tolerance.sqrt();
            break;
        };
        beta = trial;
        current = next;
        converged = max_abs(&current.gradient) < config.tolerance;
    }

    if let Some((index, &value)) = beta.iter().enumerate().find(|(_, b)| !b.is_finite()) {
        return Err(Error::Separation { index, value });
    }
    if !current.loglik.is_finite() {
        return Err(Error::Separation { index: 0, value: f64::NAN });
    }
    // a finite maximum lies strictly above the likelihood at 2 * beta; under
    // separation the likelihood keeps rising along beta
    if beta.iter().any(|&b| b != 0.0) {
        let doubled: Vec<f64> = beta.iter().map(|b| 2.0 * b).collect();
        let further = derivatives(data, &blocks, &doubled, false).loglik;
        if further >= current.loglik - SEPARATION_SLACK {
            let (index, value) = beta
                .iter()
                .enumerate()
                .map(|(j, &b)| (j, b, b.abs() * column_sd(data, j)))
                .max_by(|a, b| a.2.total_cmp(&b.2))
                .map(|(j, b, _)| (j, b))
                .expect("non-empty coefficients");
            return Err(Error::Separation { index, value });
        }
    }

    let (grid, baseline_cumhaz) = breslow_baseline(data, &beta);
    Ok(CoxModel {
        coefficients: beta,
        grid,
        baseline_cumhaz,
        log_likelihood: current.loglik,
        iterations,
        converged,
    })
}

/// Breslow baseline cumulative hazard on the unique training times.
fn breslow_baseline(data: &SurvivalData, beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let grid = unique_sorted(&data.times);
    let eta: Vec<f64> = data.x.iter().map(|x| linear_predictor(x, beta)).collect();
    let shift = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let blocks = TimeBlocks::new(&data.times);
    // blocks run latest-first; collect increments then reverse
    let mut increments = Vec::with_capacity(grid.len());
    let mut s0 = 0.0;
    for &(start, end) in &blocks.blocks {
        let members = &blocks.order[start..end];
        for &i in members {
            s0 += (eta[i] - shift).exp();
        }
        let deaths = members.iter().filter(|&&i| data.events[i]).count() as f64;
        let inc = if deaths > 0.0 {
            (deaths.ln() - s0.ln() - shift).exp()
        } else {
            0.0
        };
        increments.push(inc);
    }
    increments.reverse();
    let mut h = 0.0;
    let cumhaz = increments
        .into_iter()
        .map(|inc| {
            h += inc;
            h
        })
        .collect();
    (grid, cumhaz)
}

impl CoxModel {
    pub fn risk_score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coefficients.len(),
                got: x.len(),
            });
        }
        Ok(linear_predictor(x, &self.coefficients))
    }
}

/// `S(t | x) = exp(-H0(t) exp(x . beta))` on the training grid.
pub fn cox_predict(model: &CoxModel, x: &[f64]) -> Result<SurvivalCurve> {
    let eta = model.risk_score(x)?;
    let probs = model
        .baseline_cumhaz
        .iter()
        .map(|&h| if h == 0.0 { 1.0 } else { (-(h.ln() + eta).exp()).exp() })
        .collect();
    SurvivalCurve::from_raw(model.grid.clone(), probs, Interpolation::Linear)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> SurvivalData {
        SurvivalData::new(
            vec![vec![1.0], vec![0.0], vec![1.0], vec![0.0], vec![1.0], vec![0.0]],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![true, true, false, true, true, true],
        )
        .unwrap()
    }

    #[test]
    fn stationary_at_fit() {
        let data = toy();
        let m = cox_fit(&data, &CoxConfig::default()).unwrap();
        assert!(m.converged);
        assert!(max_abs(&partial_gradient(&data, &m.coefficients)) < 1e-6);
        assert!(m.log_likelihood >= partial_log_likelihood(&data, &[0.0]));
    }

    #[test]
    fn zero_covariate_stays_zero() {
        let data = SurvivalData::new(
            vec![vec![0.0, 1.0], vec![0.0, -1.0], vec![0.0, 0.5], vec![0.0, 0.3]],
            vec![2.0, 1.0, 4.0, 3.0],
            vec![true, true, true, false],
        )
        .unwrap();
        let m = cox_fit(&data, &CoxConfig::default()).unwrap();
        assert_eq!(m.coefficients[0], 0.0);
    }

    #[test]
    fn duplication_invariance() {
        let data = toy();
        let dup = data.subset(&(0..12).map(|i| i % 6).collect::<Vec<_>>());
        let a = cox_fit(&data, &CoxConfig::default()).unwrap();
        let b = cox_fit(&dup, &CoxConfig::default()).unwrap();
        assert!((a.coefficients[0] - b.coefficients[0]).abs() < 1e-8);
    }

    #[test]
    fn baseline_prediction() {
        let data = toy();
        let m = cox_fit(&data, &CoxConfig::default()).unwrap();
        let zero = cox_predict(&m, &[0.0]).unwrap();
        for (p, h) in zero.probabilities().iter().zip(&m.baseline_cumhaz) {
            assert!((p - (-h).exp()).abs() < 1e-12);
        }
        let hi = cox_predict(&m, &[1.0]).unwrap();
        let lo = cox_predict(&m, &[-1.0]).unwrap();
        let (riskier, safer) = if m.coefficients[0] > 0.0 { (hi, lo) } else { (lo, hi) };
        for (a, b) in riskier.probabilities().iter().zip(safer.probabilities()) {
            assert!(a <= b);
        }
        assert!(cox_predict(&m, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn separated_data_is_rejected() {
        let data = SurvivalData::new(
            vec![vec![1.0], vec![1.0], vec![1.0], vec![0.0], vec![0.0], vec![0.0]],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            vec![true; 6],
        )
        .unwrap();
        assert!(matches!(cox_fit(&data, &CoxConfig::default()), Err(Error::Separation { index: 0, .. })));
    }

    #[test]
    fn needs_an_event() {
        let data = SurvivalData::new(vec![vec![1.0], vec![0.0]], vec![1.0, 2.0], vec![false, false]).unwrap();
        assert!(matches!(cox_fit(&data, &CoxConfig::default()), Err(Error::NoEvents(_))));
    }
}
