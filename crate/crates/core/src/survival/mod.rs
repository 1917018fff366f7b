//! Censoring-aware survival estimators and the curve/grid types they share.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod cox;
pub mod km;
pub mod mtlr;
pub mod rsf;

pub use cox::{cox_fit, cox_predict, CoxConfig, CoxModel};
pub use km::{km_bounds, km_fit, nelson_aalen};
pub use mtlr::{mtlr_fit, mtlr_predict, MtlrConfig, MtlrModel};
pub use rsf::{rsf_fit, rsf_predict, RsfConfig, RsfModel};

/// Covariates with right-censored outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalData {
    pub x: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
}

impl SurvivalData {
    pub fn new(x: Vec<Vec<f64>>, times: Vec<f64>, events: Vec<bool>) -> Result<Self> {
        let data = Self { x, times, events };
        data.validate()?;
        Ok(data)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if n == 0 {
            return Err(Error::EmptyInput("survival data has no records".into()));
        }
        if self.events.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.events.len() });
        }
        if self.x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.x.len() });
        }
        let d = self.x[0].len();
        if let Some(row) = self.x.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
        if let Some(t) = self.times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::InvalidArgument(format!("invalid survival time {t}")));
        }
        if self.x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite covariate".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn n_events(&self) -> usize {
        self.events.iter().filter(|&&e| e).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: indices.iter().map(|&i| self.x[i].clone()).collect(),
            times: indices.iter().map(|&i| self.times[i]).collect(),
            events: indices.iter().map(|&i| self.events[i]).collect(),
        }
    }
}

/// How a curve is read between its grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interpolation {
    /// Right-continuous step function (Kaplan-Meier).
    Step,
    /// Piecewise linear through `(0, 1)` and the grid points.
    Linear,
}

/// Survival function `S(t)` on a strictly increasing time grid; `S = 1` before the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    times: Vec<f64>,
    probabilities: Vec<f64>,
    interpolation: Interpolation,
}

const MONOTONE_SLACK: f64 = 1e-12;

impl SurvivalCurve {
    pub fn new(times: Vec<f64>, probabilities: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        let curve = Self {
            times,
            probabilities,
            interpolation,
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Clamps to `[0, 1]` and enforces monotonicity (running minimum) before validating.
    pub(crate) fn from_raw(times: Vec<f64>, probabilities: Vec<f64>, interpolation: Interpolation) -> Result<Self> {
        let mut running = 1.0f64;
        let probabilities = probabilities
            .into_iter()
            .map(|p| {
                running = running.min(p.clamp(0.0, 1.0));
                running
            })
            .collect();
        Self::new(times, probabilities, interpolation)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.probabilities.len() {
            return Err(Error::InvalidArgument(format!(
                "curve needs matching non-empty grids ({} times, {} probabilities)",
                self.times.len(),
                self.probabilities.len()
            )));
        }
        if self.times.windows(2).any(|w| !(w[0] < w[1])) || !self.times[0].is_finite() {
            return Err(Error::InvalidArgument("curve times must be strictly increasing".into()));
        }
        if self.probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("survival probabilities must lie in [0, 1]".into()));
        }
        if self.probabilities.windows(2).any(|w| w[1] > w[0] + MONOTONE_SLACK) {
            return Err(Error::InvalidArgument("survival curve must be non-increasing".into()));
        }
        Ok(())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("validated non-empty")
    }

    /// Checks the monotone, `[0, 1]` contract without allocating.
    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn at(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&g| g <= t);
        match self.interpolation {
            Interpolation::Step => {
                if idx == 0 {
                    1.0
                } else {
                    self.probabilities[idx - 1]
                }
            }
            Interpolation::Linear => {
                if idx == self.times.len() {
                    return self.probabilities[idx - 1];
                }
                let (t0, p0) = if idx == 0 {
                    if t < 0.0 || self.times[0] <= 0.0 {
                        return 1.0;
                    }
                    (0.0, 1.0)
                } else {
                    (self.times[idx - 1], self.probabilities[idx - 1])
                };
                let (t1, p1) = (self.times[idx], self.probabilities[idx]);
                p0 + (p1 - p0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Evaluates the curve at each time of `grid`.
    pub fn resample(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&t| self.at(t)).collect()
    }

    /// Time at which the curve first reaches 0.5.
    ///
    /// Linear curves interpolate between grid points (starting from `S(0) = 1`);
    /// step curves cross at the first grid time with `S <= 0.5`. A curve that
    /// never reaches 0.5 returns its last grid time.
    pub fn median_time(&self) -> f64 {
        self.quantile_time(0.5)
    }

    pub fn reaches_median(&self) -> bool {
        self.probabilities.last().is_some_and(|&p| p <= 0.5)
    }

    pub fn quantile_time(&self, level: f64) -> f64 {
        let Some(idx) = self.probabilities.iter().position(|&p| p <= level) else {
            return self.last_time();
        };
        match self.interpolation {
            Interpolation::Step => self.times[idx],
            Interpolation::Linear => {
                let (t0, p0) = if idx == 0 {
                    if self.times[0] <= 0.0 {
                        return self.times[0];
                    }
                    (0.0, 1.0)
                } else {
                    (self.times[idx - 1], self.probabilities[idx - 1])
                };
                let (t1, p1) = (self.times[idx], self.probabilities[idx]);
                if p0 == p1 {
                    return t1;
                }
                t0 + (p0 - level) * (t1 - t0) / (p0 - p1)
            }
        }
    }
}

/// Pointwise mean of curves on a shared grid, read as piecewise linear.
pub fn mean_curve(curves: &[SurvivalCurve], grid: &[f64]) -> Result<SurvivalCurve> {
    if curves.is_empty() {
        return Err(Error::EmptyInput("no curves to average".into()));
    }
    let mut acc = vec![0.0; grid.len()];
    for c in curves {
        for (a, v) in acc.iter_mut().zip(c.resample(grid)) {
            *a += v;
        }
    }
    let n = curves.len() as f64;
    SurvivalCurve::from_raw(grid.to_vec(), acc.into_iter().map(|v| v / n).collect(), Interpolation::Linear)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridKind {
    /// Every unique observed time.
    Continuous,
    /// `floor(sqrt(#events))` quantile bins of the event times.
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub boundaries: Vec<f64>,
    pub kind: GridKind,
}

pub(crate) fn unique_sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], level: f64) -> f64 {
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn time_grid(times: &[f64], events: &[bool], kind: GridKind) -> Result<TimeGrid> {
    if times.is_empty() {
        return Err(Error::EmptyInput("time grid of an empty training set".into()));
    }
    if times.len() != events.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: events.len() });
    }
    let boundaries = match kind {
        GridKind::Continuous => unique_sorted(times),
        GridKind::Discrete => {
            let mut observed: Vec<f64> = times
                .iter()
                .zip(events)
                .filter(|(_, &e)| e)
                .map(|(&t, _)| t)
                .collect();
            let k = (observed.len() as f64).sqrt().floor() as usize;
            if k == 0 {
                return Err(Error::NoEvents("discrete grid needs at least one event".into()));
            }
            observed.sort_by(f64::total_cmp);
            let mut b: Vec<f64> = (1..=k)
                .map(|i| quantile_sorted(&observed, i as f64 / k as f64))
                .collect();
            b.dedup();
            b
        }
    };
    Ok(TimeGrid { boundaries, kind })
}

/// Model family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Km,
    Cox,
    Rsf,
    Mtlr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Km, ModelKind::Cox, ModelKind::Rsf, ModelKind::Mtlr];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Km => "km",
            ModelKind::Cox => "cox",
            ModelKind::Rsf => "rsf",
            ModelKind::Mtlr => "mtlr",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::InvalidArgument(format!("unknown model {s:?}; valid selectors: km, cox, rsf, mtlr"))
            })
    }
}

/// A fitted model of any family, serializable for the train/evaluate handoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum FittedModel {
    Km { curve: SurvivalCurve },
    Cox(CoxModel),
    Rsf(RsfModel),
    Mtlr(MtlrModel),
}

/// Hyperparameters for every family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub cox: CoxConfig,
    pub rsf: RsfConfig,
    pub mtlr: MtlrConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            cox: CoxConfig::default(),
            rsf: RsfConfig::default(),
            mtlr: MtlrConfig::default(),
        }
    }
}

impl FittedModel {
    pub fn fit(kind: ModelKind, data: &SurvivalData, config: &ModelConfig) -> Result<Self> {
        data.validate()?;
        Ok(match kind {
            ModelKind::Km => FittedModel::Km {
                curve: km_fit(&data.times, &data.events)?,
            },
            ModelKind::Cox => FittedModel::Cox(cox_fit(data, &config.cox)?),
            ModelKind::Rsf => FittedModel::Rsf(rsf_fit(data, &config.rsf)?),
            ModelKind::Mtlr => FittedModel::Mtlr(mtlr_fit(data, &config.mtlr)?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            FittedModel::Km { .. } => ModelKind::Km,
            FittedModel::Cox(_) => ModelKind::Cox,
            FittedModel::Rsf(_) => ModelKind::Rsf,
            FittedModel::Mtlr(_) => ModelKind::Mtlr,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<SurvivalCurve> {
        match self {
            FittedModel::Km { curve } => Ok(curve.clone()),
            FittedModel::Cox(m) => cox_predict(m, x),
            FittedModel::Rsf(m) => rsf_predict(m, x),
            FittedModel::Mtlr(m) => mtlr_predict(m, x),
        }
    }

    pub fn predict_all(&self, rows: &[Vec<f64>]) -> Result<Vec<SurvivalCurve>> {
        rows.iter().map(|x| self.predict(x)).collect()
    }
}
