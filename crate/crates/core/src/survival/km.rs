use crate::error::{Error, Result};

use super::{Interpolation, SurvivalCurve};

/// Distinct observed times with event counts and risk-set sizes.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RiskTable {
    pub times: Vec<f64>,
    pub deaths: Vec<f64>,
    pub at_risk: Vec<f64>,
}

pub(crate) fn risk_table(times: &[f64], events: &[bool]) -> Result<RiskTable> {
    weighted_risk_table(times, events, None)
}

/// Risk table with optional per-record multiplicities (bootstrap counts).
pub(crate) fn weighted_risk_table(times: &[f64], events: &[bool], weights: Option<&[f64]>) -> Result<RiskTable> {
    if times.is_empty() {
        return Err(Error::EmptyInput("no survival times".into()));
    }
    if times.len() != events.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: events.len() });
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..times.len()).map(weight).sum();

    let mut table = RiskTable {
        times: Vec::new(),
        deaths: Vec::new(),
        at_risk: Vec::new(),
    };
    let mut remaining = total;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let mut deaths = 0.0;
        let mut leaving = 0.0;
        while i < order.len() && times[order[i]] == t {
            let w = weight(order[i]);
            leaving += w;
            if events[order[i]] {
                deaths += w;
            }
            i += 1;
        }
        table.times.push(t);
        table.deaths.push(deaths);
        table.at_risk.push(remaining);
        remaining -= leaving;
    }
    Ok(table)
}

fn product_limit(table: &RiskTable, extra_at_risk: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut s = 1.0;
    (0..table.times.len())
        .map(|j| {
            let n = table.at_risk[j] + extra_at_risk(j);
            if table.deaths[j] > 0.0 && n > 0.0 {
                s *= (n - table.deaths[j]) / n;
            }
            s
        })
        .collect()
}

/// Kaplan-Meier product-limit estimate over the distinct observed times.
pub fn km_fit(times: &[f64], events: &[bool]) -> Result<SurvivalCurve> {
    let table = risk_table(times, events)?;
    let probs = product_limit(&table, |_| 0.0);
    SurvivalCurve::from_raw(table.times, probs, Interpolation::Step)
}

/// Best/worst-case curves: censored records never fail (upper) or fail at
/// their censoring time (lower). Both share the KM grid.
pub fn km_bounds(times: &[f64], events: &[bool]) -> Result<(SurvivalCurve, SurvivalCurve)> {
    let table = risk_table(times, events)?;
    // censored records that left before each grid time stay at risk in the upper bound
    let mut censored_before = Vec::with_capacity(table.times.len());
    let mut acc = 0.0;
    for j in 0..table.times.len() {
        censored_before.push(acc);
        let leaving = if j + 1 < table.times.len() {
            table.at_risk[j] - table.at_risk[j + 1]
        } else {
            table.at_risk[j]
        };
        acc += leaving - table.deaths[j];
    }
    let upper = product_limit(&table, |j| censored_before[j]);
    let all_events = vec![true; times.len()];
    let lower_table = risk_table(times, &all_events)?;
    let lower = product_limit(&lower_table, |_| 0.0);
    Ok((
        SurvivalCurve::from_raw(table.times.clone(), upper, Interpolation::Step)?,
        SurvivalCurve::from_raw(lower_table.times, lower, Interpolation::Step)?,
    ))
}

/// Nelson-Aalen cumulative hazard at the distinct event times.
pub fn nelson_aalen(times: &[f64], events: &[bool]) -> Result<(Vec<f64>, Vec<f64>)> {
    let table = risk_table(times, events)?;
    Ok(cumulative_hazard(&table))
}

pub(crate) fn cumulative_hazard(table: &RiskTable) -> (Vec<f64>, Vec<f64>) {
    let mut h = 0.0;
    let mut out_t = Vec::new();
    let mut out_h = Vec::new();
    for j in 0..table.times.len() {
        if table.deaths[j] > 0.0 {
            h += table.deaths[j] / table.at_risk[j];
            out_t.push(table.times[j]);
            out_h.push(h);
        }
    }
    (out_t, out_h)
}
