//! Censoring-aware error metrics, calibration, cumulative relative accuracy,
//! stratified curves and the k-fold evaluation harness.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dataset::{stratified_kfold, zscore_apply, zscore_fit, SupervisedDataset};
use crate::error::{Error, Result};
use crate::survival::{
    km_fit, quantile_sorted, unique_sorted, FittedModel, ModelConfig, ModelKind, SurvivalCurve,
};

pub const D_CAL_BINS: usize = 10;
/// Fewest uncensored records for which the calibration test is run.
pub const D_CAL_MIN_EVENTS: usize = 10;

pub fn median_survival_time(curve: &SurvivalCurve) -> f64 {
    curve.median_time()
}

fn check_aligned(predictions: &[f64], times: &[f64], events: &[bool]) -> Result<()> {
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no predictions to score".into()));
    }
    if times.len() != predictions.len() {
        return Err(Error::DimensionMismatch {
            expected: predictions.len(),
            got: times.len(),
        });
    }
    if events.len() != predictions.len() {
        return Err(Error::DimensionMismatch {
            expected: predictions.len(),
            got: events.len(),
        });
    }
    Ok(())
}

/// Uncensored records score `|t - t_hat|`, censored ones `max(t - t_hat, 0)`; unweighted.
pub fn mae_hinge(predictions: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    check_aligned(predictions, times, events)?;
    let total: f64 = predictions
        .iter()
        .zip(times)
        .zip(events)
        .map(|((&p, &t), &e)| if e { (t - p).abs() } else { (t - p).max(0.0) })
        .sum();
    Ok(total / predictions.len() as f64)
}

/// `E[T | T > t]` under a step Kaplan-Meier curve; mass left after the last
/// step sits at the last event time.
pub fn margin_time(km: &SurvivalCurve, t: f64) -> f64 {
    let s_t = km.at(t);
    if s_t <= 0.0 {
        return t;
    }
    let times = km.times();
    let probs = km.probabilities();
    let mut prev = 1.0;
    let mut last_event = None;
    let mut weighted = 0.0;
    for (&tj, &sj) in times.iter().zip(probs) {
        let mass = prev - sj;
        if mass > 0.0 {
            last_event = Some(tj);
            if tj > t {
                weighted += tj * mass;
            }
        }
        prev = sj;
    }
    let residual = prev;
    let tail_at = last_event.map_or(t, |e: f64| e.max(t));
    (weighted + residual * tail_at) / s_t
}

/// Confidence weight: 1 for events, `1 - S_KM(t)` for censored records.
pub fn censoring_weight(km: &SurvivalCurve, t: f64, event: bool) -> f64 {
    if event {
        1.0
    } else {
        1.0 - km.at(t)
    }
}

fn weighted_mae(predictions: &[f64], targets: &[f64], weights: &[f64]) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for ((&p, &y), &w) in predictions.iter().zip(targets).zip(weights) {
        if w > 0.0 {
            num += w * (y - p).abs();
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::EmptyInput("every record has zero confidence weight".into()));
    }
    Ok(num / den)
}

/// Censored targets replaced by their KM margin time, then the weighted mean.
pub fn mae_margin(predictions: &[f64], times: &[f64], events: &[bool], train_km: &SurvivalCurve) -> Result<f64> {
    check_aligned(predictions, times, events)?;
    let targets: Vec<f64> = times
        .iter()
        .zip(events)
        .map(|(&t, &e)| if e { t } else { margin_time(train_km, t) })
        .collect();
    let weights: Vec<f64> = times
        .iter()
        .zip(events)
        .map(|(&t, &e)| censoring_weight(train_km, t, e))
        .collect();
    weighted_mae(predictions, &targets, &weights)
}

/// Area under the step KM curve from 0 to `horizon`.
pub fn restricted_mean(times: &[f64], events: &[bool], horizon: f64) -> Result<f64> {
    let km = km_fit(times, events)?;
    let mut area = 0.0;
    let mut prev_t = 0.0;
    let mut prev_s = 1.0;
    for (&tj, &sj) in km.times().iter().zip(km.probabilities()) {
        if tj >= horizon {
            break;
        }
        area += prev_s * (tj - prev_t);
        prev_t = tj;
        prev_s = sj;
    }
    Ok(area + prev_s * (horizon - prev_t).max(0.0))
}

fn max_time(times: &[f64]) -> f64 {
    times.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Jackknife pseudo-values `N theta - (N - 1) theta_(-i)` of the KM mean
/// lifetime, integrated to the largest observed time.
pub fn pseudo_observations(times: &[f64], events: &[bool]) -> Result<Vec<f64>> {
    let n = times.len();
    if n < 2 {
        return Err(Error::InvalidArgument("pseudo-observations need at least 2 records".into()));
    }
    if events.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: events.len() });
    }
    let horizon = max_time(times);
    let full = restricted_mean(times, events, horizon)?;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let t: Vec<f64> = times.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &v)| v).collect();
            let e: Vec<bool> = events.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, &v)| v).collect();
            let loo = restricted_mean(&t, &e, horizon)?;
            Ok(n as f64 * full - (n - 1) as f64 * loo)
        })
        .collect()
}

/// Pseudo-value of one extra record appended to the training set.
fn appended_pseudo(train_times: &[f64], train_events: &[bool], t: f64, event: bool) -> Result<f64> {
    let n = train_times.len();
    let mut times = train_times.to_vec();
    let mut events = train_events.to_vec();
    times.push(t);
    events.push(event);
    let horizon = max_time(&times);
    let with = restricted_mean(&times, &events, horizon)?;
    let without = restricted_mean(train_times, train_events, horizon)?;
    Ok((n + 1) as f64 * with - n as f64 * without)
}

/// Censored targets replaced by their pseudo-value against the training set,
/// then the same weighted mean as [`mae_margin`].
pub fn mae_pseudo(
    predictions: &[f64],
    times: &[f64],
    events: &[bool],
    train_times: &[f64],
    train_events: &[bool],
) -> Result<f64> {
    check_aligned(predictions, times, events)?;
    if train_times.is_empty() {
        return Err(Error::InvalidArgument("pseudo-observations need at least 2 records".into()));
    }
    let train_km = km_fit(train_times, train_events)?;
    let targets = times
        .iter()
        .zip(events)
        .map(|(&t, &e)| if e { Ok(t) } else { appended_pseudo(train_times, train_events, t, false) })
        .collect::<Result<Vec<f64>>>()?;
    let weights: Vec<f64> = times
        .iter()
        .zip(events)
        .map(|(&t, &e)| censoring_weight(&train_km, t, e))
        .collect();
    weighted_mae(predictions, &targets, &weights)
}

/// MAE against the pre-censoring event times.
pub fn true_mae(predictions: &[f64], event_times: &[f64]) -> Result<f64> {
    check_aligned(predictions, event_times, &vec![true; event_times.len()])?;
    Ok(predictions.iter().zip(event_times).map(|(p, t)| (t - p).abs()).sum::<f64>() / predictions.len() as f64)
}

/// Positive when the censored metric underestimates the true error.
pub fn emae(true_value: f64, censored_value: f64) -> f64 {
    true_value - censored_value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DCalibration {
    pub statistic: f64,
    pub p_value: f64,
    pub counts: [usize; D_CAL_BINS],
}

impl DCalibration {
    pub fn is_calibrated(&self) -> bool {
        self.p_value > 0.05
    }
}

/// Pearson chi-square uniformity test of survival probabilities over ten deciles.
pub fn d_calibration_from_values(values: &[f64]) -> Result<DCalibration> {
    if values.len() < D_CAL_MIN_EVENTS {
        return Err(Error::NoEvents(format!(
            "D-calibration needs at least {D_CAL_MIN_EVENTS} uncensored records, got {}",
            values.len()
        )));
    }
    let mut counts = [0usize; D_CAL_BINS];
    for &s in values {
        let bin = ((s.clamp(0.0, 1.0) * D_CAL_BINS as f64).floor() as usize).min(D_CAL_BINS - 1);
        counts[bin] += 1;
    }
    let expected = values.len() as f64 / D_CAL_BINS as f64;
    let statistic: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let chi2 = ChiSquared::new((D_CAL_BINS - 1) as f64).expect("positive degrees of freedom");
    let p_value = if statistic == 0.0 { 1.0 } else { chi2.sf(statistic) };
    Ok(DCalibration {
        statistic,
        p_value,
        counts,
    })
}

/// Uses `S_i(t_i)` of the uncensored records only.
pub fn d_calibration(curves: &[SurvivalCurve], times: &[f64], events: &[bool]) -> Result<DCalibration> {
    if curves.len() != times.len() || events.len() != times.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: curves.len().min(events.len()),
        });
    }
    let values: Vec<f64> = curves
        .iter()
        .zip(times)
        .zip(events)
        .filter(|(_, &e)| e)
        .map(|((c, &t), _)| c.at(t))
        .collect();
    d_calibration_from_values(&values)
}

/// Relative accuracy at each inspection: `1 - |actual - predicted| / actual`.
pub fn relative_accuracy(predicted: &[f64], actual: &[f64]) -> Result<Vec<f64>> {
    if predicted.is_empty() {
        return Err(Error::EmptyInput("no inspection windows".into()));
    }
    if predicted.len() != actual.len() {
        return Err(Error::DimensionMismatch {
            expected: actual.len(),
            got: predicted.len(),
        });
    }
    predicted
        .iter()
        .zip(actual)
        .map(|(&p, &a)| {
            if a == 0.0 {
                return Err(Error::InvalidArgument("actual RUL is zero at an inspection window".into()));
            }
            Ok(1.0 - (a - p).abs() / a)
        })
        .collect()
}

/// How the weighted relative accuracies are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CraScaling {
    /// `sum_k w_k RA_k`; perfect predictions score 1.
    #[default]
    Normalized,
    /// The same sum multiplied by the number of windows K.
    LeadingK,
}

/// Cumulative relative accuracy with weights `w_k = k / sum(k)`.
pub fn cra(predicted: &[f64], actual: &[f64]) -> Result<f64> {
    cra_scaled(predicted, actual, CraScaling::Normalized)
}

pub fn cra_scaled(predicted: &[f64], actual: &[f64], scaling: CraScaling) -> Result<f64> {
    let ra = relative_accuracy(predicted, actual)?;
    let k = ra.len() as f64;
    let total = k * (k + 1.0) / 2.0;
    let sum: f64 = ra.iter().enumerate().map(|(i, r)| (i + 1) as f64 / total * r).sum();
    Ok(match scaling {
        CraScaling::Normalized => sum,
        CraScaling::LeadingK => k * sum,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedCurves {
    pub column: usize,
    pub quantile: f64,
    pub threshold: f64,
    pub overall: SurvivalCurve,
    /// Records with covariate `<= threshold`.
    pub below: SurvivalCurve,
    pub above: SurvivalCurve,
    pub n_below: usize,
    pub n_above: usize,
}

/// Mean predicted curves over the whole set and over the two sides of a covariate quantile.
pub fn stratified_curves(model: &FittedModel, rows: &[Vec<f64>], column: usize, quantile: f64) -> Result<StratifiedCurves> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("no test records to stratify".into()));
    }
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::InvalidArgument(format!("quantile must lie in [0, 1], got {quantile}")));
    }
    if let Some(r) = rows.iter().find(|r| column >= r.len()) {
        return Err(Error::DimensionMismatch {
            expected: column + 1,
            got: r.len(),
        });
    }
    let mut values: Vec<f64> = rows.iter().map(|r| r[column]).collect();
    values.sort_by(f64::total_cmp);
    let threshold = quantile_sorted(&values, quantile);
    let curves = model.predict_all(rows)?;
    let grid = unique_sorted(&curves.iter().flat_map(|c| c.times().to_vec()).collect::<Vec<_>>());
    let (below, above): (Vec<_>, Vec<_>) = curves
        .iter()
        .zip(rows)
        .partition(|(_, r)| r[column] <= threshold);
    if below.is_empty() || above.is_empty() {
        return Err(Error::EmptyInput(format!(
            "stratum empty when splitting column {column} at quantile {quantile}"
        )));
    }
    let mean = |cs: Vec<&SurvivalCurve>| {
        let owned: Vec<SurvivalCurve> = cs.into_iter().cloned().collect();
        crate::survival::mean_curve(&owned, &grid)
    };
    Ok(StratifiedCurves {
        column,
        quantile,
        threshold,
        overall: mean(curves.iter().collect())?,
        n_below: below.len(),
        n_above: above.len(),
        below: mean(below.into_iter().map(|(c, _)| c).collect())?,
        above: mean(above.into_iter().map(|(c, _)| c).collect())?,
    })
}

/// Scores of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_censored_test: usize,
    pub mae_hinge: f64,
    pub mae_margin: f64,
    pub mae_pseudo: f64,
    pub true_mae: f64,
    pub emae_hinge: f64,
    pub emae_margin: f64,
    pub emae_pseudo: f64,
    /// Absent when the fold has too few uncensored test records.
    pub d_cal_p: Option<f64>,
    pub d_cal_counts: Option<[usize; D_CAL_BINS]>,
    /// Mean CRA over the test bearings.
    pub cra: Option<f64>,
    pub cra_per_bearing: BTreeMap<String, f64>,
    /// Test curves that never reach 0.5 (median falls back to the last grid time).
    pub n_median_fallback: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Sample standard deviation; zero for a single value.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub mae_hinge: MeanSd,
    pub mae_margin: MeanSd,
    pub mae_pseudo: MeanSd,
    pub true_mae: MeanSd,
    pub emae_hinge: MeanSd,
    pub emae_margin: MeanSd,
    pub emae_pseudo: MeanSd,
    pub d_cal_p: Option<MeanSd>,
    pub cra: Option<MeanSd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: ModelKind,
    pub n_folds: usize,
    pub seed: u64,
    pub censor_pct: f64,
    pub folds: Vec<FoldReport>,
    pub aggregate: AggregateReport,
}

impl EvaluationReport {
    fn aggregate(folds: &[FoldReport]) -> AggregateReport {
        let col = |f: fn(&FoldReport) -> f64| MeanSd::of(&folds.iter().map(f).collect::<Vec<_>>()).expect("folds");
        let opt = |f: fn(&FoldReport) -> Option<f64>| MeanSd::of(&folds.iter().filter_map(f).collect::<Vec<_>>());
        AggregateReport {
            mae_hinge: col(|f| f.mae_hinge),
            mae_margin: col(|f| f.mae_margin),
            mae_pseudo: col(|f| f.mae_pseudo),
            true_mae: col(|f| f.true_mae),
            emae_hinge: col(|f| f.emae_hinge),
            emae_margin: col(|f| f.emae_margin),
            emae_pseudo: col(|f| f.emae_pseudo),
            d_cal_p: opt(|f| f.d_cal_p),
            cra: opt(|f| f.cra),
        }
    }

    /// Rows of `metric,mean,sd` with a `mean ± sd` rendering.
    pub fn summary_rows(&self) -> Vec<(String, MeanSd)> {
        let a = &self.aggregate;
        let mut rows = vec![
            ("mae_hinge".to_string(), a.mae_hinge),
            ("mae_margin".to_string(), a.mae_margin),
            ("mae_pseudo".to_string(), a.mae_pseudo),
            ("true_mae".to_string(), a.true_mae),
            ("emae_hinge".to_string(), a.emae_hinge),
            ("emae_margin".to_string(), a.emae_margin),
            ("emae_pseudo".to_string(), a.emae_pseudo),
        ];
        if let Some(v) = a.d_cal_p {
            rows.push(("d_cal_p".to_string(), v));
        }
        if let Some(v) = a.cra {
            rows.push(("cra".to_string(), v));
        }
        rows
    }
}

/// Per-bearing CRA over the bearing's test records, inspected in order of
/// decreasing remaining life.
fn cra_by_bearing(ids: &[&str], predictions: &[f64], actual: &[f64]) -> BTreeMap<String, f64> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, id) in ids.iter().enumerate() {
        groups.entry(id).or_default().push(i);
    }
    groups
        .into_iter()
        .filter_map(|(id, mut idx)| {
            idx.sort_by(|&a, &b| actual[b].total_cmp(&actual[a]));
            let p: Vec<f64> = idx.iter().map(|&i| predictions[i]).collect();
            let a: Vec<f64> = idx.iter().map(|&i| actual[i]).collect();
            cra(&p, &a).ok().map(|v| (id.to_string(), v))
        })
        .collect()
}

/// Stratified k-fold evaluation. `truth` holds the same records as `observed`
/// before censoring; folds, fitting and censored metrics use `observed`,
/// true MAE and CRA use `truth`.
pub fn cross_validate(
    truth: &SupervisedDataset,
    observed: &SupervisedDataset,
    kind: ModelKind,
    config: &ModelConfig,
    k: usize,
    seed: u64,
) -> Result<(EvaluationReport, Vec<Vec<SurvivalCurve>>)> {
    if truth.len() != observed.len() {
        return Err(Error::DimensionMismatch {
            expected: observed.len(),
            got: truth.len(),
        });
    }
    let folds = stratified_kfold(&observed.times(), &observed.events(), k, seed)?;
    let results = folds
        .par_iter()
        .enumerate()
        .map(|(fold, split)| evaluate_fold(truth, observed, kind, config, fold, &split.train, &split.test))
        .collect::<Result<Vec<_>>>()?;
    let (reports, curves): (Vec<FoldReport>, Vec<Vec<SurvivalCurve>>) = results.into_iter().unzip();
    let aggregate = EvaluationReport::aggregate(&reports);
    Ok((
        EvaluationReport {
            model: kind,
            n_folds: k,
            seed,
            censor_pct: observed.provenance.censor_pct,
            folds: reports,
            aggregate,
        },
        curves,
    ))
}

fn evaluate_fold(
    truth: &SupervisedDataset,
    observed: &SupervisedDataset,
    kind: ModelKind,
    config: &ModelConfig,
    fold: usize,
    train_idx: &[usize],
    test_idx: &[usize],
) -> Result<(FoldReport, Vec<SurvivalCurve>)> {
    let train = observed.subset(train_idx);
    let test = observed.subset(test_idx);
    let stats = zscore_fit(&train)?;
    let train_z = zscore_apply(&stats, &train)?.to_survival_data();
    let test_z = zscore_apply(&stats, &test)?.to_survival_data();

    let model = FittedModel::fit(kind, &train_z, config)?;
    let curves = model.predict_all(&test_z.x)?;
    let medians: Vec<f64> = curves.iter().map(median_survival_time).collect();
    let n_median_fallback = curves.iter().filter(|c| !c.reaches_median()).count();

    let train_km = km_fit(&train_z.times, &train_z.events)?;
    let hinge = mae_hinge(&medians, &test_z.times, &test_z.events)?;
    let margin = mae_margin(&medians, &test_z.times, &test_z.events, &train_km)?;
    let pseudo = mae_pseudo(&medians, &test_z.times, &test_z.events, &train_z.times, &train_z.events)?;
    let true_times: Vec<f64> = test_idx.iter().map(|&i| truth.records[i].time).collect();
    let truth_mae = true_mae(&medians, &true_times)?;

    let dcal = d_calibration(&curves, &test_z.times, &test_z.events).ok();
    let ids: Vec<&str> = test_idx.iter().map(|&i| truth.records[i].bearing_id.as_str()).collect();
    let cra_per_bearing = cra_by_bearing(&ids, &medians, &true_times);
    let cra_mean = MeanSd::of(&cra_per_bearing.values().copied().collect::<Vec<_>>()).map(|m| m.mean);

    Ok((
        FoldReport {
            fold,
            n_train: train_idx.len(),
            n_test: test_idx.len(),
            n_censored_test: test.n_censored(),
            mae_hinge: hinge,
            mae_margin: margin,
            mae_pseudo: pseudo,
            true_mae: truth_mae,
            emae_hinge: emae(truth_mae, hinge),
            emae_margin: emae(truth_mae, margin),
            emae_pseudo: emae(truth_mae, pseudo),
            d_cal_p: dcal.as_ref().map(|d| d.p_value),
            d_cal_counts: dcal.map(|d| d.counts),
            cra: cra_mean,
            cra_per_bearing,
            n_median_fallback,
        },
        curves,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::Interpolation;

    #[test]
    fn hinge_cases() {
        assert_eq!(mae_hinge(&[12.0], &[10.0], &[false]).unwrap(), 0.0);
        assert_eq!(mae_hinge(&[7.0], &[10.0], &[false]).unwrap(), 3.0);
        assert_eq!(mae_hinge(&[7.0, 12.0], &[10.0, 10.0], &[true, true]).unwrap(), 2.5);
        assert!(mae_hinge(&[], &[], &[]).is_err());
    }

    #[test]
    fn margin_on_two_step_km() {
        let km = km_fit(&[10.0, 20.0], &[true, true]).unwrap();
        assert_eq!(margin_time(&km, 12.0), 20.0);
        assert_eq!(censoring_weight(&km, 12.0, false), 0.5);
        // events target 15, censored target 20 with weight 0.5
        let m = mae_margin(&[15.0, 14.0], &[15.0, 12.0], &[true, false], &km).unwrap();
        assert!((m - 0.5 * 6.0 / 1.5).abs() < 1e-12);
    }

    #[test]
    fn early_censoring_is_excluded() {
        let km = km_fit(&[10.0, 20.0], &[true, true]).unwrap();
        assert_eq!(censoring_weight(&km, 5.0, false), 0.0);
        let m = mae_margin(&[1.0, 100.0], &[3.0, 5.0], &[true, false], &km).unwrap();
        assert_eq!(m, 2.0);
    }

    #[test]
    fn margin_residual_mass() {
        // S: 1 -> 2/3 at 1, flat after censoring at 2 and 3
        let km = km_fit(&[1.0, 2.0, 3.0], &[true, false, false]).unwrap();
        assert!((margin_time(&km, 1.5) - 1.5).abs() < 1e-12);
        let km = km_fit(&[1.0, 2.0, 3.0], &[true, true, false]).unwrap();
        assert!((margin_time(&km, 2.5) - 2.5).abs() < 1e-12);
        assert!((margin_time(&km, 1.5) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn jackknife_on_three_events() {
        let t = [1.0, 2.0, 3.0];
        let e = [true; 3];
        let theta = restricted_mean(&t, &e, 3.0).unwrap();
        assert!((theta - 2.0).abs() < 1e-12);
        let p = pseudo_observations(&t, &e).unwrap();
        for (pi, ti) in p.iter().zip(t) {
            assert!((pi - ti).abs() < 1e-12);
        }
        assert!(pseudo_observations(&[1.0], &[true]).is_err());
    }

    #[test]
    fn emae_sign() {
        assert_eq!(emae(10.0, 8.0), 2.0);
        assert_eq!(emae(4.0, 4.0), 0.0);
    }

    #[test]
    fn dcal_uniform_and_concentrated() {
        let uniform: Vec<f64> = (0..50).map(|i| 0.05 + 0.1 * (i % 10) as f64).collect();
        let d = d_calibration_from_values(&uniform).unwrap();
        assert_eq!(d.statistic, 0.0);
        assert_eq!(d.p_value, 1.0);
        let bunched = vec![0.42; 100];
        let d = d_calibration_from_values(&bunched).unwrap();
        assert!((d.statistic - 900.0).abs() < 1e-9);
        assert!(d.p_value < 0.05);
        assert_eq!(d.counts.iter().sum::<usize>(), 100);
        assert!(d_calibration_from_values(&[0.5; 9]).is_err());
    }

    #[test]
    fn cra_cases() {
        assert_eq!(cra(&[5.0, 4.0, 3.0], &[5.0, 4.0, 3.0]).unwrap(), 1.0);
        assert!((cra(&[90.0], &[100.0]).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(cra(&[20.0, 8.0], &[10.0, 4.0]).unwrap(), 0.0);
        assert_eq!(cra_scaled(&[5.0, 4.0], &[5.0, 4.0], CraScaling::LeadingK).unwrap(), 2.0);
        assert!(cra(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn stratified_identity() {
        let curve = SurvivalCurve::new(vec![1.0, 2.0], vec![0.7, 0.2], Interpolation::Step).unwrap();
        let model = FittedModel::Km { curve };
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64]).collect();
        let s = stratified_curves(&model, &rows, 0, 0.5).unwrap();
        for ((a, b), c) in s.below.probabilities().iter().zip(s.above.probabilities()).zip(s.overall.probabilities()) {
            assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
        }
        assert_eq!(s.n_below + s.n_above, 8);
        assert!(stratified_curves(&model, &rows, 0, 1.0).is_err());
    }
}
