//! Pipeline stages. Each reads the previous stage's files under the output
//! directory and writes its own atomically.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bearing_rul::dataset::{
    apply_censoring, bearing_directories, load_bearing, read_dataset, to_supervised, write_dataset, zscore_apply,
    zscore_fit, LabeledBearing, NormalizationStats, SupervisedDataset,
};
use bearing_rul::detector::{detect_event, EventAnnotation};
use bearing_rul::dsp::BearingGeometry;
use bearing_rul::eval::{cross_validate, stratified_curves, EvaluationReport};
use bearing_rul::features::{extract_features, FeatureVector, FEATURE_NAMES, N_FEATURES};
use bearing_rul::io::{write_atomic, write_csv};
use bearing_rul::survival::{km_bounds, km_fit, mean_curve, FittedModel, ModelKind, SurvivalCurve};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const DETECT: &str = "detect";
pub const FEATURIZE: &str = "featurize";
pub const LABEL: &str = "label";
pub const TRAIN: &str = "train";
pub const EVALUATE: &str = "evaluate";
pub const REPORT: &str = "report";

/// Shortest round-trip rendering, stable across runs.
pub fn num(v: f64) -> String {
    v.to_string()
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

/// Fails with a message naming the stage that should have produced `path`.
fn require(path: &Path, stage: &str) -> Result<()> {
    if !path.exists() {
        bail!(
            "missing {} from the `{stage}` stage; run `bearing-rul {stage}` first",
            path.display()
        );
    }
    Ok(())
}

fn stage_dir(config: &RunConfig, stage: &str) -> PathBuf {
    config.out_dir().join(stage)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub bearing_id: String,
    pub event_time_minutes: f64,
    pub end_of_life_minutes: f64,
    /// First triggering window per band, in band order.
    pub detected_windows: Vec<(String, Option<usize>)>,
}

impl From<&EventAnnotation> for AnnotationRecord {
    fn from(a: &EventAnnotation) -> Self {
        Self {
            bearing_id: a.bearing_id.clone(),
            event_time_minutes: a.event_time_minutes,
            end_of_life_minutes: a.end_of_life_minutes,
            detected_windows: a
                .per_band
                .iter()
                .map(|t| (t.band.label().to_string(), t.detected_window))
                .collect(),
        }
    }
}

fn bearing_id(dir: &Path) -> String {
    dir.file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("bearing")
        .to_string()
}

/// Writes `errors.csv` and reports per-bearing failures; fails only when nothing succeeded.
fn settle<T>(dir: &Path, stage: &str, results: Vec<(String, Result<T>)>) -> Result<Vec<(String, T)>> {
    let mut ok = Vec::new();
    let mut errors = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push((id, v)),
            Err(e) => {
                eprintln!("warning: {stage}: {id}: {e:#}");
                errors.push(vec![id, format!("{e:#}")]);
            }
        }
    }
    write_csv(&dir.join("errors.csv"), &["bearing_id", "error"], &errors)?;
    if ok.is_empty() {
        bail!("{stage}: every bearing failed; see {}", dir.join("errors.csv").display());
    }
    Ok(ok)
}

pub fn detect(config: &RunConfig) -> Result<Vec<AnnotationRecord>> {
    let dirs = bearing_directories(&config.condition_dir()?)?;
    if dirs.is_empty() {
        bail!("no bearing directories under {}", config.condition_dir()?.display());
    }
    let out = stage_dir(config, DETECT);
    let geometry = BearingGeometry::ldk_uer204();
    let results: Vec<(String, Result<EventAnnotation>)> = dirs
        .par_iter()
        .map(|dir| {
            let run = || -> Result<EventAnnotation> {
                let recording = load_bearing(dir, config.dataset.sample_rate, config.dataset.rows_per_minute)?;
                let detector = config.detector_config(recording.len_minutes() as f64);
                Ok(detect_event(&recording, &geometry, config.shaft_hz(), &detector)?)
            };
            (bearing_id(dir), run())
        })
        .collect();
    let annotations = settle(&out, DETECT, results)?;

    for (id, a) in &annotations {
        for trace in &a.per_band {
            let rows: Vec<Vec<String>> = (0..trace.n_windows())
                .map(|w| {
                    let (delta, th) = match w.checked_sub(1) {
                        Some(i) => (num(trace.deltas[i]), opt_num(trace.thresholds[i])),
                        None => (String::new(), String::new()),
                    };
                    vec![w.to_string(), num(trace.kl_values[w]), delta, th]
                })
                .collect();
            let path = out.join("traces").join(id).join(format!("{}.csv", trace.band.label()));
            write_csv(&path, &["window", "kl", "delta_kl", "threshold"], &rows)?;
        }
    }
    let records: Vec<AnnotationRecord> = annotations.iter().map(|(_, a)| a.into()).collect();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| vec![r.bearing_id.clone(), num(r.event_time_minutes), num(r.end_of_life_minutes)])
        .collect();
    write_csv(
        &out.join("annotations.csv"),
        &["bearing_id", "event_time_minutes", "end_of_life_minutes"],
        &rows,
    )?;
    write_json(&out.join("annotations.json"), &records)?;
    Ok(records)
}

pub fn featurize(config: &RunConfig) -> Result<usize> {
    let dirs = bearing_directories(&config.condition_dir()?)?;
    let out = stage_dir(config, FEATURIZE);
    let results: Vec<(String, Result<Vec<FeatureVector>>)> = dirs
        .par_iter()
        .map(|dir| {
            let run = || -> Result<Vec<FeatureVector>> {
                let recording = load_bearing(dir, config.dataset.sample_rate, config.dataset.rows_per_minute)?;
                recording
                    .minutes
                    .iter()
                    .enumerate()
                    .map(|(m, s)| extract_features(s.samples()).with_context(|| format!("minute {}", m + 1)))
                    .collect()
            };
            (bearing_id(dir), run())
        })
        .collect();
    let features = settle(&out, FEATURIZE, results)?;
    let mut header = vec!["minute"];
    header.extend(FEATURE_NAMES);
    for (id, rows) in &features {
        let rows: Vec<Vec<String>> = rows
            .iter()
            .enumerate()
            .map(|(m, f)| {
                let mut row = vec![(m + 1).to_string()];
                row.extend(f.to_array().map(num));
                row
            })
            .collect();
        write_csv(&out.join(format!("{id}.csv")), &header, &rows)?;
    }
    Ok(features.len())
}

fn read_features(path: &Path) -> Result<Vec<FeatureVector>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let header = reader.headers()?.clone();
    if header.len() != N_FEATURES + 1 || header.iter().skip(1).ne(FEATURE_NAMES) {
        bail!("{}: unexpected feature header", path.display());
    }
    reader
        .records()
        .map(|rec| {
            let rec = rec?;
            let mut v = [0.0; N_FEATURES];
            for (j, slot) in v.iter_mut().enumerate() {
                *slot = rec[j + 1]
                    .parse()
                    .with_context(|| format!("{}: bad value {:?}", path.display(), &rec[j + 1]))?;
            }
            Ok(FeatureVector::from_array(v))
        })
        .collect()
}

pub fn uncensored_path(config: &RunConfig) -> PathBuf {
    stage_dir(config, LABEL).join("supervised_uncensored.csv")
}

pub fn censored_path(config: &RunConfig) -> PathBuf {
    stage_dir(config, LABEL).join("supervised.csv")
}

/// Censors a labelled dataset per the config and writes both versions.
pub fn write_labels(config: &RunConfig, truth: &SupervisedDataset) -> Result<SupervisedDataset> {
    let observed = if config.censoring > 0.0 {
        apply_censoring(truth, config.censoring, config.require_seed("censoring")?)?
    } else {
        let mut d = truth.clone();
        d.provenance.seed = config.seed;
        d
    };
    write_dataset(&uncensored_path(config), truth)?;
    write_dataset(&censored_path(config), &observed)?;
    Ok(observed)
}

pub fn label(config: &RunConfig) -> Result<SupervisedDataset> {
    let annotations_path = stage_dir(config, DETECT).join("annotations.json");
    require(&annotations_path, DETECT)?;
    let annotations: Vec<AnnotationRecord> = serde_json::from_slice(&fs::read(&annotations_path)?)
        .with_context(|| format!("parsing {}", annotations_path.display()))?;
    let feature_dir = stage_dir(config, FEATURIZE);
    require(&feature_dir, FEATURIZE)?;
    let (window, lag) = config.rolling();

    let mut bearings = Vec::new();
    for a in &annotations {
        let path = feature_dir.join(format!("{}.csv", a.bearing_id));
        if !path.exists() {
            eprintln!("warning: label: no features for {}, skipped", a.bearing_id);
            continue;
        }
        bearings.push(LabeledBearing {
            bearing_id: a.bearing_id.clone(),
            per_minute: read_features(&path)?,
            event_time_minutes: a.event_time_minutes,
        });
    }
    if bearings.is_empty() {
        bail!("label: no bearing has both an annotation and features");
    }
    let truth = to_supervised(&bearings, window, lag, Some(config.condition))?;
    write_labels(config, &truth)
}

fn load_labels(config: &RunConfig) -> Result<(SupervisedDataset, SupervisedDataset)> {
    let (t, o) = (uncensored_path(config), censored_path(config));
    require(&t, LABEL)?;
    require(&o, LABEL)?;
    Ok((read_dataset(&t)?, read_dataset(&o)?))
}

/// A trained model together with the normalization it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub normalization: NormalizationStats,
    pub model: FittedModel,
}

pub fn model_path(config: &RunConfig, kind: ModelKind) -> PathBuf {
    stage_dir(config, TRAIN).join(format!("model_{kind}.json"))
}

pub fn train(config: &RunConfig) -> Result<ModelBundle> {
    let kind = config.model_kind()?;
    let (_, observed) = load_labels(config)?;
    let seed = match kind {
        ModelKind::Rsf | ModelKind::Mtlr => config.require_seed("training")?,
        _ => config.seed.unwrap_or(0),
    };
    let normalization = zscore_fit(&observed)?;
    let data = zscore_apply(&normalization, &observed)?.to_survival_data();
    let model = FittedModel::fit(kind, &data, &config.model_config(seed))?;
    let bundle = ModelBundle { normalization, model };
    write_json(&model_path(config, kind), &bundle)?;
    Ok(bundle)
}

pub fn evaluate(config: &RunConfig) -> Result<EvaluationReport> {
    let kind = config.model_kind()?;
    let seed = config.require_seed("cross-validation")?;
    let (truth, observed) = load_labels(config)?;
    let (report, _) = cross_validate(&truth, &observed, kind, &config.model_config(seed), config.folds, seed)?;
    let out = stage_dir(config, EVALUATE);
    write_json(&out.join(format!("report_{kind}.json")), &report)?;

    let summary: Vec<Vec<String>> = report
        .summary_rows()
        .into_iter()
        .map(|(name, v)| vec![name, num(v.mean), num(v.sd), format!("{:.2} ± {:.2}", v.mean, v.sd)])
        .collect();
    write_csv(&out.join(format!("summary_{kind}.csv")), &["metric", "mean", "sd", "formatted"], &summary)?;

    let folds: Vec<Vec<String>> = report
        .folds
        .iter()
        .map(|f| {
            vec![
                f.fold.to_string(),
                f.n_train.to_string(),
                f.n_test.to_string(),
                f.n_censored_test.to_string(),
                num(f.mae_hinge),
                num(f.mae_margin),
                num(f.mae_pseudo),
                num(f.true_mae),
                num(f.emae_hinge),
                num(f.emae_margin),
                num(f.emae_pseudo),
                opt_num(f.d_cal_p),
                f.d_cal_counts
                    .map(|c| c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";"))
                    .unwrap_or_default(),
                opt_num(f.cra),
                f.n_median_fallback.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join(format!("folds_{kind}.csv")),
        &[
            "fold",
            "n_train",
            "n_test",
            "n_censored_test",
            "mae_hinge",
            "mae_margin",
            "mae_pseudo",
            "true_mae",
            "emae_hinge",
            "emae_margin",
            "emae_pseudo",
            "d_cal_p",
            "d_cal_counts",
            "cra",
            "n_median_fallback",
        ],
        &folds,
    )?;
    Ok(report)
}

fn curve_rows(prefix: &[String], curve: &SurvivalCurve) -> Vec<Vec<String>> {
    curve
        .times()
        .iter()
        .zip(curve.probabilities())
        .map(|(t, s)| {
            let mut row = prefix.to_vec();
            row.push(num(*t));
            row.push(num(*s));
            row
        })
        .collect()
}

pub fn report(config: &RunConfig) -> Result<()> {
    let kind = config.model_kind()?;
    let (truth, observed) = load_labels(config)?;
    let bundle_path = model_path(config, kind);
    require(&bundle_path, TRAIN)?;
    let bundle: ModelBundle = serde_json::from_slice(&fs::read(&bundle_path)?)
        .with_context(|| format!("parsing {}", bundle_path.display()))?;
    let out = stage_dir(config, REPORT);
    let seed = config.require_seed("report censoring")?;

    // best and worst case around KM at each censoring level
    let mut bounds = Vec::new();
    for &level in &config.report.censor_levels {
        let censored = if level > 0.0 {
            apply_censoring(&truth, level, seed)?
        } else {
            truth.clone()
        };
        let (times, events) = (censored.times(), censored.events());
        let km = km_fit(&times, &events)?;
        let (upper, lower) = km_bounds(&times, &events)?;
        for &t in km.times() {
            bounds.push(vec![num(level), num(t), num(km.at(t)), num(upper.at(t)), num(lower.at(t))]);
        }
    }
    write_csv(&out.join("km_bounds.csv"), &["censor_pct", "time", "km", "upper", "lower"], &bounds)?;

    // mean predicted curve against KM of the observed data
    let rows: Vec<Vec<f64>> = zscore_apply(&bundle.normalization, &observed)?
        .records
        .into_iter()
        .map(|r| r.features)
        .collect();
    let km = km_fit(&observed.times(), &observed.events())?;
    let predicted = bundle.model.predict_all(&rows)?;
    let mean = mean_curve(&predicted, km.times())?;
    let mean_rows: Vec<Vec<String>> = km
        .times()
        .iter()
        .map(|&t| vec![num(t), num(km.at(t)), num(mean.at(t))])
        .collect();
    write_csv(&out.join(format!("mean_curves_{kind}.csv")), &["time", "km", "mean_predicted"], &mean_rows)?;

    // stratified mean curves per covariate and quantile
    let mut strat = Vec::new();
    for name in &config.report.covariates {
        let column = FeatureVector::column_index(name)
            .with_context(|| format!("unknown covariate {name:?}; expected one of {}", FEATURE_NAMES.join(", ")))?;
        for &q in &config.report.quantiles {
            let s = stratified_curves(&bundle.model, &rows, column, q)
                .with_context(|| format!("stratifying {name} at quantile {q}"))?;
            for (label, curve) in [("overall", &s.overall), ("below", &s.below), ("above", &s.above)] {
                // threshold back on the feature's own scale
                let raw = s.threshold * bundle.normalization.sds[column] + bundle.normalization.means[column];
                let prefix = vec![name.clone(), num(q), num(raw), label.to_string()];
                strat.extend(curve_rows(&prefix, curve));
            }
        }
    }
    write_csv(
        &out.join(format!("stratified_{kind}.csv")),
        &["covariate", "quantile", "threshold", "curve", "time", "survival"],
        &strat,
    )?;
    Ok(())
}
