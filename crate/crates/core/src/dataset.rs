//! Run-to-failure recordings to supervised survival datasets: ingestion,
//! rolling-average labeling, synthetic censoring, stratified folds and z-scoring.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detector::Recording;
use crate::dsp::Signal;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, FEATURE_NAMES, N_FEATURES};
use crate::io::write_atomic;
use crate::survival::SurvivalData;

/// XJTU-SY sampling rate, Hz.
pub const XJTU_SAMPLE_RATE: f64 = 25_600.0;
/// Rows per XJTU-SY minute file.
pub const XJTU_ROWS_PER_MINUTE: usize = 32_768;

/// Operating condition of the run-to-failure test bench.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    C1,
    C2,
    C3,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::C1, Condition::C2, Condition::C3];

    pub fn rpm(self) -> f64 {
        match self {
            Condition::C1 => 2100.0,
            Condition::C2 => 2250.0,
            Condition::C3 => 2400.0,
        }
    }

    pub fn shaft_speed_hz(self) -> f64 {
        self.rpm() / 60.0
    }

    /// Detector end-of-life sensitivity for the load level.
    pub fn lambda_kl(self) -> f64 {
        match self {
            Condition::C1 => 1.5,
            Condition::C2 => 1.75,
            Condition::C3 => 2.0,
        }
    }

    /// Rolling window length and lag.
    pub fn rolling(self) -> (usize, i64) {
        match self {
            Condition::C1 => (2, -1),
            Condition::C2 => (4, -3),
            Condition::C3 => (6, -5),
        }
    }

    /// Directory name used by the XJTU-SY distribution.
    pub fn xjtu_directory(self) -> &'static str {
        match self {
            Condition::C1 => "35Hz12kN",
            Condition::C2 => "37.5Hz11kN",
            Condition::C3 => "40Hz10kN",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Condition::C1 => "C1",
            Condition::C2 => "C2",
            Condition::C3 => "C3",
        };
        f.write_str(s)
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "C1" => Ok(Condition::C1),
            "C2" => Ok(Condition::C2),
            "C3" => Ok(Condition::C3),
            other => Err(Error::InvalidArgument(format!(
                "unknown condition {other:?}, expected C1, C2 or C3"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub features: Vec<f64>,
    /// Observed time `t_i` in minutes: the event time, or the censoring time when `event` is false.
    pub time: f64,
    pub event: bool,
    pub bearing_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub condition: Option<Condition>,
    pub window: usize,
    pub lag: i64,
    pub censor_pct: f64,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedDataset {
    pub records: Vec<SurvivalRecord>,
    pub provenance: Provenance,
}

impl SupervisedDataset {
    pub fn new(records: Vec<SurvivalRecord>, provenance: Provenance) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::EmptyInput("supervised dataset has no records".into()))?;
        let dim = first.features.len();
        for r in &records {
            if r.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: r.features.len(),
                });
            }
            if !(r.time.is_finite() && r.time > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "record of {} has non-positive time {}",
                    r.bearing_id, r.time
                )));
            }
        }
        Ok(Self { records, provenance })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.records[0].features.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn n_censored(&self) -> usize {
        self.records.iter().filter(|r| !r.event).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }

    pub fn to_survival_data(&self) -> SurvivalData {
        SurvivalData {
            x: self.records.iter().map(|r| r.features.clone()).collect(),
            times: self.times(),
            events: self.events(),
        }
    }
}

fn minute_index(path: &Path) -> Option<usize> {
    if path.extension().and_then(|e| e.to_str()) != Some("csv") {
        return None;
    }
    path.file_stem()?.to_str()?.parse().ok()
}

/// Horizontal channel of a single minute file.
pub fn read_minute_file(path: &Path, sample_rate: f64, expected_rows: Option<usize>) -> Result<Signal> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::data(path, e.to_string()))?;
    let mut samples = Vec::with_capacity(expected_rows.unwrap_or(0));
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::data(path, e.to_string()))?;
        if rec.len() < 2 {
            return Err(Error::data(path, format!("row {} has {} columns, need 2", row + 1, rec.len())));
        }
        let v: f64 = rec[0]
            .trim()
            .parse()
            .map_err(|_| Error::data(path, format!("row {}: cannot parse {:?}", row + 1, &rec[0])))?;
        samples.push(v);
    }
    if let Some(rows) = expected_rows {
        if samples.len() < rows {
            return Err(Error::data(
                path,
                format!("short file: {} rows, expected {rows}", samples.len()),
            ));
        }
    }
    if samples.len() < 2 {
        return Err(Error::data(path, "fewer than 2 samples"));
    }
    Signal::new(samples, sample_rate)
}

/// Loads a bearing directory of numbered minute files `1.csv..N.csv`.
pub fn load_bearing(dir: &Path, sample_rate: f64, expected_rows: Option<usize>) -> Result<Recording> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files: Vec<(usize, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if let Some(i) = minute_index(&path) {
            files.push((i, path));
        }
    }
    if files.is_empty() {
        return Err(Error::data(dir, "no minute files found"));
    }
    files.sort_by_key(|(i, _)| *i);
    for (expected, (i, _)) in (1..).zip(&files) {
        if *i != expected {
            return Err(Error::data(dir.join(format!("{expected}.csv")), "missing minute file"));
        }
    }
    let minutes = files
        .iter()
        .map(|(_, p)| read_minute_file(p, sample_rate, expected_rows))
        .collect::<Result<Vec<_>>>()?;
    let id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("bearing")
        .to_string();
    Recording::new(id, minutes)
}

/// Bearing sub-directories of a condition directory, sorted by name.
pub fn bearing_directories(condition_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(condition_dir)
        .map_err(|e| Error::io(condition_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    Ok(dirs)
}

/// Rolling-average supervision for one bearing.
///
/// Minutes `0..t_event` are usable; minute `i` is `t_event - i` minutes from
/// the event. Each record averages `window` consecutive minutes of both
/// features and remaining time. The lag places the target timestamp
/// `|lag|` minutes before the end of the averaging window, so it must lie in
/// `-(window - 1)..=0`.
pub fn bearing_records(
    bearing_id: &str,
    per_minute: &[FeatureVector],
    event_time_minutes: f64,
    window: usize,
    lag: i64,
) -> Result<Vec<SurvivalRecord>> {
    if window < 1 {
        return Err(Error::InvalidArgument("rolling window must be at least 1".into()));
    }
    if lag > 0 || lag.unsigned_abs() as usize >= window {
        return Err(Error::InvalidArgument(format!(
            "lag {lag} must lie in [-(window - 1), 0] for window {window}"
        )));
    }
    if !(event_time_minutes.is_finite() && event_time_minutes > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{bearing_id}: event time must be positive, got {event_time_minutes}"
        )));
    }
    let usable = event_time_minutes.floor() as usize;
    if usable > per_minute.len() {
        return Err(Error::InvalidArgument(format!(
            "{bearing_id}: event at minute {event_time_minutes} but only {} minutes of features",
            per_minute.len()
        )));
    }
    if usable < window {
        return Err(Error::InvalidArgument(format!(
            "{bearing_id}: event at minute {event_time_minutes} leaves no full window of {window}"
        )));
    }
    let remaining: Vec<f64> = (0..usable).map(|i| event_time_minutes - i as f64).collect();
    let rows: Vec<[f64; N_FEATURES]> = per_minute[..usable].iter().map(|f| f.to_array()).collect();
    let w = window as f64;
    Ok((0..=usable - window)
        .map(|start| {
            let mut features = vec![0.0; N_FEATURES];
            for row in &rows[start..start + window] {
                for (acc, v) in features.iter_mut().zip(row) {
                    *acc += v;
                }
            }
            features.iter_mut().for_each(|v| *v /= w);
            SurvivalRecord {
                features,
                time: remaining[start..start + window].iter().sum::<f64>() / w,
                event: true,
                bearing_id: bearing_id.to_string(),
            }
        })
        .collect())
}

/// Per-bearing features and annotated event time.
#[derive(Debug, Clone)]
pub struct LabeledBearing {
    pub bearing_id: String,
    pub per_minute: Vec<FeatureVector>,
    pub event_time_minutes: f64,
}

/// Concatenates the rolling-average records of every bearing; all records start uncensored.
pub fn to_supervised(
    bearings: &[LabeledBearing],
    window: usize,
    lag: i64,
    condition: Option<Condition>,
) -> Result<SupervisedDataset> {
    let mut records = Vec::new();
    for b in bearings {
        records.extend(bearing_records(
            &b.bearing_id,
            &b.per_minute,
            b.event_time_minutes,
            window,
            lag,
        )?);
    }
    SupervisedDataset::new(
        records,
        Provenance {
            condition,
            window,
            lag,
            censor_pct: 0.0,
            seed: None,
        },
    )
}

/// Flips `round(pct * N)` uniformly chosen records to censored, redrawing their
/// time uniformly on `(0, e_i)`.
pub fn apply_censoring(dataset: &SupervisedDataset, pct: f64, seed: u64) -> Result<SupervisedDataset> {
    if !(0.0..1.0).contains(&pct) {
        return Err(Error::InvalidArgument(format!("censoring fraction must lie in [0, 1), got {pct}")));
    }
    if dataset.records.iter().any(|r| !r.event) {
        return Err(Error::InvalidArgument("dataset is already censored".into()));
    }
    let mut out = dataset.clone();
    out.provenance.censor_pct = pct;
    out.provenance.seed = Some(seed);
    let n = dataset.len();
    let k = (pct * n as f64 + 0.5).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = sample(&mut rng, n, k).into_vec();
    chosen.sort_unstable();
    for i in chosen {
        let record = &mut out.records[i];
        let u = loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        };
        record.time *= u;
        record.event = false;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Quartile stratum (0..4) of each time, with cut points computed over all times.
fn time_quartiles(times: &[f64]) -> Vec<usize> {
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let cuts = [q(0.25), q(0.5), q(0.75)];
    times
        .iter()
        .map(|&t| cuts.iter().filter(|&&c| t > c).count())
        .collect()
}

/// `k` folds stratified on event indicator by time quartile.
pub fn stratified_kfold(times: &[f64], events: &[bool], k: usize, seed: u64) -> Result<Vec<Fold>> {
    let n = times.len();
    if events.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: events.len() });
    }
    if k < 2 || n < k {
        return Err(Error::InvalidArgument(format!("need 2 <= k <= N, got k = {k}, N = {n}")));
    }
    let quartile = time_quartiles(times);
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); 8];
    for i in 0..n {
        strata[usize::from(events[i]) * 4 + quartile[i]].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; n];
    let mut counter = 0usize;
    for stratum in &mut strata {
        stratum.shuffle(&mut rng);
        for &i in stratum.iter() {
            assignment[i] = counter % k;
            counter += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}

/// Per-column mean and population standard deviation of a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl NormalizationStats {
    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.means.len() {
            return Err(Error::DimensionMismatch {
                expected: self.means.len(),
                got: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }
}

pub fn zscore_fit_rows(rows: &[Vec<f64>], names: Option<&[&str]>) -> Result<NormalizationStats> {
    let first = rows
        .first()
        .ok_or_else(|| Error::EmptyInput("cannot fit normalization on an empty split".into()))?;
    let d = first.len();
    let n = rows.len() as f64;
    let mut means = vec![0.0; d];
    for r in rows {
        if r.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut sds = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in sds.iter_mut().zip(r).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for (j, s) in sds.iter_mut().enumerate() {
        *s = (*s / n).sqrt();
        let scale = means[j].abs().max(1.0);
        if !(*s > 1e-12 * scale) {
            let column = names
                .and_then(|names| names.get(j).map(|s| s.to_string()))
                .unwrap_or_else(|| format!("#{j}"));
            return Err(Error::ZeroVariance { column });
        }
    }
    Ok(NormalizationStats { means, sds })
}

pub fn zscore_fit(train: &SupervisedDataset) -> Result<NormalizationStats> {
    let rows: Vec<Vec<f64>> = train.records.iter().map(|r| r.features.clone()).collect();
    let names = (train.dim() == N_FEATURES).then_some(&FEATURE_NAMES[..]);
    zscore_fit_rows(&rows, names)
}

pub fn zscore_apply(stats: &NormalizationStats, dataset: &SupervisedDataset) -> Result<SupervisedDataset> {
    let mut out = dataset.clone();
    for r in &mut out.records {
        r.features = stats.apply_row(&r.features)?;
    }
    Ok(out)
}

fn metadata_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

/// Writes `<name>.csv` (features, time, event, bearing_id) and the `<name>.meta.json` sidecar.
pub fn write_dataset(path: &Path, dataset: &SupervisedDataset) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = if dataset.dim() == N_FEATURES {
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..dataset.dim()).map(|j| format!("x{j}")).collect()
    };
    header.extend(["time", "event", "bearing_id"].map(String::from));
    writer.write_record(&header)?;
    for r in &dataset.records {
        let mut row: Vec<String> = r.features.iter().map(|v| v.to_string()).collect();
        row.push(r.time.to_string());
        row.push(if r.event { "1".into() } else { "0".into() });
        row.push(r.bearing_id.clone());
        writer.write_record(&row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::data(path, e.to_string()))?;
    write_atomic(path, &bytes)?;
    let meta = serde_json::to_vec_pretty(&dataset.provenance)?;
    write_atomic(&metadata_path(path), &meta)
}

pub fn read_dataset(path: &Path) -> Result<SupervisedDataset> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    let header = reader.headers()?.clone();
    let cols = header.len();
    if cols < 4
        || &header[cols - 3] != "time"
        || &header[cols - 2] != "event"
        || &header[cols - 1] != "bearing_id"
    {
        return Err(Error::data(path, "header must end with time,event,bearing_id"));
    }
    let dim = cols - 3;
    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        let parse = |j: usize| -> Result<f64> {
            rec[j]
                .parse()
                .map_err(|_| Error::data(path, format!("row {}: bad number {:?}", row + 1, &rec[j])))
        };
        let features = (0..dim).map(parse).collect::<Result<Vec<_>>>()?;
        let event = match &rec[dim + 1] {
            "1" => true,
            "0" => false,
            other => return Err(Error::data(path, format!("row {}: bad event flag {other:?}", row + 1))),
        };
        records.push(SurvivalRecord {
            features,
            time: parse(dim)?,
            event,
            bearing_id: rec[dim + 2].to_string(),
        });
    }
    let meta_path = metadata_path(path);
    let provenance = match fs::read(&meta_path) {
        Ok(bytes) => serde_json::from_slice(&bytes)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Provenance::default(),
        Err(e) => return Err(Error::io(meta_path, e)),
    };
    SupervisedDataset::new(records, provenance)
}
