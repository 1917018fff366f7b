//! Bundled synthetic corpora so the whole pipeline runs without the XJTU-SY download.

use std::path::Path;

use anyhow::Result;
use bearing_rul::dataset::Condition;
use bearing_rul::io::{write_atomic, write_csv};
use bearing_rul::synthetic::{simulate_bearing, weibull_corpus, BearingSimConfig, WeibullCorpusConfig};
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::stages;

/// Fault minute of faulty bearing `k`; the last bearing of a corpus stays healthy.
pub fn fault_minute(seed: u64, k: usize, minutes: usize) -> usize {
    let first = minutes / 2;
    let span = (minutes / 4).max(1);
    first + ((seed as usize % 1000) * 7 + 5 * k) % span
}

const CORPUS_DIR: &str = "corpus";
const MINUTE_HEADER: [&str; 2] = ["Horizontal_vibration_signals", "Vertical_vibration_signals"];

/// Writes `<out>/corpus/<condition dir>/Bearing1_k/<minute>.csv`, the injected
/// fault minutes in `corpus/truth.csv` and a matching `run.toml`.
pub fn vibration(out: &Path, seed: u64, bearings: usize, minutes: usize) -> Result<()> {
    let condition = Condition::C1;
    let root = out.join(CORPUS_DIR);
    let condition_dir = root.join(condition.xjtu_directory());
    let base = BearingSimConfig {
        minutes,
        shaft_hz: condition.shaft_speed_hz(),
        ..BearingSimConfig::default()
    };
    let truth: Vec<(String, Option<usize>)> = (0..bearings)
        .map(|k| {
            let id = format!("Bearing1_{}", k + 1);
            let fault = (k + 1 < bearings).then(|| fault_minute(seed, k, minutes));
            (id, fault)
        })
        .collect();

    truth.par_iter().enumerate().try_for_each(|(k, (id, fault))| -> Result<()> {
        let cfg = BearingSimConfig {
            fault_minute: *fault,
            ..base.clone()
        };
        let bearing_seed = seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
        let horizontal = simulate_bearing(id, &cfg, bearing_seed)?;
        let vertical = simulate_bearing(id, &cfg, bearing_seed ^ 0x5eed)?;
        for (m, (h, v)) in horizontal.minutes.iter().zip(&vertical.minutes).enumerate() {
            let rows: Vec<Vec<String>> = h
                .samples()
                .iter()
                .zip(v.samples())
                .map(|(a, b)| vec![format!("{a:.6}"), format!("{b:.6}")])
                .collect();
            write_csv(&condition_dir.join(id).join(format!("{}.csv", m + 1)), &MINUTE_HEADER, &rows)?;
        }
        Ok(())
    })?;

    let rows: Vec<Vec<String>> = truth
        .iter()
        .map(|(id, f)| vec![id.clone(), f.map(|m| m.to_string()).unwrap_or_default(), minutes.to_string()])
        .collect();
    write_csv(&root.join("truth.csv"), &["bearing_id", "fault_minute", "minutes"], &rows)?;

    let detector = base.detector_config();
    let config = format!(
        "# Synthetic corpus: {bearings} bearings, {minutes} one-second snapshots at {fs} Hz.\n\
         seed = {seed}\n\
         condition = \"C1\"\n\
         out = \".\"\n\n\
         [dataset]\n\
         root = \"{CORPUS_DIR}\"\n\
         sample_rate = {fs:?}\n\
         rows_per_minute = {rows}\n\n\
         [detector]\n\
         window_seconds = {t:?}\n\
         eta = {eta:?}\n\
         lambda_kl = {lambda:?}\n\
         n_bins = {bins}\n\
         half_width = {hw:?}\n",
        fs = base.sample_rate,
        rows = base.samples_per_minute,
        t = detector.window_seconds,
        eta = detector.eta,
        lambda = detector.lambda_kl,
        bins = detector.n_bins,
        hw = detector.half_width,
    );
    write_atomic(&out.join("run.toml"), config.as_bytes())?;
    Ok(())
}

/// Writes a labelled Weibull lifetime corpus straight into the label stage.
pub fn weibull(config: &RunConfig, records: usize, proportional: bool) -> Result<()> {
    let seed = config.require_seed("corpus generation")?;
    let corpus = WeibullCorpusConfig {
        n_records: records,
        non_proportional: !proportional,
        ..WeibullCorpusConfig::default()
    };
    let truth = weibull_corpus(&corpus, seed)?;
    stages::write_labels(config, &truth)?;
    let text = format!("seed = {seed}\ncondition = \"C1\"\ncensoring = {:?}\nout = \".\"\n", config.censoring);
    write_atomic(&config.out_dir().join("run.toml"), text.as_bytes())?;
    Ok(())
}
