//! Seeded synthetic corpora: run-to-failure vibration recordings with an
//! injected amplitude-modulated fault, and Weibull lifetime datasets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Provenance, SupervisedDataset, SurvivalRecord};
use crate::detector::{DetectorConfig, Recording};
use crate::dsp::{critical_bands, BearingGeometry, Signal};
use crate::error::{Error, Result};
use crate::features::N_FEATURES;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BearingSimConfig {
    pub sample_rate: f64,
    pub samples_per_minute: usize,
    pub minutes: usize,
    pub shaft_hz: f64,
    pub geometry: BearingGeometry,
    pub noise_sd: f64,
    pub shaft_amplitude: f64,
    /// First faulty minute; `None` keeps the bearing healthy throughout.
    pub fault_minute: Option<usize>,
    /// Broadband amplitude multiplier from the fault minute on.
    pub fault_gain: f64,
    /// Further relative growth of the gain by the last minute.
    pub growth: f64,
    /// Depth of the outer-race modulation of the broadband noise.
    pub modulation_depth: f64,
    /// Structural resonance excited by outer-race impacts.
    pub carrier_hz: f64,
    pub carrier_amplitude: f64,
}

impl Default for BearingSimConfig {
    /// 64 one-second snapshots at 1024 Hz (64k samples) with the test-rig geometry at 2100 rpm.
    fn default() -> Self {
        Self {
            sample_rate: 1024.0,
            samples_per_minute: 1024,
            minutes: 64,
            shaft_hz: 35.0,
            geometry: BearingGeometry::ldk_uer204(),
            noise_sd: 1.0,
            shaft_amplitude: 0.5,
            fault_minute: None,
            fault_gain: 3.0,
            growth: 0.0,
            modulation_depth: 0.8,
            carrier_hz: 300.0,
            carrier_amplitude: 1.5,
        }
    }
}

impl BearingSimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) || self.samples_per_minute < 2 || self.minutes == 0 {
            return Err(Error::InvalidArgument(
                "simulation needs a positive rate and at least one 2-sample snapshot".into(),
            ));
        }
        if !(self.noise_sd > 0.0) || !(self.fault_gain > 0.0) {
            return Err(Error::InvalidArgument("noise level and fault gain must be positive".into()));
        }
        if self.carrier_hz >= self.sample_rate / 2.0 {
            return Err(Error::InvalidArgument("carrier above Nyquist".into()));
        }
        if let Some(m) = self.fault_minute {
            if m >= self.minutes {
                return Err(Error::InvalidArgument(format!(
                    "fault minute {m} beyond the {}-minute recording",
                    self.minutes
                )));
            }
        }
        Ok(())
    }

    /// Detector settings matched to these recordings: one snapshot per window,
    /// end of life at the last minute and 10 Hz bands.
    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            window_seconds: 60.0,
            eta: 5.0,
            lambda_kl: 4.5,
            end_of_life_minutes: self.minutes as f64,
            n_bins: 5,
            half_width: 10.0,
        }
    }
}

/// Simulates one bearing. Healthy minutes are white noise plus a shaft tone;
/// from the fault minute the noise floor is amplified and modulated at BPFO,
/// and a resonance carrier is amplitude-modulated at the same rate.
pub fn simulate_bearing(id: &str, config: &BearingSimConfig, seed: u64) -> Result<Recording> {
    config.validate()?;
    let bands = critical_bands(&config.geometry, config.shaft_hz, 1.0)?;
    let bpfo = bands.centers[0];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fs = config.sample_rate;
    let n = config.samples_per_minute;

    let minutes = (0..config.minutes)
        .map(|minute| {
            let fault = config.fault_minute.filter(|&m| minute >= m).map(|m| {
                let span = (config.minutes - m).max(1) as f64;
                config.fault_gain * (1.0 + config.growth * (minute - m) as f64 / span)
            });
            let samples = (0..n)
                .map(|i| {
                    let t = (minute * n + i) as f64 / fs;
                    let noise: f64 = StandardNormal.sample(&mut rng);
                    let shaft = config.shaft_amplitude * (2.0 * PI * config.shaft_hz * t).sin();
                    let x = config.noise_sd * noise;
                    match fault {
                        None => x + shaft,
                        Some(gain) => {
                            let envelope = 1.0 + config.modulation_depth * (2.0 * PI * bpfo * t).cos();
                            let carrier = config.carrier_amplitude * (2.0 * PI * config.carrier_hz * t).sin();
                            gain * x * envelope + carrier * envelope * gain + shaft
                        }
                    }
                })
                .collect();
            Signal::new(samples, fs)
        })
        .collect::<Result<Vec<_>>>()?;
    Recording::new(id, minutes)
}

/// Lifetime generator with effects a proportional-hazards model cannot express.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullCorpusConfig {
    pub n_records: usize,
    pub n_features: usize,
    /// Records per pseudo-unit, for per-unit reporting.
    pub unit_size: usize,
    /// Baseline Weibull scale, minutes.
    pub base_scale: f64,
    /// When false, log-scale is linear in the features and the shape is constant.
    pub non_proportional: bool,
}

impl Default for WeibullCorpusConfig {
    fn default() -> Self {
        Self {
            n_records: 600,
            n_features: N_FEATURES,
            unit_size: 20,
            base_scale: 100.0,
            non_proportional: true,
        }
    }
}

/// Weibull shape and scale for a covariate row.
pub fn weibull_parameters(x: &[f64], config: &WeibullCorpusConfig) -> (f64, f64) {
    if config.non_proportional {
        // u-shaped effect of x0, threshold effect of x1, crossing hazards through x2
        let log_scale = -0.9 * (x[0] * x[0] - 1.0) + 0.7 * if x[1] > 0.0 { 1.0 } else { -1.0 };
        let shape = 2.5 * (0.35 * x[2]).exp();
        (shape, config.base_scale * log_scale.exp())
    } else {
        let log_scale = 0.5 * x[0] - 0.4 * x[1] + 0.3 * x[2];
        (2.0, config.base_scale * log_scale.exp())
    }
}

/// Median of the generating distribution for a covariate row.
pub fn weibull_median(x: &[f64], config: &WeibullCorpusConfig) -> f64 {
    let (shape, scale) = weibull_parameters(x, config);
    scale * std::f64::consts::LN_2.powf(1.0 / shape)
}

/// Uncensored dataset with standard-normal features and Weibull lifetimes.
pub fn weibull_corpus(config: &WeibullCorpusConfig, seed: u64) -> Result<SupervisedDataset> {
    if config.n_features < 3 || config.n_records == 0 || config.unit_size == 0 {
        return Err(Error::InvalidArgument(
            "Weibull corpus needs at least 3 features, 1 record and a positive unit size".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let records = (0..config.n_records)
        .map(|i| {
            let features: Vec<f64> = (0..config.n_features).map(|_| StandardNormal.sample(&mut rng)).collect();
            let (shape, scale) = weibull_parameters(&features, config);
            let u: f64 = loop {
                let u: f64 = rng.random();
                if u > 0.0 {
                    break u;
                }
            };
            let time = scale * (-u.ln()).powf(1.0 / shape);
            SurvivalRecord {
                features,
                time: time.max(1e-6),
                event: true,
                bearing_id: format!("unit_{:03}", i / config.unit_size),
            }
        })
        .collect();
    SupervisedDataset::new(records, Provenance::default())
}
