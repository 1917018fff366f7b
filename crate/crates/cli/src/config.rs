//! Run configuration: a TOML file overlaid by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bearing_rul::dataset::{Condition, XJTU_ROWS_PER_MINUTE, XJTU_SAMPLE_RATE};
use bearing_rul::detector::DetectorConfig;
use bearing_rul::dsp::{DEFAULT_HALF_WIDTH_HZ, DEFAULT_PDF_BINS};
use bearing_rul::survival::mtlr::MtlrConfig;
use bearing_rul::survival::{CoxConfig, ModelConfig, ModelKind, RsfConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    /// XJTU-SY root; bearings live in `<root>/<condition directory>/` or directly under `root`.
    pub root: Option<PathBuf>,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    /// Rows every minute file must have; omit to accept any length.
    #[serde(default = "default_rows")]
    pub rows_per_minute: Option<usize>,
    /// Shaft speed override in Hz; defaults to the condition's speed.
    pub shaft_hz: Option<f64>,
}

fn default_sample_rate() -> f64 {
    XJTU_SAMPLE_RATE
}

fn default_rows() -> Option<usize> {
    Some(XJTU_ROWS_PER_MINUTE)
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            root: None,
            sample_rate: default_sample_rate(),
            rows_per_minute: default_rows(),
            shaft_hz: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(default = "default_window_seconds")]
    pub window_seconds: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Defaults to the condition's value.
    pub lambda_kl: Option<f64>,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
}

fn default_window_seconds() -> f64 {
    600.0
}

fn default_eta() -> f64 {
    5.0
}

fn default_bins() -> usize {
    DEFAULT_PDF_BINS
}

fn default_half_width() -> f64 {
    DEFAULT_HALF_WIDTH_HZ
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            window_seconds: default_window_seconds(),
            eta: default_eta(),
            lambda_kl: None,
            n_bins: default_bins(),
            half_width: default_half_width(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelSection {
    /// Rolling window in minutes; defaults to the condition's value.
    pub window: Option<usize>,
    pub lag: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    #[serde(default = "default_censor_levels")]
    pub censor_levels: Vec<f64>,
    #[serde(default = "default_quantiles")]
    pub quantiles: Vec<f64>,
    #[serde(default = "default_covariates")]
    pub covariates: Vec<String>,
}

fn default_censor_levels() -> Vec<f64> {
    vec![0.0, 0.25, 0.5]
}

fn default_quantiles() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_covariates() -> Vec<String> {
    vec!["rms".into(), "kurtosis".into()]
}

impl Default for ReportSection {
    fn default() -> Self {
        Self {
            censor_levels: default_censor_levels(),
            quantiles: default_quantiles(),
            covariates: default_covariates(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default = "default_condition")]
    pub condition: Condition,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub censoring: f64,
    /// Output directory; `out` under the working directory when unset.
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub label: LabelSection,
    #[serde(default)]
    pub report: ReportSection,
    /// Full hyperparameter tables; the condition's defaults apply when absent.
    pub cox: Option<CoxConfig>,
    pub rsf: Option<RsfConfig>,
    pub mtlr: Option<MtlrConfig>,
}

fn default_condition() -> Condition {
    Condition::C1
}

fn default_model() -> String {
    "rsf".into()
}

fn default_folds() -> usize {
    5
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("every field has a default")
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub condition: Option<Condition>,
    pub censoring: Option<f64>,
    pub model: Option<String>,
    pub out: Option<PathBuf>,
    pub root: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut config = match path {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                let mut c: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?;
                // relative paths in a config file are relative to the file
                let base = p.parent().unwrap_or(Path::new(""));
                if let Some(root) = &c.dataset.root {
                    c.dataset.root = Some(base.join(root));
                }
                c.out = c.out.map(|o| if o == Path::new(".") { base.to_path_buf() } else { base.join(o) });
                if c.out.as_deref() == Some(Path::new("")) {
                    c.out = Some(PathBuf::from("."));
                }
                c
            }
            None => RunConfig::default(),
        };
        if let Some(s) = overrides.seed {
            config.seed = Some(s);
        }
        if let Some(c) = overrides.condition {
            config.condition = c;
        }
        if let Some(c) = overrides.censoring {
            config.censoring = c;
        }
        if let Some(m) = &overrides.model {
            config.model = m.clone();
        }
        if let Some(o) = &overrides.out {
            config.out = Some(o.clone());
        }
        if let Some(r) = &overrides.root {
            config.dataset.root = Some(r.clone());
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model_kind()?;
        if !(0.0..1.0).contains(&self.censoring) {
            bail!("censoring must lie in [0, 1), got {}", self.censoring);
        }
        if self.folds < 2 {
            bail!("folds must be at least 2, got {}", self.folds);
        }
        if let Some(l) = self.report.censor_levels.iter().find(|l| !(0.0..1.0).contains(*l)) {
            bail!("report censor level {l} outside [0, 1)");
        }
        if let Some(q) = self.report.quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
            bail!("report quantile {q} outside [0, 1]");
        }
        Ok(())
    }

    pub fn model_kind(&self) -> Result<ModelKind> {
        Ok(self.model.parse::<ModelKind>()?)
    }

    /// The seed, or an error naming the step that needs it.
    pub fn require_seed(&self, step: &str) -> Result<u64> {
        self.seed
            .with_context(|| format!("{step} is stochastic and needs a seed; pass --seed or set `seed` in the config"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn shaft_hz(&self) -> f64 {
        self.dataset.shaft_hz.unwrap_or_else(|| self.condition.shaft_speed_hz())
    }

    pub fn detector_config(&self, end_of_life_minutes: f64) -> DetectorConfig {
        DetectorConfig {
            window_seconds: self.detector.window_seconds,
            eta: self.detector.eta,
            lambda_kl: self.detector.lambda_kl.unwrap_or_else(|| self.condition.lambda_kl()),
            end_of_life_minutes,
            n_bins: self.detector.n_bins,
            half_width: self.detector.half_width,
        }
    }

    pub fn rolling(&self) -> (usize, i64) {
        let (w, l) = self.condition.rolling();
        (self.label.window.unwrap_or(w), self.label.lag.unwrap_or(l))
    }

    pub fn model_config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            cox: self.cox.clone().unwrap_or_default(),
            rsf: self.rsf.clone().unwrap_or_else(|| RsfConfig::for_condition(self.condition, seed)),
            mtlr: self.mtlr.clone().unwrap_or_else(|| MtlrConfig::for_condition(self.condition, seed)),
        }
    }

    /// Directory holding the bearing sub-directories.
    pub fn condition_dir(&self) -> Result<PathBuf> {
        let root = self
            .dataset
            .root
            .as_ref()
            .context("no dataset root; pass --root or set dataset.root in the config")?;
        if !root.is_dir() {
            bail!("dataset root {} does not exist", root.display());
        }
        let nested = root.join(self.condition.xjtu_directory());
        Ok(if nested.is_dir() { nested } else { root.clone() })
    }
}
