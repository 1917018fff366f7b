//! Time-domain condition indicators computed from one raw vibration window.

use serde::{Deserialize, Serialize};

use crate::dsp::{estimate_pdf, DEFAULT_PDF_BINS};
use crate::error::{Error, Result};

pub const N_FEATURES: usize = 12;

/// Canonical column names, in [`FeatureVector::to_array`] order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "absolute_mean",
    "std",
    "skewness",
    "kurtosis",
    "entropy",
    "rms",
    "max_value",
    "peak_to_peak",
    "crest_factor",
    "clearance_factor",
    "shape_factor",
    "impulse",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub absolute_mean: f64,
    pub std: f64,
    pub skewness: f64,
    /// Raw fourth standardized moment (3 for a Gaussian).
    pub kurtosis: f64,
    pub entropy: f64,
    pub rms: f64,
    pub max_value: f64,
    /// `max|x| - min|x|`.
    pub peak_to_peak: f64,
    pub crest_factor: f64,
    pub clearance_factor: f64,
    pub shape_factor: f64,
    pub impulse: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.absolute_mean,
            self.std,
            self.skewness,
            self.kurtosis,
            self.entropy,
            self.rms,
            self.max_value,
            self.peak_to_peak,
            self.crest_factor,
            self.clearance_factor,
            self.shape_factor,
            self.impulse,
        ]
    }

    pub fn from_array(v: [f64; N_FEATURES]) -> Self {
        Self {
            absolute_mean: v[0],
            std: v[1],
            skewness: v[2],
            kurtosis: v[3],
            entropy: v[4],
            rms: v[5],
            max_value: v[6],
            peak_to_peak: v[7],
            crest_factor: v[8],
            clearance_factor: v[9],
            shape_factor: v[10],
            impulse: v[11],
        }
    }

    pub fn column_index(name: &str) -> Option<usize> {
        FEATURE_NAMES.iter().position(|&n| n == name)
    }
}

fn check_window(samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::EmptySignal(format!(
            "feature extraction needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample in window".into()));
    }
    Ok(())
}

fn mean(samples: &[f64]) -> f64 {
    samples.iter().sum::<f64>() / samples.len() as f64
}

pub fn absolute_mean(samples: &[f64]) -> f64 {
    samples.iter().map(|x| x.abs()).sum::<f64>() / samples.len() as f64
}

pub fn rms(samples: &[f64]) -> f64 {
    (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt()
}

pub fn max_abs(samples: &[f64]) -> f64 {
    samples.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn min_abs(samples: &[f64]) -> f64 {
    samples.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()))
}

pub fn crest_factor(samples: &[f64]) -> f64 {
    max_abs(samples) / rms(samples)
}

pub fn clearance_factor(samples: &[f64]) -> f64 {
    let root_mean = samples.iter().map(|x| x.abs().sqrt()).sum::<f64>() / samples.len() as f64;
    max_abs(samples) / (root_mean * root_mean)
}

pub fn shape_factor(samples: &[f64]) -> f64 {
    rms(samples) / absolute_mean(samples)
}

pub fn impulse(samples: &[f64]) -> f64 {
    max_abs(samples) / absolute_mean(samples)
}

/// Shannon entropy (nats) of the window's `n_bins` histogram.
pub fn entropy(samples: &[f64], n_bins: usize) -> Result<f64> {
    let pdf = estimate_pdf(samples, n_bins)?;
    Ok(-pdf
        .probabilities
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>())
}

/// All twelve features with the default 50-bin entropy histogram.
pub fn extract_features(samples: &[f64]) -> Result<FeatureVector> {
    extract_features_with_bins(samples, DEFAULT_PDF_BINS)
}

pub fn extract_features_with_bins(samples: &[f64], entropy_bins: usize) -> Result<FeatureVector> {
    check_window(samples)?;
    let n = samples.len() as f64;
    let mu = mean(samples);
    let (m2, m3, m4) = samples.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &x| {
        let d = x - mu;
        let d2 = d * d;
        (a + d2, b + d2 * d, c + d2 * d2)
    });
    let std = (m2 / n).sqrt();
    if std == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    let abs_mean = absolute_mean(samples);
    let rms = rms(samples);
    let max_value = max_abs(samples);
    Ok(FeatureVector {
        absolute_mean: abs_mean,
        std,
        skewness: m3 / n / std.powi(3),
        kurtosis: m4 / n / std.powi(4),
        entropy: entropy(samples, entropy_bins)?,
        rms,
        max_value,
        peak_to_peak: max_value - min_abs(samples),
        crest_factor: max_value / rms,
        clearance_factor: clearance_factor(samples),
        shape_factor: rms / abs_mean,
        impulse: max_value / abs_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_window_has_zero_skew() {
        let f = extract_features(&[1.0, 2.0, 3.0]).unwrap();
        assert!(f.skewness.abs() < 1e-15);
        assert!((f.kurtosis - 1.5).abs() < 1e-12);
    }

    #[test]
    fn two_sample_window() {
        let f = extract_features(&[3.0, 4.0]).unwrap();
        assert!((f.rms - 12.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(f.peak_to_peak, 1.0);
        assert_eq!(f.max_value, 4.0);
        assert_eq!(f.std, 0.5);
        assert!((f.entropy - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn peak_to_peak_uses_magnitudes() {
        let f = extract_features(&[-5.0, 1.0, 2.0]).unwrap();
        assert_eq!(f.peak_to_peak, 4.0);
    }

    #[test]
    fn constant_window_ratios() {
        let x = [-2.5; 16];
        assert_eq!(crest_factor(&x), 1.0);
        assert_eq!(shape_factor(&x), 1.0);
        assert_eq!(impulse(&x), 1.0);
        assert!((clearance_factor(&x) - 1.0).abs() < 1e-12);
        assert!(matches!(extract_features(&x), Err(Error::DegenerateSignal)));
    }

    #[test]
    fn short_window() {
        assert!(extract_features(&[1.0]).is_err());
    }

    #[test]
    fn names_round_trip() {
        assert_eq!(FeatureVector::column_index("rms"), Some(5));
        let f = extract_features(&[0.1, -0.4, 0.9, 0.3]).unwrap();
        assert_eq!(FeatureVector::from_array(f.to_array()), f);
    }
}
