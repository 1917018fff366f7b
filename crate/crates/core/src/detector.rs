//! Degradation-onset detection by tracking the KL drift of per-band envelope
//! spectra against an exponentially decaying threshold.
//!
//! A recording is a sequence of per-minute vibration snapshots. Consecutive
//! snapshots are concatenated into non-overlapping windows of `window_seconds`
//! (one snapshot per started minute), each window is reduced to its envelope
//! spectrum, and the magnitudes inside every critical band form one sample set
//! per window. The band's KL divergence against window 0 is differenced
//! window-to-window; the first window after the burn-in whose absolute
//! difference exceeds the threshold marks the onset for that band.

use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp::{
    self, band_pass, critical_bands, estimate_pdf, estimate_pdf_with_edges, kl_divergence,
    BandKind, BearingGeometry, Signal,
};
use crate::error::{Error, Result};

/// Windows at or before this index never trigger a detection.
pub const BURN_IN_WINDOWS: usize = 5;

/// Seconds of wall-clock time represented by one snapshot file.
pub const SNAPSHOT_PERIOD_SECONDS: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Window duration `T` in seconds of wall-clock time.
    pub window_seconds: f64,
    /// Early-life sensitivity.
    pub eta: f64,
    /// End-of-life sensitivity.
    pub lambda_kl: f64,
    /// End of life `L`, minutes.
    pub end_of_life_minutes: f64,
    pub n_bins: usize,
    /// Critical band half-width, Hz.
    pub half_width: f64,
}

impl DetectorConfig {
    /// Defaults (`T = 600 s`, `eta = 5`, `lambda = 1.5`, 50 bins, 5 Hz bands) for a given end of life.
    pub fn for_end_of_life(end_of_life_minutes: f64) -> Self {
        Self {
            window_seconds: 600.0,
            eta: 5.0,
            lambda_kl: 1.5,
            end_of_life_minutes,
            n_bins: dsp::DEFAULT_PDF_BINS,
            half_width: dsp::DEFAULT_HALF_WIDTH_HZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
            }
        };
        positive("window_seconds", self.window_seconds)?;
        positive("eta", self.eta)?;
        positive("lambda_kl", self.lambda_kl)?;
        positive("end_of_life_minutes", self.end_of_life_minutes)?;
        positive("half_width", self.half_width)?;
        if self.eta / self.lambda_kl <= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "eta / lambda_kl must exceed 1, got {} / {}",
                self.eta, self.lambda_kl
            )));
        }
        if self.n_bins < 2 {
            return Err(Error::InvalidArgument("n_bins must be at least 2".into()));
        }
        Ok(())
    }

    /// Threshold decay rate per minute.
    pub fn beta(&self) -> f64 {
        (self.eta / self.lambda_kl).ln() / self.end_of_life_minutes
    }

    pub fn window_minutes(&self) -> f64 {
        self.window_seconds / 60.0
    }

    /// Elapsed minutes at the start of window `w`.
    pub fn window_start_minutes(&self, window: usize) -> f64 {
        window as f64 * self.window_minutes()
    }

    fn snapshots_per_window(&self) -> Result<usize> {
        let k = (self.window_seconds / SNAPSHOT_PERIOD_SECONDS).round();
        if k < 1.0 || ((k * SNAPSHOT_PERIOD_SECONDS) - self.window_seconds).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "window_seconds must be a positive multiple of {SNAPSHOT_PERIOD_SECONDS} s, got {}",
                self.window_seconds
            )));
        }
        Ok(k as usize)
    }
}

/// `eta * sigma * exp(-beta * tau(w))` with `tau(w)` the window's start minute.
pub fn threshold(window: usize, sigma_kl: f64, config: &DetectorConfig) -> f64 {
    config.eta * sigma_kl * (-config.beta() * config.window_start_minutes(window)).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandTrace {
    pub band: BandKind,
    /// KL divergence of each window against window 0 (`kl_values[0] = 0`).
    pub kl_values: Vec<f64>,
    /// `deltas[w - 1]` is the KL difference recorded at window `w`.
    pub deltas: Vec<f64>,
    /// Threshold at window `w` (`None` during the burn-in), aligned with `deltas`.
    pub thresholds: Vec<Option<f64>>,
    pub detected_window: Option<usize>,
}

impl BandTrace {
    pub fn n_windows(&self) -> usize {
        self.kl_values.len()
    }
}

/// Runs the KL drift detector over one band's per-window sample sets.
///
/// The trace is computed over every window so it can be plotted in full; the
/// detection is the first triggering window.
pub fn detect_band(
    band: BandKind,
    band_windows: &[Vec<f64>],
    config: &DetectorConfig,
) -> Result<BandTrace> {
    config.validate()?;
    if band_windows.len() < 2 {
        return Err(Error::TooFewWindows {
            got: band_windows.len(),
            need: 2,
        });
    }
    let reference = estimate_pdf(&band_windows[0], config.n_bins)?;
    let n = band_windows.len();
    let mut kl_values = Vec::with_capacity(n);
    kl_values.push(0.0);
    let mut deltas: Vec<f64> = Vec::with_capacity(n - 1);
    let mut thresholds = Vec::with_capacity(n - 1);
    let mut detected_window = None;

    for (w, values) in band_windows.iter().enumerate().skip(1) {
        let pdf = estimate_pdf_with_edges(values, &reference.edges)?;
        let kl = kl_divergence(&pdf, &reference)?;
        // the first difference only exists from window 2 on; window 1 records 0
        let delta = if w > 1 { kl - kl_values[w - 1] } else { 0.0 };
        kl_values.push(kl);
        deltas.push(delta);
        if w > BURN_IN_WINDOWS {
            let th = threshold(w, sample_sd(&deltas), config);
            thresholds.push(Some(th));
            if detected_window.is_none() && delta.abs() > th {
                detected_window = Some(w);
            }
        } else {
            thresholds.push(None);
        }
    }

    Ok(BandTrace {
        band,
        kl_values,
        deltas,
        thresholds,
        detected_window,
    })
}

fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt()
}

/// Per-minute snapshots of one bearing's horizontal vibration channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub bearing_id: String,
    pub minutes: Vec<Signal>,
}

impl Recording {
    pub fn new(bearing_id: impl Into<String>, minutes: Vec<Signal>) -> Result<Self> {
        let bearing_id = bearing_id.into();
        let first = minutes
            .first()
            .ok_or_else(|| Error::EmptyInput(format!("recording {bearing_id} has no snapshots")))?;
        let fs = first.sample_rate();
        if minutes.iter().any(|s| s.sample_rate() != fs) {
            return Err(Error::InvalidArgument(format!(
                "recording {bearing_id} mixes sample rates"
            )));
        }
        Ok(Self { bearing_id, minutes })
    }

    /// Splits a continuous signal into consecutive one-minute snapshots; a trailing partial minute is dropped.
    pub fn from_continuous(bearing_id: impl Into<String>, signal: &Signal) -> Result<Self> {
        let per_minute = (signal.sample_rate() * SNAPSHOT_PERIOD_SECONDS).round() as usize;
        let minutes = signal
            .samples()
            .chunks_exact(per_minute.max(1))
            .map(|c| Signal::new(c.to_vec(), signal.sample_rate()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(bearing_id, minutes)
    }

    pub fn sample_rate(&self) -> f64 {
        self.minutes[0].sample_rate()
    }

    /// Recording length in minutes, one per snapshot.
    pub fn len_minutes(&self) -> usize {
        self.minutes.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAnnotation {
    pub bearing_id: String,
    /// Detected onset `t_event`, minutes; equals `end_of_life_minutes` when no band fires.
    pub event_time_minutes: f64,
    pub end_of_life_minutes: f64,
    pub per_band: Vec<BandTrace>,
}

impl EventAnnotation {
    pub fn band_event_minutes(&self, trace: &BandTrace, config: &DetectorConfig) -> f64 {
        trace
            .detected_window
            .map(|w| config.window_start_minutes(w).min(self.end_of_life_minutes))
            .unwrap_or(self.end_of_life_minutes)
    }
}

/// Band-passed envelope magnitudes per window, indexed `[band][window]`.
pub fn band_windows(
    recording: &Recording,
    geometry: &BearingGeometry,
    shaft_speed_hz: f64,
    config: &DetectorConfig,
) -> Result<Vec<Vec<Vec<f64>>>> {
    config.validate()?;
    let bands = critical_bands(geometry, shaft_speed_hz, config.half_width)?;
    let fs = recording.sample_rate();
    bands.check_nyquist(fs)?;
    let per_window = config.snapshots_per_window()?;
    let chunks: Vec<&[Signal]> = recording.minutes.chunks_exact(per_window).collect();

    let per_window_bands: Vec<Vec<Vec<f64>>> = chunks
        .par_iter()
        .map_init(FftPlanner::new, |planner, chunk| {
            let samples: Vec<f64> = chunk.iter().flat_map(|s| s.samples().iter().copied()).collect();
            let spectrum = dsp::envelope_spectrum_with(planner, &samples, fs)?;
            bands
                .iter()
                .map(|(_, center)| band_pass(&spectrum, center, bands.half_width).map(|f| f.magnitudes))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut by_band = vec![Vec::with_capacity(per_window_bands.len()); BandKind::ALL.len()];
    for window in per_window_bands {
        for (b, values) in window.into_iter().enumerate() {
            by_band[b].push(values);
        }
    }
    Ok(by_band)
}

/// Annotates the degradation onset of one bearing.
pub fn detect_event(
    recording: &Recording,
    geometry: &BearingGeometry,
    shaft_speed_hz: f64,
    config: &DetectorConfig,
) -> Result<EventAnnotation> {
    let by_band = band_windows(recording, geometry, shaft_speed_hz, config)?;
    let per_band = BandKind::ALL
        .par_iter()
        .zip(by_band.par_iter())
        .map(|(&band, windows)| detect_band(band, windows, config))
        .collect::<Result<Vec<_>>>()?;

    let mut annotation = EventAnnotation {
        bearing_id: recording.bearing_id.clone(),
        event_time_minutes: config.end_of_life_minutes,
        end_of_life_minutes: config.end_of_life_minutes,
        per_band: Vec::new(),
    };
    annotation.event_time_minutes = per_band
        .iter()
        .map(|t| annotation.band_event_minutes(t, config))
        .fold(config.end_of_life_minutes, f64::min);
    annotation.per_band = per_band;
    Ok(annotation)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(lambda: f64) -> DetectorConfig {
        DetectorConfig {
            window_seconds: 600.0,
            eta: 5.0,
            lambda_kl: lambda,
            end_of_life_minutes: 100.0,
            n_bins: 10,
            half_width: 5.0,
        }
    }

    #[test]
    fn threshold_endpoints() {
        let c = config(2.0);
        assert!((threshold(0, 1.3, &c) - 5.0 * 1.3).abs() < 1e-12);
        // tau(10) = 100 min = L
        assert!((threshold(10, 1.3, &c) - 2.0 * 1.3).abs() < 1e-12);
        // tau(5) = 50 min
        assert!((threshold(5, 1.0, &c) - 3.1623).abs() < 1e-4);
        assert!(threshold(6, 1.0, &c) < threshold(5, 1.0, &c));
    }

    #[test]
    fn config_validation() {
        assert!(config(5.0).validate().is_err());
        assert!(config(6.0).validate().is_err());
        assert!(config(1.5).validate().is_ok());
        let mut c = config(1.5);
        c.window_seconds = 90.0;
        assert!(c.snapshots_per_window().is_err());
        c.window_seconds = 600.0;
        assert_eq!(c.snapshots_per_window().unwrap(), 10);
    }

    #[test]
    fn constant_windows_never_fire() {
        let windows = vec![vec![1.0, 2.0, 3.0, 4.0]; 20];
        let trace = detect_band(BandKind::Bpfo, &windows, &config(1.5)).unwrap();
        assert!(trace.kl_values.iter().all(|&k| k == 0.0));
        assert!(trace.deltas.iter().all(|&d| d == 0.0));
        assert_eq!(trace.detected_window, None);
        assert_eq!(trace.deltas.len(), trace.kl_values.len() - 1);
        assert_eq!(trace.thresholds.len(), trace.deltas.len());
        assert!(trace.thresholds[..BURN_IN_WINDOWS].iter().all(Option::is_none));
    }

    #[test]
    fn too_few_windows() {
        let err = detect_band(BandKind::Bpfo, &[vec![1.0, 2.0]], &config(1.5)).unwrap_err();
        assert!(matches!(err, Error::TooFewWindows { got: 1, need: 2 }));
    }

    #[test]
    fn continuous_split() {
        let s = Signal::new(vec![0.0; 250], 2.0).unwrap();
        let r = Recording::from_continuous("b", &s).unwrap();
        assert_eq!(r.len_minutes(), 2);
        assert_eq!(r.minutes[0].len(), 120);
    }
}
