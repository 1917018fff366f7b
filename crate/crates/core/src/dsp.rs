//! Spectral primitives: bearing fault frequencies, analytic-signal envelope
//! spectra, band extraction, histogram PDFs and KL divergence.

use std::fmt;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width of each critical band when none is configured, in Hz.
pub const DEFAULT_HALF_WIDTH_HZ: f64 = 5.0;

/// Histogram bin count used for PDFs and entropy when none is configured.
pub const DEFAULT_PDF_BINS: usize = 50;

/// Additive smoothing applied to every bin before a KL log-ratio.
pub const KL_EPSILON: f64 = 1e-12;

/// A uniformly sampled vibration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// One-sided magnitude spectrum over contiguous, equally spaced bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralFrame {
    pub magnitudes: Vec<f64>,
    pub bin_width: f64,
    pub start_frequency: f64,
}

impl SpectralFrame {
    /// Center frequency of bin `i`.
    pub fn frequency(&self, i: usize) -> f64 {
        self.start_frequency + i as f64 * self.bin_width
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    /// Highest bin center frequency.
    pub fn end_frequency(&self) -> f64 {
        self.frequency(self.magnitudes.len().saturating_sub(1))
    }

    /// Index of the largest magnitude among bins whose frequency is at least `min_frequency`.
    pub fn peak_bin_above(&self, min_frequency: f64) -> Option<usize> {
        self.magnitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| self.frequency(*i) >= min_frequency)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
    }
}

/// Rolling-element bearing geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingGeometry {
    pub n_rollers: u32,
    /// Rolling element diameter `d`, mm.
    pub roller_diameter: f64,
    /// Pitch (mean) diameter `D`, mm.
    pub pitch_diameter: f64,
    /// Contact angle with respect to the radial plane, degrees.
    pub contact_angle_deg: f64,
}

impl BearingGeometry {
    pub fn new(
        n_rollers: u32,
        roller_diameter: f64,
        pitch_diameter: f64,
        contact_angle_deg: f64,
    ) -> Result<Self> {
        let geometry = Self {
            n_rollers,
            roller_diameter,
            pitch_diameter,
            contact_angle_deg,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// LDK UER204 deep-groove ball bearing used in the XJTU-SY run-to-failure tests.
    pub fn ldk_uer204() -> Self {
        Self {
            n_rollers: 8,
            roller_diameter: 7.92,
            pitch_diameter: 34.55,
            contact_angle_deg: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.roller_diameter;
        let pitch = self.pitch_diameter;
        if self.n_rollers < 1 {
            return Err(Error::InvalidGeometry("at least one rolling element required".into()));
        }
        if !(d.is_finite() && pitch.is_finite() && d > 0.0 && d < pitch) {
            return Err(Error::InvalidGeometry(format!(
                "need 0 < d < D, got d = {d}, D = {pitch}"
            )));
        }
        if !(0.0..90.0).contains(&self.contact_angle_deg) {
            return Err(Error::InvalidGeometry(format!(
                "contact angle must lie in [0, 90) degrees, got {}",
                self.contact_angle_deg
            )));
        }
        Ok(())
    }

    /// (d / D) cos(phi)
    fn projected_ratio(&self) -> f64 {
        self.roller_diameter / self.pitch_diameter * self.contact_angle_deg.to_radians().cos()
    }
}

/// The five characteristic fault-frequency bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BandKind {
    /// Ball pass frequency, outer race.
    Bpfo,
    /// Ball pass frequency, inner race.
    Bpfi,
    /// Ball spin frequency.
    Bsf,
    /// Fundamental train (cage) frequency.
    Ftf,
    /// Shaft frequency.
    Sf,
}

impl BandKind {
    pub const ALL: [BandKind; 5] = [
        BandKind::Bpfo,
        BandKind::Bpfi,
        BandKind::Bsf,
        BandKind::Ftf,
        BandKind::Sf,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BandKind::Bpfo => "BPFO",
            BandKind::Bpfi => "BPFI",
            BandKind::Bsf => "BSF",
            BandKind::Ftf => "FTF",
            BandKind::Sf => "SF",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for BandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalBands {
    /// Center frequencies in Hz, ordered as [`BandKind::ALL`].
    pub centers: [f64; 5],
    pub half_width: f64,
}

impl CriticalBands {
    pub fn center(&self, kind: BandKind) -> f64 {
        self.centers[kind.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (BandKind, f64)> + '_ {
        BandKind::ALL.iter().map(move |&k| (k, self.center(k)))
    }

    /// Checks that every band lies below the Nyquist frequency.
    pub fn check_nyquist(&self, sample_rate: f64) -> Result<()> {
        let nyquist = sample_rate / 2.0;
        for (kind, center) in self.iter() {
            if center + self.half_width >= nyquist {
                return Err(Error::InvalidArgument(format!(
                    "{kind} band up to {:.3} Hz exceeds Nyquist {nyquist:.3} Hz",
                    center + self.half_width
                )));
            }
        }
        Ok(())
    }
}

/// Fault frequencies for a bearing turning at `shaft_speed_hz`.
pub fn critical_bands(
    geometry: &BearingGeometry,
    shaft_speed_hz: f64,
    half_width: f64,
) -> Result<CriticalBands> {
    geometry.validate()?;
    if !(shaft_speed_hz.is_finite() && shaft_speed_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "shaft speed must be positive, got {shaft_speed_hz}"
        )));
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "band half-width must be positive, got {half_width}"
        )));
    }
    let n = f64::from(geometry.n_rollers);
    let ratio = geometry.projected_ratio();
    let fr = shaft_speed_hz;
    let bpfo = n * fr / 2.0 * (1.0 - ratio);
    let bpfi = n * fr / 2.0 * (1.0 + ratio);
    let bsf = geometry.pitch_diameter * fr / (2.0 * geometry.roller_diameter) * (1.0 - ratio * ratio);
    let ftf = fr / 2.0 * (1.0 - ratio);
    Ok(CriticalBands {
        centers: [bpfo, bpfi, bsf, ftf, fr],
        half_width,
    })
}

/// Analytic signal via the frequency-domain construction.
pub fn analytic_signal(samples: &[f64]) -> Result<Vec<Complex<f64>>> {
    let mut planner = FftPlanner::new();
    analytic_signal_with(&mut planner, samples)
}

fn analytic_signal_with(
    planner: &mut FftPlanner<f64>,
    samples: &[f64],
) -> Result<Vec<Complex<f64>>> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::EmptySignal("analytic signal of an empty sequence".into()));
    }
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&x| Complex::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    // keep DC (and Nyquist for even n), double positive frequencies, zero negatives
    let positive_end = n.div_ceil(2);
    for c in buf.iter_mut().take(positive_end).skip(1) {
        *c *= 2.0;
    }
    let negative_start = n / 2 + 1;
    for c in buf.iter_mut().skip(negative_start) {
        *c = Complex::new(0.0, 0.0);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    for c in &mut buf {
        *c *= scale;
    }
    Ok(buf)
}

/// Magnitude spectrum of the signal envelope `|x + iH(x)|`.
///
/// Bins cover `0..=n/2`; magnitudes are scaled by `1/n` so the DC bin equals the
/// mean envelope amplitude.
pub fn envelope_spectrum(signal: &Signal) -> Result<SpectralFrame> {
    let mut planner = FftPlanner::new();
    envelope_spectrum_with(&mut planner, signal.samples(), signal.sample_rate())
}

pub(crate) fn envelope_spectrum_with(
    planner: &mut FftPlanner<f64>,
    samples: &[f64],
    sample_rate: f64,
) -> Result<SpectralFrame> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::EmptySignal(format!(
            "envelope spectrum needs at least 2 samples, got {n}"
        )));
    }
    let analytic = analytic_signal_with(planner, samples)?;
    let mut envelope: Vec<Complex<f64>> = analytic
        .iter()
        .map(|c| Complex::new(c.norm(), 0.0))
        .collect();
    planner.plan_fft_forward(n).process(&mut envelope);
    let scale = 1.0 / n as f64;
    let magnitudes = envelope[..=n / 2].iter().map(|c| c.norm() * scale).collect();
    Ok(SpectralFrame {
        magnitudes,
        bin_width: sample_rate / n as f64,
        start_frequency: 0.0,
    })
}

/// Sub-frame of bins whose centers lie in `[center - half_width, center + half_width]`.
pub fn band_pass(spectrum: &SpectralFrame, center: f64, half_width: f64) -> Result<SpectralFrame> {
    let low = center - half_width;
    let high = center + half_width;
    let range = band_range(spectrum, low, high).ok_or(Error::EmptyBand { low, high })?;
    Ok(SpectralFrame {
        magnitudes: spectrum.magnitudes[range.clone()].to_vec(),
        bin_width: spectrum.bin_width,
        start_frequency: spectrum.frequency(range.start),
    })
}

fn band_range(spectrum: &SpectralFrame, low: f64, high: f64) -> Option<std::ops::Range<usize>> {
    if spectrum.is_empty() || !(spectrum.bin_width > 0.0) || low > high {
        return None;
    }
    // rounding slack so edges that land exactly on a bin center are kept
    let slack = 1e-9 * spectrum.bin_width;
    let first = ((low - spectrum.start_frequency - slack) / spectrum.bin_width)
        .ceil()
        .max(0.0);
    let last = ((high - spectrum.start_frequency + slack) / spectrum.bin_width).floor();
    if last < 0.0 || first > last {
        return None;
    }
    let first = first as usize;
    let last = (last as usize).min(spectrum.len() - 1);
    if first > last {
        return None;
    }
    Some(first..last + 1)
}

/// Discrete probability distribution over histogram bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pdf {
    pub probabilities: Vec<f64>,
    pub edges: Vec<f64>,
}

impl Pdf {
    pub fn n_bins(&self) -> usize {
        self.probabilities.len()
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyInput("PDF estimation needs at least one value".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!("non-finite value {v} in PDF input")));
    }
    Ok(())
}

/// Equal-width histogram over `[min, max]` normalized to unit mass.
///
/// A constant input yields a single bin of mass 1 spanning `[v - 0.5, v + 0.5]`.
pub fn estimate_pdf(values: &[f64], n_bins: usize) -> Result<Pdf> {
    check_finite(values)?;
    if n_bins < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 bins, got {n_bins}")));
    }
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if max == min {
        return Ok(Pdf {
            probabilities: vec![1.0],
            edges: vec![min - 0.5, min + 0.5],
        });
    }
    let width = (max - min) / n_bins as f64;
    let mut edges: Vec<f64> = (0..n_bins).map(|i| min + i as f64 * width).collect();
    edges.push(max);
    histogram(values, &edges)
}

/// Histogram on fixed edges; values outside the edge range land in the end bins.
pub fn estimate_pdf_with_edges(values: &[f64], edges: &[f64]) -> Result<Pdf> {
    check_finite(values)?;
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("PDF edges must be strictly increasing".into()));
    }
    histogram(values, edges)
}

fn histogram(values: &[f64], edges: &[f64]) -> Result<Pdf> {
    let n_bins = edges.len() - 1;
    let mut counts = vec![0usize; n_bins];
    for &v in values {
        // partition_point gives the count of edges <= v
        let idx = edges.partition_point(|&e| e <= v).saturating_sub(1).min(n_bins - 1);
        counts[idx] += 1;
    }
    let total = values.len() as f64;
    Ok(Pdf {
        probabilities: counts.into_iter().map(|c| c as f64 / total).collect(),
        edges: edges.to_vec(),
    })
}

fn smoothed(probabilities: &[f64]) -> Vec<f64> {
    let norm = 1.0 + KL_EPSILON * probabilities.len() as f64;
    probabilities.iter().map(|&p| (p + KL_EPSILON) / norm).collect()
}

/// `KL(p || q)` in nats after epsilon smoothing.
pub fn kl_divergence(p: &Pdf, q: &Pdf) -> Result<f64> {
    if p.edges != q.edges || p.probabilities.len() != q.probabilities.len() {
        return Err(Error::MismatchedEdges);
    }
    let ps = smoothed(&p.probabilities);
    let qs = smoothed(&q.probabilities);
    let kl: f64 = ps
        .iter()
        .zip(&qs)
        .map(|(&a, &b)| if a == b { 0.0 } else { a * (a / b).ln() })
        .sum();
    Ok(kl.max(0.0))
}
