//! Observables from recorded series: Welch spectra, equipartition
//! temperatures, lock-in phase-space tracks and marginal histograms.
//!
//! Spectra are one-sided densities in Hz (see [`crate::units`]).

mod io;
mod lockin;

pub use io::{read_spectrum_csv, write_spectrum_csv, write_track_csv};
pub use lockin::{lockin_demodulate, marginal_histogram, shot_noise_scale, Axis, MarginalHistogram, PhaseSpaceTrack};

use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};

use crate::error::DspError;
use crate::model::MechanicalMode;
use crate::quad::integrate_resonance;
use crate::units::K_B;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            // periodic Hann, the usual choice for spectral estimation
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

/// Which record a spectrum was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumSource {
    /// The in-loop measurement record `y`; biased by noise squashing.
    InLoopY,
    /// True displacement `x` (or an out-of-loop estimate of it).
    TrueX,
}

impl SpectrumSource {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectrumSource::InLoopY => "in_loop_y",
            SpectrumSource::TrueX => "true_x",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "in_loop_y" => Some(SpectrumSource::InLoopY),
            "true_x" => Some(SpectrumSource::TrueX),
            _ => None,
        }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Hz.
    pub freq: Vec<f64>,
    /// m²/Hz.
    pub psd: Vec<f64>,
    /// Equivalent noise bandwidth of one bin (Hz).
    pub resolution_bw: f64,
    /// Frequency spacing of the grid (Hz).
    pub bin_width: f64,
    /// Number of averaged periodograms.
    pub averages: usize,
    pub source: SpectrumSource,
}

impl Spectrum {
    /// `∫ psd df` over bins with `lo ≤ f ≤ hi`.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        self.freq
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p * self.bin_width)
            .sum()
    }

    pub fn total_power(&self) -> f64 {
        self.psd.iter().sum::<f64>() * self.bin_width
    }

    /// Full frequency span of the grid.
    pub fn band(&self) -> (f64, f64) {
        (self.freq.first().copied().unwrap_or(0.0), self.freq.last().copied().unwrap_or(0.0))
    }

    /// Mean density over bins within `half_width` of `f`.
    pub fn average_near(&self, f: f64, half_width: f64) -> f64 {
        let vals: Vec<f64> = self
            .freq
            .iter()
            .zip(&self.psd)
            .filter(|(x, _)| (**x - f).abs() <= half_width)
            .map(|(_, p)| *p)
            .collect();
        vals.iter().sum::<f64>() / vals.len().max(1) as f64
    }
}

/// Welch averaged periodogram with per-segment mean removal.
///
/// `overlap` is the fractional overlap of consecutive segments in `[0, 1)`.
pub fn welch_psd(
    series: &[f64],
    sample_rate: f64,
    segment_length: usize,
    window: Window,
    overlap: f64,
    source: SpectrumSource,
) -> Result<Spectrum, DspError> {
    if segment_length < 2 {
        return Err(DspError::InvalidArgument { field: "segment_length", reason: "must be >= 2".into() });
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(DspError::InvalidArgument { field: "overlap", reason: "must lie in [0, 1)".into() });
    }
    if !(sample_rate > 0.0) {
        return Err(DspError::InvalidArgument { field: "sample_rate", reason: "must be > 0".into() });
    }
    if series.len() < segment_length {
        return Err(DspError::TooShort { len: series.len(), segment: segment_length });
    }
    let n = segment_length;
    let step = (n - (overlap * n as f64).round() as usize).max(1);
    let w = window.coefficients(n);
    let w_sum: f64 = w.iter().sum();
    let w_sq: f64 = w.iter().map(|v| v * v).sum();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let bins = n / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut segments = 0usize;
    let mut start = 0;
    while start + n <= series.len() {
        let seg = &series[start..start + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        for ((b, &s), &wi) in buf.iter_mut().zip(seg).zip(&w) {
            *b = Complex64::new((s - mean) * wi, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }

    let scale = 1.0 / (sample_rate * w_sq * segments as f64);
    let psd: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, &a)| {
            let edge = k == 0 || (n.is_multiple_of(2) && k == n / 2);
            a * scale * if edge { 1.0 } else { 2.0 }
        })
        .collect();
    let bin_width = sample_rate / n as f64;
    Ok(Spectrum {
        freq: (0..bins).map(|k| k as f64 * bin_width).collect(),
        psd,
        resolution_bw: sample_rate * w_sq / (w_sum * w_sum),
        bin_width,
        averages: segments,
        source,
    })
}

/// Default lock-in low-pass bandwidth: ten mechanical linewidths.
pub fn default_lockin_bandwidth(mode: &MechanicalMode) -> f64 {
    10.0 * mode.linewidth_hz()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EquipartitionOptions {
    /// Effective linewidth (Hz) used for the band-coverage check; defaults to the mode's.
    pub linewidth: Option<f64>,
    /// Accept in-loop spectra anyway.
    pub allow_in_loop: bool,
}

/// Fraction of an oscillator's displacement variance inside `[lo, hi]` (Hz)
/// for a response of angular linewidth `gamma`.
pub fn resonance_coverage(omega_m: f64, gamma: f64, lo: f64, hi: f64) -> f64 {
    let chi2 = |w: f64| 1.0 / ((omega_m * omega_m - w * w).powi(2) + gamma * gamma * w * w);
    let (wl, wh) = (2.0 * PI * lo.max(0.0), 2.0 * PI * hi);
    let inside = integrate_resonance(chi2, omega_m, 0.5 * gamma, wl, wh, 1e-9);
    inside / (PI / (2.0 * gamma * omega_m * omega_m))
}

/// `T = m·Ω_m²·∫_band S_x df / k_B`.
pub fn equipartition_temperature(
    spectrum: &Spectrum,
    mode: &MechanicalMode,
    band: (f64, f64),
    options: EquipartitionOptions,
) -> Result<f64, DspError> {
    if spectrum.source == SpectrumSource::InLoopY && !options.allow_in_loop {
        return Err(DspError::InLoopSpectrum);
    }
    let gamma = options.linewidth.map(|f| 2.0 * PI * f).unwrap_or(mode.gamma_m);
    let coverage = resonance_coverage(mode.omega_m, gamma, band.0, band.1);
    if coverage < 0.99 {
        return Err(DspError::BandTooNarrow { fraction: coverage });
    }
    let variance = spectrum.integrate(band.0, band.1);
    Ok(mode.mass_eff * mode.omega_m * mode.omega_m * variance / K_B)
}
