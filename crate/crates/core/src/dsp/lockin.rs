//! Lock-in demodulation into slowly varying quadratures and their marginals.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erf;

use crate::error::DspError;
use crate::model::{MechanicalMode, ProbeState};
use crate::simulate::imprecision_psd;
use crate::units::white_sample_variance;

const POLES: usize = 4;

/// Four cascaded identical one-pole sections whose combined −3 dB point is `bandwidth`.
#[derive(Debug, Clone)]
struct FourPole {
    a: f64,
    state: [f64; POLES],
}

impl FourPole {
    fn new(bandwidth: f64, sample_rate: f64) -> Self {
        let corner = bandwidth / (2f64.powf(1.0 / POLES as f64) - 1.0).sqrt();
        Self { a: 1.0 - (-2.0 * PI * corner / sample_rate).exp(), state: [0.0; POLES] }
    }

    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let mut v = x;
        for s in &mut self.state {
            *s += self.a * (v - *s);
            v = *s;
        }
        v
    }
}

/// Demodulated quadratures sampled at the input rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceTrack {
    pub t: Vec<f64>,
    /// `X = 2·LPF[y·cos ωt]`.
    pub in_phase: Vec<f64>,
    /// `Y = −2·LPF[y·sin ωt]`.
    pub quadrature: Vec<f64>,
    pub reference_hz: f64,
    pub lpf_bandwidth: f64,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    InPhase,
    Quadrature,
}

impl PhaseSpaceTrack {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn axis(&self, axis: Axis) -> &[f64] {
        match axis {
            Axis::InPhase => &self.in_phase,
            Axis::Quadrature => &self.quadrature,
        }
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    /// Roughly independent samples: duration × filter bandwidth.
    pub fn effective_samples(&self) -> f64 {
        self.duration() * self.lpf_bandwidth
    }

    /// Drops samples before `t0` (filter start-up transient).
    pub fn after(&self, t0: f64) -> PhaseSpaceTrack {
        let k = self.t.partition_point(|t| *t < t0);
        PhaseSpaceTrack {
            t: self.t[k..].to_vec(),
            in_phase: self.in_phase[k..].to_vec(),
            quadrature: self.quadrature[k..].to_vec(),
            ..*self
        }
    }

    /// Every `stride`-th sample. The filter output is band-limited, so a
    /// stride up to `sample_rate / (4·lpf_bandwidth)` loses nothing visible.
    pub fn decimated(&self, stride: usize) -> PhaseSpaceTrack {
        let stride = stride.max(1);
        let pick = |v: &[f64]| v.iter().step_by(stride).copied().collect();
        PhaseSpaceTrack {
            t: pick(&self.t),
            in_phase: pick(&self.in_phase),
            quadrature: pick(&self.quadrature),
            sample_rate: self.sample_rate / stride as f64,
            ..*self
        }
    }

    /// Divides both quadratures by `unit`.
    pub fn normalized(&self, unit: f64) -> PhaseSpaceTrack {
        PhaseSpaceTrack {
            t: self.t.clone(),
            in_phase: self.in_phase.iter().map(|v| v / unit).collect(),
            quadrature: self.quadrature.iter().map(|v| v / unit).collect(),
            ..*self
        }
    }

    pub fn variance(&self, axis: Axis) -> f64 {
        let (_, var) = moments(self.axis(axis));
        var
    }

    /// Settling time of the output filter, a safe amount to discard.
    pub fn settling_time(&self) -> f64 {
        settling_time(self.lpf_bandwidth)
    }
}

fn settling_time(lpf_bandwidth: f64) -> f64 {
    10.0 / lpf_bandwidth
}

fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len().max(1) as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Demodulates `y` at `f_ref` with a four-pole low-pass of bandwidth `lpf_bandwidth`.
pub fn lockin_demodulate(
    y: &[f64],
    sample_rate: f64,
    f_ref: f64,
    lpf_bandwidth: f64,
) -> Result<PhaseSpaceTrack, DspError> {
    if !(sample_rate > 0.0) {
        return Err(DspError::InvalidArgument { field: "sample_rate", reason: "must be > 0".into() });
    }
    if !(f_ref > 0.0 && f_ref < 0.5 * sample_rate) {
        return Err(DspError::InvalidArgument { field: "f_ref", reason: "must lie in (0, fs/2)".into() });
    }
    if !(lpf_bandwidth > 0.0) || lpf_bandwidth >= f_ref {
        return Err(DspError::InvalidArgument {
            field: "lpf_bandwidth",
            reason: format!("{lpf_bandwidth} Hz must be positive and below the reference {f_ref} Hz"),
        });
    }
    let mut fx = FourPole::new(lpf_bandwidth, sample_rate);
    let mut fy = FourPole::new(lpf_bandwidth, sample_rate);
    let cycles_per_sample = f_ref / sample_rate;
    let n = y.len();
    let mut track = PhaseSpaceTrack {
        t: Vec::with_capacity(n),
        in_phase: Vec::with_capacity(n),
        quadrature: Vec::with_capacity(n),
        reference_hz: f_ref,
        lpf_bandwidth,
        sample_rate,
    };
    for (k, &v) in y.iter().enumerate() {
        // reduce the phase before the trig call to keep precision over long records
        let phase = 2.0 * PI * (k as f64 * cycles_per_sample).fract();
        let (s, c) = phase.sin_cos();
        track.t.push(k as f64 / sample_rate);
        track.in_phase.push(2.0 * fx.process(v * c));
        track.quadrature.push(-2.0 * fy.process(v * s));
    }
    Ok(track)
}

/// RMS of the in-phase quadrature obtained by demodulating pure coherent-probe
/// imprecision noise with the same settings; the shot-noise unit for tracks.
pub fn shot_noise_scale(
    mode: &MechanicalMode,
    coherent_probe: &ProbeState,
    sample_rate: f64,
    f_ref: f64,
    lpf_bandwidth: f64,
    duration: f64,
    seed: u64,
) -> Result<f64, DspError> {
    let s = imprecision_psd(mode, coherent_probe)
        .map_err(|e| DspError::InvalidArgument { field: "coherent_probe", reason: e.to_string() })?;
    let sigma = white_sample_variance(s, sample_rate).sqrt();
    let n = (duration * sample_rate).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let track = lockin_demodulate(&noise, sample_rate, f_ref, lpf_bandwidth)?.after(settling_time(lpf_bandwidth));
    if track.effective_samples() < 100.0 {
        return Err(DspError::InsufficientSamples {
            available: track.effective_samples(),
            required: 100.0,
        });
    }
    Ok(track.variance(Axis::InPhase).sqrt())
}

/// Normalised histogram of one quadrature with a moment-matched Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalHistogram {
    pub centers: Vec<f64>,
    /// Probability density; integrates to one over the bins.
    pub density: Vec<f64>,
    pub bin_width: f64,
    pub mean: f64,
    pub variance: f64,
    /// Gaussian density at each bin center.
    pub gaussian: Vec<f64>,
    /// χ² per populated bin, with counts rescaled to the effective sample size.
    pub chi2_per_bin: f64,
    pub effective_samples: f64,
}

const MIN_EFFECTIVE_SAMPLES: f64 = 1e4;

pub fn marginal_histogram(track: &PhaseSpaceTrack, axis: Axis, bins: usize) -> Result<MarginalHistogram, DspError> {
    if bins < 2 {
        return Err(DspError::InvalidArgument { field: "bins", reason: "need at least 2 bins".into() });
    }
    let n_eff = track.effective_samples();
    if n_eff < MIN_EFFECTIVE_SAMPLES {
        return Err(DspError::InsufficientSamples {
            available: n_eff,
            required: MIN_EFFECTIVE_SAMPLES,
        });
    }
    let data = track.axis(axis);
    let (mean, variance) = moments(data);
    let lo = data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(variance > 0.0) || !(hi > lo) || !variance.is_finite() {
        return Err(DspError::Degenerate);
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in data {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let n = data.len() as f64;
    let sigma = variance.sqrt();
    let cdf = |x: f64| 0.5 * (1.0 + erf((x - mean) / (sigma * SQRT_2)));
    let mut chi2 = 0.0;
    let mut used = 0usize;
    for (k, &c) in counts.iter().enumerate() {
        let a = lo + k as f64 * width;
        let expected = n_eff * (cdf(a + width) - cdf(a));
        if expected >= 5.0 {
            let observed = c as f64 * n_eff / n;
            chi2 += (observed - expected).powi(2) / expected;
            used += 1;
        }
    }
    let centers: Vec<f64> = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
    let gaussian = centers
        .iter()
        .map(|x| (-(x - mean).powi(2) / (2.0 * variance)).exp() / (sigma * (2.0 * PI).sqrt()))
        .collect();
    Ok(MarginalHistogram {
        density: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
        centers,
        bin_width: width,
        mean,
        variance,
        gaussian,
        chi2_per_bin: if used > 0 { chi2 / used as f64 } else { f64::NAN },
        effective_samples: n_eff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_amplitude_and_phase() {
        let fs = 1e6;
        let f = 1e5;
        let (a, phi) = (2.0, 0.6);
        let y: Vec<f64> = (0..200_000).map(|k| a * (2.0 * PI * f * k as f64 / fs + phi).cos()).collect();
        let track = lockin_demodulate(&y, fs, f, 1e3).unwrap().after(0.01);
        let x = track.in_phase.last().unwrap();
        let q = track.quadrature.last().unwrap();
        assert!((x - a * phi.cos()).abs() < 1e-3 * a, "{x}");
        assert!((q - a * phi.sin()).abs() < 1e-3 * a, "{q}");
    }

    #[test]
    fn carrier_rejected_by_40_db() {
        let fs = 1e6;
        let f = 1e5;
        let y: Vec<f64> = (0..200_000).map(|k| (2.0 * PI * f * k as f64 / fs).cos()).collect();
        let track = lockin_demodulate(&y, fs, f, 1e3).unwrap().after(0.02);
        let ripple = track.in_phase.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
        assert!(20.0 * ripple.log10() < -40.0, "ripple {ripple}");
    }

    #[test]
    fn four_pole_bandwidth_is_minus_3_db() {
        let fs = 1e6;
        let bw = 2e3;
        let mut f = FourPole::new(bw, fs);
        let n = 400_000;
        let mut peak: f64 = 0.0;
        for k in 0..n {
            let v = f.process((2.0 * PI * bw * k as f64 / fs).sin());
            if k > n / 2 {
                peak = peak.max(v.abs());
            }
        }
        assert!((peak - SQRT_2.recip()).abs() < 0.01, "{peak}");
    }

    #[test]
    fn bandwidth_above_reference_is_rejected() {
        assert!(lockin_demodulate(&[0.0; 100], 1e6, 1e3, 2e3).is_err());
    }

    fn gaussian_track(n: usize, bw: f64) -> PhaseSpaceTrack {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..n).map(|_| 1.0 + 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
        PhaseSpaceTrack {
            t: (0..n).map(|k| k as f64).collect(),
            in_phase: v.clone(),
            quadrature: vec![0.0; n],
            reference_hz: 0.25,
            lpf_bandwidth: bw,
            sample_rate: 1.0,
        }
    }

    #[test]
    fn histogram_density_is_normalised() {
        let track = gaussian_track(50_000, 0.5);
        let h = marginal_histogram(&track, Axis::InPhase, 60).unwrap();
        let total: f64 = h.density.iter().sum::<f64>() * h.bin_width;
        assert!((total - 1.0).abs() < 1e-6);
        assert!((h.mean - 1.0).abs() < 0.01 && (h.variance - 0.25).abs() < 0.01);
        assert!(h.chi2_per_bin < 3.0, "{}", h.chi2_per_bin);
    }

    #[test]
    fn histogram_refuses_bad_input() {
        let track = gaussian_track(50_000, 0.5);
        assert_eq!(marginal_histogram(&track, Axis::Quadrature, 40), Err(DspError::Degenerate));
        let short = gaussian_track(1000, 0.5);
        assert!(matches!(marginal_histogram(&short, Axis::InPhase, 40), Err(DspError::InsufficientSamples { .. })));
    }

    #[test]
    fn decimation_keeps_duration_and_statistics() {
        let track = gaussian_track(50_000, 0.5);
        let d = track.decimated(7);
        assert_eq!(d.len(), 50_000usize.div_ceil(7));
        assert!((d.duration() - track.duration()).abs() < 7.0 / track.sample_rate);
        assert!((d.variance(Axis::InPhase) / track.variance(Axis::InPhase) - 1.0).abs() < 0.05);
        assert_eq!(track.decimated(0), track);
    }
}
