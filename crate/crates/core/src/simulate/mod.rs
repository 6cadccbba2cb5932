//! Time-domain Monte Carlo of the in-loop experiment.
//!
//! A thermally driven oscillator `m·ẍ + m·Γ_m·ẋ + m·Ω_m²·x = F_th + F_fb` is
//! sampled at a fixed rate. The measurement is `y = x + n` with `n` white
//! imprecision noise of double-sided density [`imprecision_psd`]; each
//! recorded `y` sample is the average of `y(t)` over the preceding sample
//! period (an integrate-and-dump detector), while `x` and `v` are point samples.
//!
//! Feedback modes:
//!
//! * [`FeedbackMode::IdealViscous`]: `F_fb = −m·Γ_m·G·ẏ` in continuous time.
//!   With `w = ẋ + Γ_m·G·n` the closed loop is the linear SDE
//!
//!   ```text
//!   ẋ = w − Γ_m·G·n
//!   ẇ = −Ω_m²·x − Γ_m(1+G)·w + Γ_m²·G(1+G)·n + F_th/m
//!   ```
//!
//!   which is propagated exactly, jointly with the step integrals of `x` and
//!   `n` that form the recorded `y`. The `f_fb` column holds the band-limited
//!   estimate `−m·Γ_m·G·BP[ẏ]` of the applied force.
//! * [`FeedbackMode::RealisticChain`]: `F_fb = sign·K·BP[y](t − τ)` computed
//!   sample by sample and held constant over each sample period.

mod chain;
mod discretize;

pub use chain::{Bandpass, DelayLine, VelocityEstimator};

use std::f64::consts::PI;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{ModelError, SimError};
use crate::model::{cooperativity, detected_variance, measurement_rate, MechanicalMode, ProbeState};
use crate::units::white_sample_variance;
use discretize::{Mat, Propagator, Source, Vector};

const THERMAL_STREAM: u64 = 1;
const IMPRECISION_STREAM: u64 = 2;
const INSTABILITY_FACTOR: f64 = 1e6;

/// Double-sided imprecision density `V_d·x_zpf² / (2·η·C·Γ_m) = x_zpf² / (4·η·μ)`.
///
/// This is the normalisation under which ideal viscous feedback reproduces
/// the closed-form cooling law exactly.
pub fn imprecision_psd(mode: &MechanicalMode, probe: &ProbeState) -> Result<f64, ModelError> {
    let c = cooperativity(probe, mode);
    if c <= 0.0 {
        return Err(ModelError::NoTransduction);
    }
    let x_zpf = mode.x_zpf();
    Ok(detected_variance(probe) * x_zpf * x_zpf / (2.0 * probe.eta_fb * c * mode.gamma_m))
}

/// Same density through the measurement rate; used as a cross-check.
pub fn imprecision_psd_from_rate(mode: &MechanicalMode, probe: &ProbeState) -> f64 {
    let x_zpf = mode.x_zpf();
    x_zpf * x_zpf / (4.0 * probe.eta_fb * measurement_rate(mode, probe))
}

/// Viscous feedback force for a velocity estimate.
pub fn ideal_viscous_force(velocity_estimate: f64, gain: f64, mode: &MechanicalMode) -> f64 {
    if gain == 0.0 {
        return 0.0;
    }
    -mode.mass_eff * mode.gamma_m * gain * velocity_estimate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackMode {
    Off,
    IdealViscous,
    RealisticChain,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackConfig {
    pub mode: FeedbackMode,
    /// Dimensionless `G` for ideal viscous feedback, electronic gain `K` (N/m) for the chain.
    pub gain: f64,
    /// Hz.
    pub bandpass_center: f64,
    /// Hz.
    pub bandpass_bandwidth: f64,
    /// Seconds; quantised to the sample grid.
    pub delay: f64,
    /// ±1.
    pub sign: f64,
}

impl FeedbackConfig {
    pub fn off(mode: &MechanicalMode) -> Self {
        Self {
            mode: FeedbackMode::Off,
            gain: 0.0,
            bandpass_center: mode.frequency_hz(),
            bandpass_bandwidth: 50.0 * mode.linewidth_hz(),
            delay: 0.0,
            sign: -1.0,
        }
    }

    pub fn ideal_viscous(gain: f64, mode: &MechanicalMode) -> Self {
        Self { mode: FeedbackMode::IdealViscous, gain, ..Self::off(mode) }
    }

    /// Chain tuned to the viscous phase at the mode frequency, using the
    /// actuation sign that needs the shorter delay (less phase slope across
    /// the line).
    pub fn realistic(gain: f64, mode: &MechanicalMode, sample_rate: f64) -> Self {
        [1.0, -1.0]
            .map(|sign| {
                let mut fb = Self { mode: FeedbackMode::RealisticChain, gain, sign, ..Self::off(mode) };
                fb.delay = viscous_delay(&fb, mode, sample_rate);
                fb
            })
            .into_iter()
            .min_by(|a, b| a.delay.total_cmp(&b.delay))
            .unwrap()
    }

    pub fn delay_samples(&self, sample_rate: f64) -> usize {
        (self.delay * sample_rate).round().max(0.0) as usize
    }
}

/// Delay that makes the chain's force proportional to `−ẋ` at `Ω_m`,
/// accounting for the bandpass phase and the half-sample lags of the
/// integrating detector and the zero-order hold. Returned in seconds, not
/// yet quantised.
pub fn viscous_delay(feedback: &FeedbackConfig, mode: &MechanicalMode, sample_rate: f64) -> f64 {
    let bp = Bandpass::new(feedback.bandpass_center, feedback.bandpass_bandwidth, sample_rate);
    let w = mode.omega_m;
    let required = if feedback.sign < 0.0 { 1.5 * PI } else { 0.5 * PI };
    let filter_lag = -bp.response(mode.frequency_hz(), sample_rate).arg();
    let sample_lags = w / sample_rate;
    (required - filter_lag - sample_lags).rem_euclid(2.0 * PI) / w
}

/// Viscous gain `G` the chain produces at `Ω_m` to first order (bandpass,
/// quantised delay, detector averaging and zero-order hold included).
pub fn nominal_viscous_gain(feedback: &FeedbackConfig, mode: &MechanicalMode, sample_rate: f64) -> f64 {
    let bp = Bandpass::new(feedback.bandpass_center, feedback.bandpass_bandwidth, sample_rate);
    let w = mode.omega_m;
    let dt = 1.0 / sample_rate;
    let tau = feedback.delay_samples(sample_rate) as f64 * dt + dt;
    let half = 0.5 * w * dt;
    let hold = (half.sin() / half).powi(2);
    let loop_tf = bp.response(mode.frequency_hz(), sample_rate)
        * num_complex::Complex64::from_polar(hold, -w * tau)
        * num_complex::Complex64::i()
        * feedback.sign
        * feedback.gain;
    loop_tf.re / (mode.mass_eff * mode.gamma_m * w)
}

/// Runs the realistic chain over a complete record and returns the force
/// applied after the last sample.
pub fn realistic_chain_force(y_history: &[f64], feedback: &FeedbackConfig, sample_rate: f64) -> f64 {
    let mut chain = Chain::new(feedback, sample_rate);
    y_history.iter().fold(0.0, |_, &y| chain.force(y))
}

#[derive(Debug, Clone)]
struct Chain {
    bandpass: Bandpass,
    delay: DelayLine,
    gain: f64,
}

impl Chain {
    fn new(feedback: &FeedbackConfig, sample_rate: f64) -> Self {
        Self {
            bandpass: Bandpass::new(feedback.bandpass_center, feedback.bandpass_bandwidth, sample_rate),
            delay: DelayLine::new(feedback.delay_samples(sample_rate)),
            gain: feedback.sign * feedback.gain,
        }
    }

    #[inline]
    fn force(&mut self, y: f64) -> f64 {
        let u = self.delay.push(self.bandpass.process(y));
        if self.gain == 0.0 {
            0.0
        } else {
            self.gain * u
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Exact Gaussian update over each sample period.
    Exact,
    /// Semi-implicit Euler–Maruyama with `substeps` per sample.
    SmallStep { substeps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub mode: MechanicalMode,
    pub probe: ProbeState,
    pub feedback: FeedbackConfig,
    /// Hz.
    pub sample_rate: f64,
    /// Recorded duration after burn-in (s).
    pub duration: f64,
    pub seed: u64,
    /// Discarded transient (s).
    pub burn_in: f64,
    pub integrator: Integrator,
    /// When false the record is `y = x` exactly.
    pub measurement_noise: bool,
}

/// A named violation of a configuration invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub reason: String,
}

impl SimConfig {
    pub fn new(mode: MechanicalMode, probe: ProbeState, feedback: FeedbackConfig, sample_rate: f64, duration: f64, seed: u64) -> Self {
        Self {
            mode,
            probe,
            feedback,
            sample_rate,
            duration,
            seed,
            burn_in: 10.0 / mode.gamma_m,
            integrator: Integrator::Exact,
            measurement_noise: true,
        }
    }

    /// Every invariant violation, without stopping at the first.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |field: &'static str, reason: String| out.push(Violation { field, reason });
        if let Err(ModelError::InvalidParameter { field, reason }) = self.mode.validate() {
            push(field, reason);
        }
        if let Err(ModelError::InvalidParameter { field, reason }) = self.probe.validate() {
            push(field, reason);
        }
        let f_m = self.mode.frequency_hz();
        if !(self.sample_rate >= 10.0 * f_m) {
            push("sample_rate", format!("{} Hz is below 10 x f_m = {} Hz", self.sample_rate, 10.0 * f_m));
        }
        let min_duration = 20.0 / self.mode.gamma_m;
        if !(self.duration >= min_duration) {
            push("duration", format!("{} s is shorter than 20 relaxation times ({min_duration:.3e} s)", self.duration));
        }
        if !(self.burn_in >= 0.0) {
            push("burn_in", "must be >= 0".into());
        }
        let fb = &self.feedback;
        if fb.mode != FeedbackMode::Off {
            if !(fb.delay >= 0.0) {
                push("feedback.delay", "must be >= 0".into());
            }
            if !(fb.bandpass_center > 0.0 && fb.bandpass_center < 0.5 * self.sample_rate) {
                push("feedback.bandpass_center", "must lie in (0, Nyquist)".into());
            }
            if !(fb.bandpass_bandwidth > 0.0 && fb.bandpass_bandwidth < fb.bandpass_center) {
                push("feedback.bandpass_bandwidth", "must be positive and below the center frequency".into());
            }
            if fb.sign != 1.0 && fb.sign != -1.0 {
                push("feedback.sign", "must be +1 or -1".into());
            }
            if !(fb.gain.is_finite() && fb.gain >= 0.0) {
                push("feedback.gain", "must be finite and >= 0".into());
            }
        }
        if let Integrator::SmallStep { substeps: 0 } = self.integrator {
            push("integrator.substeps", "must be >= 1".into());
        }
        if self.measurement_noise && cooperativity(&self.probe, &self.mode) <= 0.0 {
            push("probe.g0", "no transduction: cooperativity is zero".into());
        }
        out
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some(v) => Err(SimError::InvalidConfig { field: v.field, reason: v.reason }),
        }
    }
}

/// Uniformly sampled simulation output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    /// Velocity. For ideal viscous feedback this is the smooth state
    /// `ẋ + Γ_m·G·n`, equal to `ẋ` when measurement noise is off.
    pub v: Vec<f64>,
    pub y: Vec<f64>,
    pub f_fb: Vec<f64>,
    pub config: SimConfig,
    /// Delay actually applied, in samples.
    pub delay_samples: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Equipartition temperature of `x` and its standard error from
    /// `batches` contiguous batches.
    pub fn batched_temperature(&self, batches: usize) -> (f64, f64) {
        let (mean, err) = batch_mean_square(&self.x, batches);
        let mode = &self.config.mode;
        (mode.temperature_from_variance(mean), mode.temperature_from_variance(err))
    }

    /// Ratio of second-half to first-half mean-square displacement, with its
    /// standard error estimated from batching each half.
    pub fn stationarity(&self) -> (f64, f64) {
        let half = self.x.len() / 2;
        let (a, sa) = batch_mean_square(&self.x[..half], 10);
        let (b, sb) = batch_mean_square(&self.x[half..], 10);
        let ratio = b / a;
        (ratio, ratio * ((sa / a).powi(2) + (sb / b).powi(2)).sqrt())
    }

    /// CSV with `# key=value` metadata lines followed by `t,x,v,y,f_fb`.
    pub fn write_csv<W: Write>(&self, w: W) -> io::Result<()> {
        self.write_csv_head(w, usize::MAX)
    }

    /// As [`Trajectory::write_csv`] but with at most `max_rows` rows.
    pub fn write_csv_head<W: Write>(&self, mut w: W, max_rows: usize) -> io::Result<()> {
        let c = &self.config;
        writeln!(w, "# f_m_hz={:e}", c.mode.frequency_hz())?;
        writeln!(w, "# linewidth_hz={:e}", c.mode.linewidth_hz())?;
        writeln!(w, "# mass_kg={:e}", c.mode.mass_eff)?;
        writeln!(w, "# t_bath_k={:e}", c.mode.t_bath)?;
        writeln!(w, "# sample_rate_hz={:e}", c.sample_rate)?;
        writeln!(w, "# seed={}", c.seed)?;
        writeln!(w, "# feedback={:?}", c.feedback.mode)?;
        writeln!(w, "# gain={:e}", c.feedback.gain)?;
        writeln!(w, "# delay_samples={}", self.delay_samples)?;
        writeln!(w, "t,x,v,y,f_fb")?;
        for i in 0..self.len().min(max_rows) {
            writeln!(w, "{:e},{:e},{:e},{:e},{:e}", self.t[i], self.x[i], self.v[i], self.y[i], self.f_fb[i])?;
        }
        Ok(())
    }
}

/// Mean of `x²` with the standard error from contiguous batches.
pub fn batch_mean_square(x: &[f64], batches: usize) -> (f64, f64) {
    let batches = batches.max(2).min(x.len().max(2));
    let size = x.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().map(|v| v * v).sum::<f64>() / size as f64)
        .collect();
    let mean = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

struct Streams {
    thermal: ChaCha8Rng,
    imprecision: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let mut thermal = ChaCha8Rng::seed_from_u64(seed);
        thermal.set_stream(THERMAL_STREAM);
        let mut imprecision = ChaCha8Rng::seed_from_u64(seed);
        imprecision.set_stream(IMPRECISION_STREAM);
        Self { thermal, imprecision }
    }
}

#[inline]
fn normal4(rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(|_, _| rng.sample(StandardNormal))
}

/// Integrates the configured experiment.
pub fn run(config: &SimConfig) -> Result<Trajectory, SimError> {
    config.validate()?;
    let mode = config.mode;
    let fb = config.feedback;
    let (om, gm, m) = (mode.omega_m, mode.gamma_m, mode.mass_eff);
    let fs = config.sample_rate;
    let dt = 1.0 / fs;
    let ideal = fb.mode == FeedbackMode::IdealViscous;
    let g = if ideal { fb.gain } else { 0.0 };

    let s_imp = if config.measurement_noise { imprecision_psd(&mode, &config.probe)? } else { 0.0 };
    let sigma_n = white_sample_variance(s_imp, fs).sqrt();
    let s_force = mode.thermal_force_psd();

    let n_burn = (config.burn_in * fs).round() as usize;
    let n_keep = (config.duration * fs).round() as usize;
    let delay_samples = if fb.mode == FeedbackMode::RealisticChain { fb.delay_samples(fs) } else { 0 };

    let thermal_scale = mode.thermal_variance().sqrt();
    let threshold = INSTABILITY_FACTOR * if thermal_scale > 0.0 { thermal_scale } else { mode.x_zpf() };

    let mut rng = Streams::new(config.seed);
    let mut chain = Chain::new(&fb, fs);
    let mut velocity = VelocityEstimator::new(fb.bandpass_center, fb.bandpass_bandwidth, fs);

    // (x, p = velocity/Ω) drawn from the open-loop thermal state
    let mut x = thermal_scale * rng.thermal.sample::<f64, _>(StandardNormal);
    let mut p = thermal_scale * rng.thermal.sample::<f64, _>(StandardNormal);
    let mut nbar = sigma_n * rng.imprecision.sample::<f64, _>(StandardNormal);
    // step average of x over the preceding sample period
    let mut xbar = x;

    #[rustfmt::skip]
    let drift = Mat::new(
        0.0, om, 0.0, 0.0,
        -om, -gm * (1.0 + g), 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 0.0,
    );
    let force_dir = Vector::new(0.0, 1.0 / (m * om), 0.0, 0.0);
    let thermal = Source { direction: force_dir, intensity: s_force };
    let imprecision = Source {
        direction: if ideal { Vector::new(-gm * g, gm * gm * g * (1.0 + g) / om, 1.0, 0.0) } else { Vector::zeros() },
        intensity: if ideal { s_imp } else { 0.0 },
    };
    let prop = match config.integrator {
        Integrator::Exact => Some(Propagator::new(drift, force_dir, dt, thermal, imprecision)),
        Integrator::SmallStep { .. } => None,
    };

    let mut traj = Trajectory {
        t: Vec::with_capacity(n_keep),
        x: Vec::with_capacity(n_keep),
        v: Vec::with_capacity(n_keep),
        y: Vec::with_capacity(n_keep),
        f_fb: Vec::with_capacity(n_keep),
        config: *config,
        delay_samples,
    };

    for k in 0..n_burn + n_keep {
        // integrate-and-dump detector: signal and noise averaged over the same period
        let y = if ideal {
            xbar + nbar
        } else {
            xbar + sigma_n * rng.imprecision.sample::<f64, _>(StandardNormal)
        };
        let (force, f_record) = match fb.mode {
            FeedbackMode::Off => (0.0, 0.0),
            FeedbackMode::IdealViscous => (0.0, ideal_viscous_force(velocity.process(y), g, &mode)),
            FeedbackMode::RealisticChain => {
                let f = chain.force(y);
                (f, f)
            }
        };
        if k >= n_burn {
            let i = k - n_burn;
            traj.t.push(i as f64 * dt);
            traj.x.push(x);
            traj.v.push(p * om);
            traj.y.push(y);
            traj.f_fb.push(f_record);
        }

        match (&prop, config.integrator) {
            (Some(prop), _) => {
                let z = Vector::new(x, p, 0.0, 0.0);
                let mut next = prop.transition * z + prop.force_input * force + prop.thermal_factor * normal4(&mut rng.thermal);
                if ideal && s_imp > 0.0 {
                    next += prop.imprecision_factor * normal4(&mut rng.imprecision);
                }
                x = next[0];
                p = next[1];
                nbar = next[2] / dt;
                xbar = next[3] / dt;
            }
            (None, Integrator::SmallStep { substeps }) => {
                let h = dt / substeps as f64;
                let kick = (s_force * h).sqrt() / m;
                let sigma_sub = (s_imp / h).sqrt();
                let mut v = p * om;
                let mut integrated = 0.0;
                let mut x_integrated = 0.0;
                for _ in 0..substeps {
                    let n = if ideal && s_imp > 0.0 { sigma_sub * rng.imprecision.sample::<f64, _>(StandardNormal) } else { 0.0 };
                    let xi: f64 = rng.thermal.sample(StandardNormal);
                    v += (-om * om * x - gm * (1.0 + g) * v + gm * gm * g * (1.0 + g) * n + force / m) * h + kick * xi;
                    let x_old = x;
                    x += (v - gm * g * n) * h;
                    integrated += n * h;
                    x_integrated += 0.5 * (x_old + x) * h;
                }
                p = v / om;
                xbar = x_integrated / dt;
                if ideal {
                    nbar = integrated / dt;
                }
            }
            (None, Integrator::Exact) => unreachable!(),
        }

        if !(x.abs() <= threshold) {
            return Err(SimError::LoopUnstable { time: (k as f64 - n_burn as f64) * dt, amplitude: x.abs() });
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests;
