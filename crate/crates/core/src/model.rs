//! Closed-form cooling predictions.
//!
//! Everything here is a pure function of a [`MechanicalMode`] and a
//! [`ProbeState`]. The simulator and the spectral fitter are validated
//! against these expressions.
//!
//! Most of the feedback-cooling formulas depend on the probe and the mode
//! only through the dimensionless *cooling parameter*
//! `A = 8·η·n_th·C / V_d`, so that
//!
//! ```text
//! T_fb / T_0 = (1 + G²/A) / (1 + G),   G_opt = √(1 + A) − 1,
//! min T_fb / T_0 = 2 / (√(1 + A) + 1).
//! ```

use crate::error::ModelError;
use crate::units::{hz_to_angular, HBAR, K_B, VACUUM_VARIANCE};

fn check(cond: bool, field: &'static str, reason: &str) -> Result<(), ModelError> {
    if cond {
        Ok(())
    } else {
        Err(ModelError::InvalidParameter { field, reason: reason.to_string() })
    }
}

/// How the thermal phonon occupancy is computed from the bath temperature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Occupancy {
    /// `n_th = k_B·T / (ħ·Ω_m)`.
    #[default]
    HighTemperature,
    /// Exact Bose–Einstein occupancy `1 / (exp(ħΩ_m / k_B T) − 1)`.
    Bose,
}

/// A single mechanical mode. All rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MechanicalMode {
    pub omega_m: f64,
    /// Energy damping rate (angular FWHM of the displacement spectrum).
    pub gamma_m: f64,
    pub mass_eff: f64,
    pub t_bath: f64,
}

impl MechanicalMode {
    pub fn new(omega_m: f64, gamma_m: f64, mass_eff: f64, t_bath: f64) -> Result<Self, ModelError> {
        let mode = Self { omega_m, gamma_m, mass_eff, t_bath };
        mode.validate()?;
        Ok(mode)
    }

    /// Builds a mode from a resonance frequency and linewidth given in Hz.
    pub fn from_hz(f_m: f64, linewidth: f64, mass_eff: f64, t_bath: f64) -> Result<Self, ModelError> {
        Self::new(hz_to_angular(f_m), hz_to_angular(linewidth), mass_eff, t_bath)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.omega_m.is_finite() && self.omega_m > 0.0, "omega_m", "must be > 0")?;
        check(self.gamma_m.is_finite() && self.gamma_m > 0.0, "gamma_m", "must be > 0")?;
        check(self.mass_eff.is_finite() && self.mass_eff > 0.0, "mass_eff", "must be > 0")?;
        check(self.t_bath.is_finite() && self.t_bath >= 0.0, "t_bath", "must be >= 0")?;
        check(self.quality_factor() > 1.0, "gamma_m", "mode must be underdamped (Q > 1)")
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega_m / self.gamma_m
    }

    pub fn frequency_hz(&self) -> f64 {
        crate::units::angular_to_hz(self.omega_m)
    }

    pub fn linewidth_hz(&self) -> f64 {
        crate::units::angular_to_hz(self.gamma_m)
    }

    /// Zero-point fluctuation amplitude `√(ħ / 2mΩ_m)`.
    pub fn x_zpf(&self) -> f64 {
        (HBAR / (2.0 * self.mass_eff * self.omega_m)).sqrt()
    }

    pub fn thermal_occupancy(&self, occupancy: Occupancy) -> f64 {
        occupancy_at(self, self.t_bath, occupancy)
    }

    /// Equilibrium displacement variance `k_B·T / (m·Ω_m²)`.
    pub fn thermal_variance(&self) -> f64 {
        K_B * self.t_bath / (self.mass_eff * self.omega_m * self.omega_m)
    }

    /// Double-sided thermal force density `2·m·Γ_m·k_B·T` (N²·s).
    pub fn thermal_force_psd(&self) -> f64 {
        2.0 * self.mass_eff * self.gamma_m * K_B * self.t_bath
    }

    /// Equipartition temperature for a displacement variance.
    pub fn temperature_from_variance(&self, variance: f64) -> f64 {
        self.mass_eff * self.omega_m * self.omega_m * variance / K_B
    }

    /// The same mode with its bath temperature chosen so that the
    /// high-temperature occupancy equals `n_th`.
    pub fn with_occupancy(mut self, n_th: f64) -> Self {
        self.t_bath = n_th * HBAR * self.omega_m / K_B;
        self
    }
}

fn occupancy_at(mode: &MechanicalMode, temperature: f64, occupancy: Occupancy) -> f64 {
    let quantum = HBAR * mode.omega_m;
    match occupancy {
        Occupancy::HighTemperature => K_B * temperature / quantum,
        Occupancy::Bose => {
            if temperature == 0.0 {
                0.0
            } else {
                1.0 / (quantum / (K_B * temperature)).exp_m1()
            }
        }
    }
}

/// Which quadrature carries the squeezing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    PhaseSqueezed,
    AmplitudeSqueezed,
    Coherent,
}

/// Optical probe. Rates in rad/s, variances in shot-noise units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeState {
    pub n_c: f64,
    pub g0: f64,
    pub kappa: f64,
    pub v_sq: f64,
    pub eta_d: f64,
    pub eta_fb: f64,
    pub quadrature: Quadrature,
}

impl ProbeState {
    pub fn coherent(n_c: f64, g0: f64, kappa: f64, eta_fb: f64) -> Result<Self, ModelError> {
        let probe = Self {
            n_c,
            g0,
            kappa,
            v_sq: VACUUM_VARIANCE,
            eta_d: 1.0,
            eta_fb,
            quadrature: Quadrature::Coherent,
        };
        probe.validate()?;
        Ok(probe)
    }

    /// Phase-squeezed probe with `squeezing_db` dB of source squeezing and
    /// squeezed-mode transmission `eta_d`.
    pub fn squeezed(self, squeezing_db: f64, eta_d: f64) -> Result<Self, ModelError> {
        let probe = if squeezing_db == 0.0 {
            Self { v_sq: VACUUM_VARIANCE, eta_d, quadrature: Quadrature::Coherent, ..self }
        } else {
            Self {
                v_sq: crate::units::squeezed_variance(squeezing_db),
                eta_d,
                quadrature: Quadrature::PhaseSqueezed,
                ..self
            }
        };
        probe.validate()?;
        Ok(probe)
    }

    /// Replaces `g0` so that the cooperativity with `mode` equals `c`.
    pub fn with_cooperativity(mut self, c: f64, mode: &MechanicalMode) -> Self {
        self.g0 = (c * self.kappa * mode.gamma_m / (4.0 * self.n_c)).sqrt();
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.n_c.is_finite() && self.n_c >= 0.0, "n_c", "must be >= 0")?;
        check(self.g0.is_finite() && self.g0 >= 0.0, "g0", "must be >= 0")?;
        check(self.kappa.is_finite() && self.kappa > 0.0, "kappa", "must be > 0")?;
        check(self.v_sq.is_finite() && self.v_sq > 0.0, "v_sq", "must be > 0")?;
        check(self.eta_d > 0.0 && self.eta_d <= 1.0, "eta_d", "must lie in (0, 1]")?;
        check(self.eta_fb > 0.0 && self.eta_fb <= 1.0, "eta_fb", "must lie in (0, 1]")?;
        let vacuum = (self.v_sq - VACUUM_VARIANCE).abs() < 1e-12;
        match self.quadrature {
            Quadrature::Coherent => check(vacuum, "v_sq", "coherent probe requires v_sq = 1/2"),
            _ => check(!vacuum, "v_sq", "squeezed probe requires v_sq != 1/2"),
        }
    }
}

/// Intra-cavity variance of the anti-squeezed quadrature.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct CavityVariance(pub f64);

impl CavityVariance {
    pub fn from_db(db_above_vacuum: f64) -> Self {
        Self(crate::units::db_to_variance(db_above_vacuum))
    }

    /// Values below vacuum are accepted by [`effective_efficiency`] but are
    /// outside the anti-squeezed use case.
    pub fn is_anti_squeezed(&self) -> bool {
        self.0 >= VACUUM_VARIANCE
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoolingPrediction {
    pub gain: f64,
    pub t_fb: f64,
    pub n_fb: f64,
    pub t0: f64,
}

impl CoolingPrediction {
    pub fn ratio(&self) -> f64 {
        self.t_fb / self.t0
    }
}

pub fn detected_variance(probe: &ProbeState) -> f64 {
    probe.eta_d * probe.v_sq + (1.0 - probe.eta_d) * VACUUM_VARIANCE
}

pub fn cooperativity(probe: &ProbeState, mode: &MechanicalMode) -> f64 {
    4.0 * probe.g0 * probe.g0 * probe.n_c / (probe.kappa * mode.gamma_m)
}

/// Cooling parameter `A = 8·η·n_th·C / V_d`.
pub fn cooling_parameter(mode: &MechanicalMode, probe: &ProbeState, occupancy: Occupancy) -> Result<f64, ModelError> {
    let c = cooperativity(probe, mode);
    if c <= 0.0 {
        return Err(ModelError::NoTransduction);
    }
    Ok(8.0 * probe.eta_fb * mode.thermal_occupancy(occupancy) * c / detected_variance(probe))
}

/// `T_fb / T_0` as a function of gain and cooling parameter.
pub fn temperature_ratio(gain: f64, a: f64) -> f64 {
    (1.0 + gain * gain / a) / (1.0 + gain)
}

pub fn optimal_gain_for(a: f64) -> f64 {
    // √(1+A) − 1 without cancellation at small A
    a / ((1.0 + a).sqrt() + 1.0)
}

/// Minimum of [`temperature_ratio`] over gain.
pub fn minimum_ratio_for(a: f64) -> f64 {
    2.0 / ((1.0 + a).sqrt() + 1.0)
}

/// Inverts [`minimum_ratio_for`]: the cooling parameter that yields a given
/// minimum temperature ratio. `ratio` must lie in (0, 1].
pub fn cooling_parameter_from_minimum(ratio: f64) -> Result<f64, ModelError> {
    check(ratio > 0.0 && ratio <= 1.0, "ratio", "must lie in (0, 1]")?;
    let root = 2.0 / ratio - 1.0;
    Ok(root * root - 1.0)
}

/// Feedback efficiency `η` that gives `probe` (with everything else fixed)
/// the cooling parameter `a` on `mode`.
pub fn calibrate_efficiency(mode: &MechanicalMode, probe: &ProbeState, a: f64) -> Result<f64, ModelError> {
    let c = cooperativity(probe, mode);
    if c <= 0.0 {
        return Err(ModelError::NoTransduction);
    }
    let eta = a * detected_variance(probe) / (8.0 * mode.thermal_occupancy(Occupancy::HighTemperature) * c);
    check(eta > 0.0 && eta <= 1.0, "eta_fb", "calibrated efficiency outside (0, 1]")?;
    Ok(eta)
}

pub fn predict_temperature(mode: &MechanicalMode, probe: &ProbeState, gain: f64) -> Result<CoolingPrediction, ModelError> {
    predict_temperature_with(mode, probe, gain, Occupancy::HighTemperature)
}

pub fn predict_temperature_with(
    mode: &MechanicalMode,
    probe: &ProbeState,
    gain: f64,
    occupancy: Occupancy,
) -> Result<CoolingPrediction, ModelError> {
    check(gain.is_finite() && gain >= 0.0, "gain", "must be >= 0")?;
    let a = cooling_parameter(mode, probe, occupancy)?;
    let t0 = mode.t_bath;
    let t_fb = temperature_ratio(gain, a) * t0;
    Ok(CoolingPrediction { gain, t_fb, n_fb: K_B * t_fb / (HBAR * mode.omega_m), t0 })
}

pub fn optimal_gain(mode: &MechanicalMode, probe: &ProbeState) -> Result<f64, ModelError> {
    Ok(optimal_gain_for(cooling_parameter(mode, probe, Occupancy::HighTemperature)?))
}

/// Measurement rate `μ = C·Γ_m / 2V_d`.
pub fn measurement_rate(mode: &MechanicalMode, probe: &ProbeState) -> f64 {
    cooperativity(probe, mode) * mode.gamma_m / (2.0 * detected_variance(probe))
}

/// Same quantity through `2·N_c·g0² / (κ·V_d)`; kept as an independent route.
pub fn measurement_rate_from_coupling(probe: &ProbeState) -> f64 {
    2.0 * probe.n_c * probe.g0 * probe.g0 / (probe.kappa * detected_variance(probe))
}

/// Improvement of the measurement rate over a coherent probe, `1 / 2V_d`.
pub fn measurement_rate_gain(detected_variance: f64) -> f64 {
    1.0 / (2.0 * detected_variance)
}

/// `Γ_th = Γ_m · n_th`.
pub fn thermal_decoherence_rate(mode: &MechanicalMode) -> f64 {
    mode.gamma_m * mode.thermal_occupancy(Occupancy::HighTemperature)
}

/// Lowest occupancy reachable by feedback with coherent light at detection
/// efficiency `eta`: `1/(2√η) − 1/2`.
pub fn coherent_occupancy_floor(eta: f64) -> Result<f64, ModelError> {
    check(eta > 0.0 && eta <= 1.0, "eta_fb", "must lie in (0, 1]")?;
    Ok(0.5 / eta.sqrt() - 0.5)
}

/// `η_eff = (1 + (1 − η) / (2·η·V_c))⁻¹`.
pub fn effective_efficiency(eta: f64, v_c: CavityVariance) -> Result<f64, ModelError> {
    check(eta > 0.0 && eta <= 1.0, "eta_fb", "must lie in (0, 1]")?;
    check(v_c.0.is_finite() && v_c.0 > 0.0, "v_c", "must be > 0")?;
    // rearranged so that v_c = 1/2 returns eta bit-for-bit
    let two_v = 2.0 * v_c.0;
    Ok(eta * two_v / (1.0 + eta * (two_v - 1.0)))
}

/// `χ = 4·g0·√N_c / κ` for the pulsed back-action-evading scheme.
pub fn interaction_strength(probe: &ProbeState) -> f64 {
    4.0 * probe.g0 * probe.n_c.sqrt() / probe.kappa
}

/// Interaction strength needed to squeeze the mechanics by 10 dB in the
/// pulsed scheme, for the two inputs where the value is tabulated: 10 dB of
/// input squeezing (χ = 1) and a coherent input (χ = √10). Other inputs are
/// not covered and return `None`.
pub fn pulsed_squeezing_requirement(input_squeezing_db: f64) -> Option<f64> {
    if input_squeezing_db == 10.0 {
        Some(1.0)
    } else if input_squeezing_db == 0.0 {
        Some(10f64.sqrt())
    } else {
        None
    }
}

pub fn cooling_curve(mode: &MechanicalMode, probe: &ProbeState, gains: &[f64]) -> Result<Vec<CoolingPrediction>, ModelError> {
    gains.iter().map(|&g| predict_temperature(mode, probe, g)).collect()
}

/// One point of a squeezing sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingPoint {
    pub squeezing_db: f64,
    pub detected_variance: f64,
    pub optimal_gain: f64,
    pub t_min: f64,
}

/// Minimum achievable temperature versus source squeezing. Each entry of
/// `squeezing_db` is dB below vacuum; the probe's `eta_d` is applied as loss.
pub fn squeezing_sweep(
    mode: &MechanicalMode,
    base_probe: &ProbeState,
    squeezing_db: &[f64],
) -> Result<Vec<SqueezingPoint>, ModelError> {
    squeezing_db
        .iter()
        .map(|&db| {
            let probe = base_probe.squeezed(db, base_probe.eta_d)?;
            let a = cooling_parameter(mode, &probe, Occupancy::HighTemperature)?;
            Ok(SqueezingPoint {
                squeezing_db: db,
                detected_variance: detected_variance(&probe),
                optimal_gain: optimal_gain_for(a),
                t_min: minimum_ratio_for(a) * mode.t_bath,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{squeezed_variance, variance_to_db};
    use std::f64::consts::PI;

    fn paper_mode() -> MechanicalMode {
        MechanicalMode::from_hz(6.13e6, 13e3, 10e-9, 295.0).unwrap()
    }

    fn paper_probe() -> ProbeState {
        // g0/2π = 55.8 Hz reproduces C ≈ 5.2e-4 at N_c = 5.1e4, κ/2π = 94 MHz
        ProbeState::coherent(5.1e4, 2.0 * PI * 55.8, 2.0 * PI * 94e6, 1.0).unwrap()
    }

    #[test]
    fn detected_variance_examples() {
        let mut p = paper_probe();
        assert_eq!(detected_variance(&p), 0.5);

        p.v_sq = 0.0792;
        p.eta_d = 1e-300;
        assert!((detected_variance(&p) - 0.5).abs() < 1e-12);

        let v_sq = squeezed_variance(8.0);
        assert!((v_sq - 0.079_245).abs() < 1e-5);
        let sq = paper_probe().squeezed(8.0, 0.4211).unwrap();
        let vd = detected_variance(&sq);
        assert!((vd - 0.32283).abs() < 5e-5, "{vd}");
        assert!((variance_to_db(vd) + 1.9).abs() < 1e-3);
    }

    #[test]
    fn cooperativity_examples() {
        let mode = paper_mode();
        let mut p = paper_probe();
        let c = cooperativity(&p, &mode);
        assert!((c - 5.2e-4).abs() / 5.2e-4 < 5e-3, "{c}");
        p.n_c *= 2.0;
        assert!((cooperativity(&p, &mode) / c - 2.0).abs() < 1e-12);
        p.g0 = 0.0;
        assert_eq!(cooperativity(&p, &mode), 0.0);
    }

    #[test]
    fn back_solved_coupling_round_trips() {
        let mode = paper_mode();
        let p = paper_probe().with_cooperativity(5.2e-4, &mode);
        assert!((cooperativity(&p, &mode) - 5.2e-4).abs() / 5.2e-4 < 1e-10);
        assert!((p.g0 / (2.0 * PI) - 55.8).abs() < 0.05);
    }

    #[test]
    fn zero_gain_leaves_bath_temperature() {
        let pred = predict_temperature(&paper_mode(), &paper_probe(), 0.0).unwrap();
        assert_eq!(pred.t_fb, 295.0);
        assert_eq!(pred.t0, 295.0);
    }

    #[test]
    fn zero_coupling_has_no_transduction() {
        let mut p = paper_probe();
        p.g0 = 0.0;
        assert_eq!(predict_temperature(&paper_mode(), &p, 1.0), Err(ModelError::NoTransduction));
    }

    #[test]
    fn paper_calibrated_minima() {
        let a = cooling_parameter_from_minimum(149.0 / 295.0).unwrap();
        assert!((a - 7.76).abs() < 5e-3, "{a}");
        assert!((minimum_ratio_for(a) * 295.0 - 149.0).abs() < 1e-9);
        let a_sq = a * 10f64.powf(0.19);
        assert!((a_sq - 12.02).abs() < 0.01);
        let t_sq = minimum_ratio_for(a_sq) * 295.0;
        assert!((t_sq - 128.1).abs() < 0.15, "{t_sq}");
    }

    #[test]
    fn optimal_gain_examples() {
        assert_eq!(optimal_gain_for(0.0), 0.0);
        let mode = paper_mode().with_occupancy(1e4);
        let probe = paper_probe().with_cooperativity(1e3, &mode);
        let g = optimal_gain(&mode, &probe).unwrap();
        assert!((g - ((1.6e8f64 + 1.0).sqrt() - 1.0)).abs() / g < 1e-9);
        assert!((g - 1.2648e4).abs() < 1.0);
        let t = |g: f64| predict_temperature(&mode, &probe, g).unwrap().t_fb;
        assert!(t(g * 0.9) > t(g));
        assert!(t(g * 1.1) > t(g));
    }

    #[test]
    fn measurement_rate_examples() {
        let vd = squeezed_variance(1.9);
        assert!((measurement_rate_gain(vd) - 1.549).abs() < 1e-3);

        let mode = paper_mode();
        let p = paper_probe().with_cooperativity(5.2e-4, &mode);
        let mu = measurement_rate(&mode, &p);
        assert!((mu - 42.47).abs() < 0.05, "{mu}");

        let mut sq = p;
        sq.v_sq = 1.0;
        sq.quadrature = Quadrature::AmplitudeSqueezed;
        assert!((measurement_rate(&mode, &sq) / mu - 0.5).abs() < 1e-12);
    }

    #[test]
    fn thermal_decoherence_examples() {
        let mode = paper_mode();
        let n_th = mode.thermal_occupancy(Occupancy::HighTemperature);
        assert!((n_th - 1.0027e6).abs() / 1.0027e6 < 1e-3, "{n_th}");
        let mut cold = mode;
        cold.t_bath = 0.0;
        assert_eq!(thermal_decoherence_rate(&cold), 0.0);
        let p = paper_probe();
        assert!(thermal_decoherence_rate(&mode) / measurement_rate(&mode, &p) > 1e8);
    }

    #[test]
    fn bose_occupancy_is_close_at_high_temperature() {
        let mode = paper_mode();
        let hi = mode.thermal_occupancy(Occupancy::HighTemperature);
        let bose = mode.thermal_occupancy(Occupancy::Bose);
        assert!((hi - bose - 0.5).abs() < 1e-3);
    }

    #[test]
    fn occupancy_floor_examples() {
        assert_eq!(coherent_occupancy_floor(1.0).unwrap(), 0.0);
        assert_eq!(coherent_occupancy_floor(0.25).unwrap(), 0.5);
        assert!((coherent_occupancy_floor(0.23).unwrap() - 0.5426).abs() < 1e-4);
        assert!(coherent_occupancy_floor(0.0).is_err());
    }

    #[test]
    fn effective_efficiency_examples() {
        assert_eq!(effective_efficiency(1.0, CavityVariance(3.0)).unwrap(), 1.0);
        let v_c = CavityVariance::from_db(9.0);
        assert!((v_c.0 - 3.972).abs() < 1e-3);
        assert!((effective_efficiency(0.23, v_c).unwrap() - 0.7035).abs() < 1e-4);
        assert!((effective_efficiency(0.23, CavityVariance(0.5)).unwrap() - 0.23).abs() < 1e-15);
        assert!(!CavityVariance(0.3).is_anti_squeezed());
    }

    #[test]
    fn interaction_strength_examples() {
        let mut p = paper_probe();
        let chi = interaction_strength(&p);
        p.n_c *= 4.0;
        assert!((interaction_strength(&p) / chi - 2.0).abs() < 1e-12);
        p.n_c = 0.0;
        assert_eq!(interaction_strength(&p), 0.0);
        assert_eq!(pulsed_squeezing_requirement(10.0), Some(1.0));
        assert_eq!(pulsed_squeezing_requirement(0.0), Some(10f64.sqrt()));
        assert_eq!(pulsed_squeezing_requirement(5.0), None);
    }

    #[test]
    fn fig1d_sweep_is_monotone() {
        let mode = paper_mode().with_occupancy(1e4);
        let probe = ProbeState { eta_d: 0.1, ..paper_probe() }.with_cooperativity(1e3, &mode);
        let dbs: Vec<f64> = (0..=15).map(f64::from).collect();
        let sweep = squeezing_sweep(&mode, &probe, &dbs).unwrap();
        for w in sweep.windows(2) {
            assert!(w[1].t_min < w[0].t_min);
        }
        let coherent = ProbeState::coherent(probe.n_c, probe.g0, probe.kappa, 1.0).unwrap();
        let a0 = cooling_parameter(&mode, &coherent, Occupancy::HighTemperature).unwrap();
        assert!((sweep[0].t_min - minimum_ratio_for(a0) * mode.t_bath).abs() < 1e-9);
    }

    #[test]
    fn probe_validation() {
        let mut p = paper_probe();
        p.eta_d = 1.2;
        assert!(p.validate().is_err());
        let mut p = paper_probe();
        p.v_sq = 0.3;
        assert!(p.validate().is_err());
        assert!(MechanicalMode::new(1.0, 2.0, 1.0, 1.0).is_err());
    }
}
