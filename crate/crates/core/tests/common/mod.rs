#![allow(dead_code)]

use std::f64::consts::PI;

use sqcool_core::model::{calibrate_efficiency, cooling_parameter_from_minimum, MechanicalMode, ProbeState};
use sqcool_core::simulate::{FeedbackConfig, SimConfig};

pub const SCALED_SAMPLE_RATE: f64 = 2e6;

/// Ω_m/2π = 100 kHz, Γ_m/2π = 1 kHz, 10 µg, 295 K.
pub fn scaled_mode() -> MechanicalMode {
    MechanicalMode::from_hz(1e5, 1e3, 10e-9, 295.0).unwrap()
}

/// Cooling parameter calibrated from the coherent-light minimum 149 K at 295 K.
pub fn paper_cooling_parameter() -> f64 {
    cooling_parameter_from_minimum(149.0 / 295.0).unwrap()
}

/// Coherent probe whose feedback efficiency is calibrated to `a` on `mode`.
pub fn coherent_probe(mode: &MechanicalMode, a: f64) -> ProbeState {
    let base = ProbeState::coherent(1e4, 0.0, 2.0 * PI * 1e8, 1.0).unwrap().with_cooperativity(1e-6, mode);
    let eta = calibrate_efficiency(mode, &base, a).unwrap();
    ProbeState { eta_fb: eta, ..base }
}

/// Same probe with 8 dB source squeezing detected at 1.9 dB below vacuum.
pub fn squeezed_probe(coherent: &ProbeState) -> ProbeState {
    let v_sq = sqcool_core::units::squeezed_variance(8.0);
    let v_d = sqcool_core::units::squeezed_variance(1.9);
    let eta_d = (0.5 - v_d) / (0.5 - v_sq);
    coherent.squeezed(8.0, eta_d).unwrap()
}

pub fn scaled_config(feedback: FeedbackConfig, probe: ProbeState, duration: f64, seed: u64) -> SimConfig {
    SimConfig::new(scaled_mode(), probe, feedback, SCALED_SAMPLE_RATE, duration, seed)
}
