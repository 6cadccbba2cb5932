mod common;

use common::*;
use sqcool_core::dsp::{welch_psd, SpectrumSource, Window};
use sqcool_core::model::{optimal_gain, predict_temperature, MechanicalMode, ProbeState};
use sqcool_core::simulate::*;
use sqcool_core::specfit::*;

fn simulate_and_fit(mode: &MechanicalMode, probe: ProbeState, g: f64, fs: f64, duration: f64, segment: usize, seed: u64) -> FitResult {
    let feedback = if g == 0.0 { FeedbackConfig::off(mode) } else { FeedbackConfig::ideal_viscous(g, mode) };
    let tr = run(&SimConfig::new(*mode, probe, feedback, fs, duration, seed)).unwrap();
    let spec = welch_psd(&tr.y, fs, segment, Window::Hann, 0.5, SpectrumSource::InLoopY).unwrap();
    let init = initial_guess(&spec, mode, 10.0).unwrap();
    let options = FitOptions { detector_rate: Some(fs), ..Default::default() };
    let r = fit_spectrum(&spec, mode, &init, &FitBounds::around(&init), &options).unwrap();
    assert!(r.converged, "G={g}");
    r
}

#[test]
fn simulated_runs_recover_gain_and_floor() {
    let mode = scaled_mode();
    let probe = coherent_probe(&mode, paper_cooling_parameter());
    for (i, g) in [1.0, 3.0, 10.0].into_iter().enumerate() {
        let truth = SquashModel::for_probe(&mode, &probe, g).unwrap();
        let r = simulate_and_fit(&mode, probe, g, SCALED_SAMPLE_RATE, 8.0, 1 << 16, 60 + i as u64);
        assert!((r.params.g / g - 1.0).abs() < 0.02, "G={g}: {}", r.params.g);
        assert!((r.params.s_imp / truth.s_imp - 1.0).abs() < 0.02, "G={g}: {}", r.params.s_imp / truth.s_imp);
        assert!((r.reduced_chi2() - 1.0).abs() < 0.2, "G={g}: {}", r.reduced_chi2());
    }
}

#[test]
fn narrow_line_pins_the_resonance_frequency() {
    // a high-Q mode resolves the line centre far better than the scaled one
    let mode = MechanicalMode::from_hz(1e5, 10.0, 10e-9, 295.0).unwrap();
    let probe = coherent_probe(&mode, paper_cooling_parameter());
    let fs = 1e6;
    for (i, g) in [1.0, 3.0, 10.0].into_iter().enumerate() {
        let r = simulate_and_fit(&mode, probe, g, fs, 8.0, 1 << 18, 70 + i as u64);
        assert!((r.params.omega_m / mode.omega_m - 1.0).abs() < 1e-4, "G={g}: {}", r.params.omega_m / mode.omega_m - 1.0);
    }
}

#[test]
fn fitted_temperatures_trace_the_cooling_curve() {
    let mode = scaled_mode();
    let probe = coherent_probe(&mode, paper_cooling_parameter());
    for (i, g) in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0].into_iter().enumerate() {
        let r = simulate_and_fit(&mode, probe, g, SCALED_SAMPLE_RATE, 2.0, 1 << 15, 80 + i as u64);
        let t = effective_temperature(&r, &mode).unwrap();
        let expected = predict_temperature(&mode, &probe, g).unwrap().t_fb;
        assert!((t / expected - 1.0).abs() < 0.05, "G={g}: {t} vs {expected}");
    }
}

#[test]
fn squeezing_lowers_the_fitted_minimum() {
    let mode = scaled_mode();
    let coherent = coherent_probe(&mode, paper_cooling_parameter());
    let squeezed = squeezed_probe(&coherent);
    let mut minima = Vec::new();
    for (probe, seed) in [(coherent, 90), (squeezed, 91)] {
        let g = optimal_gain(&mode, &probe).unwrap();
        let r = simulate_and_fit(&mode, probe, g, SCALED_SAMPLE_RATE, 4.0, 1 << 15, seed);
        minima.push(effective_temperature(&r, &mode).unwrap());
    }
    assert!((minima[0] / 149.0 - 1.0).abs() < 0.025, "{minima:?}");
    assert!((minima[1] / 128.1 - 1.0).abs() < 0.025, "{minima:?}");
}
