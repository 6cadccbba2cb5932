mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqcool_core::dsp::SpectrumSource;
use sqcool_core::model::{temperature_ratio, MechanicalMode};
use sqcool_core::specfit::*;

/// Model on `mode` at gain `g` whose floor corresponds to cooling parameter `a`.
fn model_with(mode: &MechanicalMode, g: f64, a: f64) -> SquashModel {
    let mut m = SquashModel::for_mode(mode, g, 1.0);
    m.s_imp = m.s_force / ((mode.gamma_m * mode.omega_m).powi(2) * a);
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn integrated_true_spectrum_is_the_cooling_law(g in 0.0..100.0f64, log_a in -2.0..6.0f64, q in 5.0..1e4f64) {
        let a = 10f64.powf(log_a);
        let mode = MechanicalMode::from_hz(1e5, 1e5 / q, 1e-8, 295.0).unwrap();
        let m = model_with(&mode, g, a);
        let t = mode.mass_eff * m.omega_m.powi(2) * m.displacement_variance_numeric(1e-9) / sqcool_core::units::K_B;
        prop_assert!((t / (295.0 * temperature_ratio(g, a)) - 1.0).abs() < 5e-3);
    }

    #[test]
    fn resonance_dips_below_floor_iff_gain_exceeds_threshold(g in 0.0..50.0f64, log_a in -2.0..4.0f64) {
        let m = model_with(&scaled_mode(), g, 10f64.powf(log_a));
        let threshold = m.resonance_dip_threshold();
        prop_assume!((g - threshold).abs() > 1e-9 * (1.0 + threshold));
        prop_assert_eq!(m.in_loop(m.omega_m) < m.s_imp, g > threshold);
    }
}

#[test]
fn squashing_threshold_on_a_grid() {
    let mode = scaled_mode();
    for a in [0.1, 1.0, 7.76, 100.0] {
        for k in 0..=60 {
            let g = 0.5 * k as f64;
            let m = model_with(&mode, g, a);
            let threshold = m.resonance_dip_threshold();
            assert!((threshold - ((1.0 + a).sqrt() - 1.0)).abs() < 1e-9 * (1.0 + threshold));
            if (g - threshold).abs() > 1e-9 {
                assert_eq!(m.in_loop(m.omega_m) < m.s_imp, g > threshold, "A={a} G={g}");
            }
            // away from resonance every positive gain eventually squashes
            if g > 0.0 {
                assert!(m.in_loop(m.omega_m * 20.0) < m.s_imp);
            }
        }
    }
}

#[test]
fn reported_errors_are_fisher_consistent() {
    let mode = scaled_mode();
    let a = paper_cooling_parameter();
    let freq: Vec<f64> = (0..).map(|i| 8.5e4 + i as f64 * 20.0).take_while(|f| *f <= 1.15e5).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let reps = 200;
    let mut covered = [0usize; 3];
    for _ in 0..reps {
        let truth = model_with(&mode, rng.random_range(0.5..30.0), a);
        let spec = synthetic_spectrum(&truth, SpectrumSource::InLoopY, &freq, 400, &mut rng);
        let init = initial_guess(&spec, &mode, 10.0).unwrap();
        let r = fit_spectrum(&spec, &mode, &init, &FitBounds::around(&init), &FitOptions::default()).unwrap_or_else(|e| panic!("{e:?} init {init:?}"));
        assert!(r.converged);
        let checks = [
            (r.params.omega_m, r.param_errors.omega_m, truth.omega_m),
            (r.params.g, r.param_errors.g, truth.g),
            (r.params.s_imp, r.param_errors.s_imp, truth.s_imp),
        ];
        for (c, (est, err, tru)) in covered.iter_mut().zip(checks) {
            if (est - tru).abs() <= err {
                *c += 1;
            }
        }
    }
    // binomial 3σ band around 68.3% for 200 trials
    for (name, c) in ["omega_m", "g", "s_imp"].iter().zip(covered) {
        let frac = c as f64 / reps as f64;
        assert!((0.585..=0.78).contains(&frac), "{name}: coverage {frac}");
    }
}
