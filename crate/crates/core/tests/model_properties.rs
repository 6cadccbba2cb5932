use std::f64::consts::PI;

use proptest::prelude::*;
use sqcool_core::model::*;

fn mode_strategy() -> impl Strategy<Value = MechanicalMode> {
    (1e4..1e7f64, 2.0..1e4f64, 1e-12..1e-6f64, 1.0..400.0f64)
        .prop_map(|(f, q, m, t)| MechanicalMode::from_hz(f, f / q, m, t).unwrap())
}

fn probe_strategy() -> impl Strategy<Value = ProbeState> {
    (1e2..1e6f64, 1.0..1e3f64, 1e6..1e9f64, 0.01..1.0f64)
        .prop_map(|(n, g0, kappa, eta)| ProbeState::coherent(n, 2.0 * PI * g0, 2.0 * PI * kappa, eta).unwrap())
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

proptest! {
    #[test]
    fn minimum_ratio_closed_form(log_a in -3.0..9.0f64) {
        let a = 10f64.powf(log_a);
        let g = optimal_gain_for(a);
        prop_assert!(rel(temperature_ratio(g, a), 2.0 / ((1.0 + a).sqrt() + 1.0)) < 1e-12);
        prop_assert!(rel(minimum_ratio_for(a), temperature_ratio(g, a)) < 1e-12);
    }

    #[test]
    fn optimal_gain_is_grid_argmin(mode in mode_strategy(), probe in probe_strategy()) {
        let g_opt = optimal_gain(&mode, &probe).unwrap();
        let step = g_opt.max(1e-6) / 500.0;
        let grid: Vec<f64> = (0..=1500).map(|k| k as f64 * step).collect();
        let curve = cooling_curve(&mode, &probe, &grid).unwrap();
        let best = curve.iter().min_by(|a, b| a.t_fb.total_cmp(&b.t_fb)).unwrap();
        prop_assert!((best.gain - g_opt).abs() <= step);
    }

    #[test]
    fn measurement_rate_routes_agree(mode in mode_strategy(), probe in probe_strategy(), db in 0.0..12.0f64, eta_d in 0.05..1.0f64) {
        let probe = probe.squeezed(db, eta_d).unwrap();
        prop_assert!(rel(measurement_rate(&mode, &probe), measurement_rate_from_coupling(&probe)) < 1e-12);
    }

    #[test]
    fn detected_variance_is_affine(probe in probe_strategy(), v1 in 0.01..5.0f64, v2 in 0.01..5.0f64, eta_d in 0.01..1.0f64) {
        let with = |v: f64| detected_variance(&ProbeState { v_sq: v, eta_d, ..probe });
        let mid = with(0.5 * (v1 + v2));
        prop_assert!((mid - 0.5 * (with(v1) + with(v2))).abs() < 1e-12);
        prop_assert!((with(0.5) - 0.5).abs() < 1e-15);
        let vd = with(v1);
        prop_assert!(vd >= v1.min(0.5) - 1e-15 && vd <= v1.max(0.5) + 1e-15);
    }

    #[test]
    fn more_squeezing_cools_more(mode in mode_strategy(), probe in probe_strategy(), eta_d in 0.05..1.0f64, g in 0.01..100.0f64, db in 0.1..12.0f64) {
        let less = probe.squeezed(db, eta_d).unwrap();
        let more = probe.squeezed(db + 0.5, eta_d).unwrap();
        let t_less = predict_temperature(&mode, &less, g).unwrap().t_fb;
        let t_more = predict_temperature(&mode, &more, g).unwrap().t_fb;
        let t_coh = predict_temperature(&mode, &probe, g).unwrap().t_fb;
        prop_assert!(t_more < t_less && t_less < t_coh);
    }

    #[test]
    fn effective_efficiency_limits(eta in 0.01..1.0f64) {
        prop_assert_eq!(effective_efficiency(eta, CavityVariance(0.5)).unwrap(), eta);
        prop_assert!(effective_efficiency(eta, CavityVariance(1e12)).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn cooling_regime(mode in mode_strategy(), probe in probe_strategy(), frac in 0.0..1.0f64) {
        let g_opt = optimal_gain(&mode, &probe).unwrap();
        let p = predict_temperature(&mode, &probe, 2.0 * g_opt * frac).unwrap();
        prop_assert!(p.t_fb <= p.t0 * (1.0 + 1e-12));
        prop_assert_eq!(predict_temperature(&mode, &probe, 0.0).unwrap().t_fb, mode.t_bath);
    }

    #[test]
    fn cooperativity_round_trip(mode in mode_strategy(), probe in probe_strategy(), log_c in -9.0..2.0f64) {
        let c = 10f64.powf(log_c);
        let p = probe.with_cooperativity(c, &mode);
        prop_assert!(rel(cooperativity(&p, &mode), c) < 1e-10);
    }
}
