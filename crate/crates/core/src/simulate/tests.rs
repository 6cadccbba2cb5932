use super::*;
use crate::model::ProbeState;
use std::f64::consts::PI;

fn scaled_mode() -> MechanicalMode {
    MechanicalMode::from_hz(1e5, 1e3, 10e-9, 295.0).unwrap()
}

fn probe(mode: &MechanicalMode) -> ProbeState {
    ProbeState::coherent(1e4, 0.0, 2.0 * PI * 1e8, 0.01).unwrap().with_cooperativity(1e-6, mode)
}

fn config(feedback: FeedbackConfig, seed: u64) -> SimConfig {
    let mode = scaled_mode();
    SimConfig::new(mode, probe(&mode), feedback, 2e6, 0.005, seed)
}

#[test]
fn imprecision_identities() {
    let mode = scaled_mode();
    let p = probe(&mode);
    let s = imprecision_psd(&mode, &p).unwrap();
    let x_zpf = mode.x_zpf();
    let mu = measurement_rate(&mode, &p);
    assert!((4.0 * s * p.eta_fb * mu / (x_zpf * x_zpf) - 1.0).abs() < 1e-12);
    assert!((imprecision_psd_from_rate(&mode, &p) / s - 1.0).abs() < 1e-12);

    let mut half = p.squeezed(3.0, 1.0).unwrap();
    half.v_sq = 0.25;
    assert!((imprecision_psd(&mode, &half).unwrap() / s - 0.5).abs() < 1e-12);

    let mut dark = p;
    dark.g0 = 0.0;
    assert_eq!(imprecision_psd(&mode, &dark), Err(ModelError::NoTransduction));
}

#[test]
fn paper_zero_point_scale() {
    let mode = MechanicalMode::from_hz(6.13e6, 13e3, 10e-9, 295.0).unwrap();
    assert!((mode.x_zpf() - 1.17e-17).abs() < 0.005e-17, "{}", mode.x_zpf());
}

#[test]
fn zero_gain_gives_zero_force() {
    let mode = scaled_mode();
    assert_eq!(ideal_viscous_force(3.0, 0.0, &mode), 0.0);
    assert!(ideal_viscous_force(1.0, 2.0, &mode) < 0.0);
}

#[test]
fn equal_seed_is_bit_identical() {
    let mode = scaled_mode();
    for fb in [FeedbackConfig::ideal_viscous(3.0, &mode), FeedbackConfig::realistic(0.01, &mode, 2e6)] {
        let a = run(&config(fb, 7)).unwrap();
        let b = run(&config(fb, 7)).unwrap();
        assert_eq!(a, b);
        let c = run(&config(fb, 8)).unwrap();
        assert_ne!(a.x, c.x);
    }
}

#[test]
fn zero_electronic_gain_matches_feedback_off() {
    let mode = scaled_mode();
    let off = run(&config(FeedbackConfig::off(&mode), 11)).unwrap();
    let chain = run(&config(FeedbackConfig::realistic(0.0, &mode, 2e6), 11)).unwrap();
    assert_eq!(off.x, chain.x);
    assert_eq!(off.v, chain.v);
    assert_eq!(off.y, chain.y);
    assert_eq!(off.f_fb, chain.f_fb);
}

#[test]
fn streaming_chain_matches_history_replay() {
    let mode = scaled_mode();
    let fb = FeedbackConfig::realistic(0.02, &mode, 2e6);
    let traj = run(&SimConfig { burn_in: 0.0, ..config(fb, 3) }).unwrap();
    let k = 1234;
    let replay = realistic_chain_force(&traj.y[..=k], &fb, 2e6);
    assert_eq!(replay, traj.f_fb[k]);
}

#[test]
fn anti_damping_is_reported_unstable() {
    let mode = scaled_mode();
    let mut fb = FeedbackConfig::realistic(0.0, &mode, 2e6);
    fb.sign = -fb.sign;
    // nominal G ≈ -50: exponential growth at ~50 Γ_m
    fb.gain = 50.0 * mode.mass_eff * mode.gamma_m * mode.omega_m;
    let cfg = SimConfig { duration: 0.05, ..config(fb, 1) };
    match run(&cfg) {
        Err(SimError::LoopUnstable { .. }) => {}
        other => panic!("expected instability, got {other:?}"),
    }
}

#[test]
fn violations_are_named() {
    let mode = scaled_mode();
    let mut cfg = config(FeedbackConfig::ideal_viscous(1.0, &mode), 1);
    cfg.sample_rate = 5e5;
    cfg.feedback.bandpass_bandwidth = 2e5;
    cfg.probe.eta_fb = -0.1;
    let fields: Vec<_> = cfg.violations().iter().map(|v| v.field).collect();
    assert!(fields.contains(&"sample_rate"));
    assert!(fields.contains(&"feedback.bandpass_bandwidth"));
    assert!(fields.contains(&"eta_fb"));
    assert!(matches!(run(&cfg), Err(SimError::InvalidConfig { .. })));
}

#[test]
fn viscous_delay_sets_nominal_gain() {
    let mode = scaled_mode();
    let fs = 2e6;
    let fb = FeedbackConfig::realistic(1.0, &mode, fs);
    // quarter period minus the detector and hold lags, in samples
    assert_eq!(fb.sign, 1.0);
    assert!((fb.delay * fs - 4.0).abs() < 1e-6, "{}", fb.delay * fs);
    let g = nominal_viscous_gain(&fb, &mode, fs);
    let ideal = 1.0 / (mode.mass_eff * mode.gamma_m * mode.omega_m);
    assert!(g > 0.98 * ideal && g <= ideal, "{g} vs {ideal}");
    let mut opposite = fb;
    opposite.delay += 0.5 / mode.frequency_hz();
    assert!(nominal_viscous_gain(&opposite, &mode, fs) < -0.98 * ideal);
}

#[test]
fn csv_has_header_and_rows() {
    let mode = scaled_mode();
    let traj = run(&config(FeedbackConfig::off(&mode), 2)).unwrap();
    let mut buf = Vec::new();
    traj.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.lines().any(|l| l == "t,x,v,y,f_fb"));
    assert!(text.contains("# seed=2"));
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), traj.len() + 1);
}
