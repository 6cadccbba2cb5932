mod common;

use common::*;
use sqcool_core::dsp::*;
use sqcool_core::model::predict_temperature;
use sqcool_core::simulate::*;

fn thermal_run(seed: u64) -> Trajectory {
    let mode = scaled_mode();
    let probe = coherent_probe(&mode, paper_cooling_parameter());
    run(&scaled_config(FeedbackConfig::off(&mode), probe, 2.0, seed)).unwrap()
}

fn thermal_track(seed: u64) -> PhaseSpaceTrack {
    let mode = scaled_mode();
    let tr = thermal_run(seed);
    let track = lockin_demodulate(&tr.x, SCALED_SAMPLE_RATE, mode.frequency_hz(), default_lockin_bandwidth(&mode)).unwrap();
    track.after(track.settling_time())
}

#[test]
fn free_mode_is_at_room_temperature() {
    let mode = scaled_mode();
    let tr = thermal_run(31);
    let spec = welch_psd(&tr.x, SCALED_SAMPLE_RATE, 1 << 16, Window::Hann, 0.5, SpectrumSource::TrueX).unwrap();
    let t = equipartition_temperature(&spec, &mode, (20e3, 400e3), EquipartitionOptions::default()).unwrap();
    let (_, err) = tr.batched_temperature(20);
    assert!((t - 295.0).abs() < 3.0 * err + 0.01 * 295.0, "{t} ± {err}");
}

#[test]
fn cooled_mode_follows_the_cooling_law() {
    let mode = scaled_mode();
    let probe = coherent_probe(&mode, paper_cooling_parameter());
    let g = 3.0;
    let tr = run(&scaled_config(FeedbackConfig::ideal_viscous(g, &mode), probe, 2.0, 37)).unwrap();
    let spec = welch_psd(&tr.x, SCALED_SAMPLE_RATE, 1 << 16, Window::Hann, 0.5, SpectrumSource::TrueX).unwrap();
    let options = EquipartitionOptions { linewidth: Some(mode.linewidth_hz() * (1.0 + g)), ..Default::default() };
    let t = equipartition_temperature(&spec, &mode, (0.0, 0.5 * SCALED_SAMPLE_RATE), options).unwrap();
    let expected = predict_temperature(&mode, &probe, g).unwrap().t_fb;
    assert!((t / expected - 1.0).abs() < 0.05, "{t} vs {expected}");
}

#[test]
fn equipartition_does_not_depend_on_resolution() {
    let mode = scaled_mode();
    let tr = thermal_run(41);
    let band = (20e3, 400e3);
    let temps: Vec<f64> = [1usize << 15, 1 << 16]
        .iter()
        .map(|&n| {
            let spec = welch_psd(&tr.x, SCALED_SAMPLE_RATE, n, Window::Hann, 0.5, SpectrumSource::TrueX).unwrap();
            equipartition_temperature(&spec, &mode, band, EquipartitionOptions::default()).unwrap()
        })
        .collect();
    assert!((temps[1] / temps[0] - 1.0).abs() < 0.01, "{temps:?}");
}

#[test]
fn in_loop_record_is_refused_for_equipartition() {
    let mode = scaled_mode();
    let tr = thermal_run(43);
    let spec = welch_psd(&tr.y, SCALED_SAMPLE_RATE, 1 << 14, Window::Hann, 0.5, SpectrumSource::InLoopY).unwrap();
    let band = (20e3, 400e3);
    assert_eq!(equipartition_temperature(&spec, &mode, band, EquipartitionOptions::default()), Err(sqcool_core::DspError::InLoopSpectrum));
    let forced = EquipartitionOptions { allow_in_loop: true, ..Default::default() };
    assert!(equipartition_temperature(&spec, &mode, band, forced).is_ok());
}

#[test]
fn thermal_quadratures_are_symmetric() {
    let mode = scaled_mode();
    let track = thermal_track(47);
    let (vx, vy) = (track.variance(Axis::InPhase), track.variance(Axis::Quadrature));
    assert!((vx / vy - 1.0).abs() < 0.05, "{}", vx / vy);
    // the lock-in passband holds most of the envelope power; its effective
    // sample count bounds the statistical spread
    let envelope = (vx + vy) / (2.0 * mode.thermal_variance());
    assert!((0.9..=1.02).contains(&envelope), "{envelope}");
}

#[test]
fn thermal_marginals_are_gaussian() {
    let track = thermal_track(53);
    for axis in [Axis::InPhase, Axis::Quadrature] {
        let h = marginal_histogram(&track, axis, 40).unwrap();
        assert!(h.chi2_per_bin < 3.0, "{axis:?}: {}", h.chi2_per_bin);
        let total: f64 = h.density.iter().sum::<f64>() * h.bin_width;
        assert!((total - 1.0).abs() < 1e-6);
    }
}
