//! Executes a scenario and writes its artifacts.
//!
//! Independent simulations run on the rayon pool; results are collected in
//! input order and written by a single writer, so artifacts do not depend on
//! the thread count. Per-run seeds are drawn from distinct ChaCha streams of
//! the scenario seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use sqcool_core::dsp::{
    default_lockin_bandwidth, equipartition_temperature, lockin_demodulate, marginal_histogram, shot_noise_scale,
    welch_psd, write_spectrum_csv, write_track_csv, Axis, EquipartitionOptions, Spectrum, SpectrumSource, Window,
};
use sqcool_core::model::{
    cooling_curve, cooling_parameter, cooperativity, detected_variance, measurement_rate, optimal_gain,
    predict_temperature, squeezing_sweep, MechanicalMode, Occupancy,
};
use sqcool_core::simulate::{imprecision_psd, nominal_viscous_gain, run, FeedbackConfig, FeedbackMode, SimConfig, Trajectory};
use sqcool_core::specfit::{effective_temperature, fit_spectrum, initial_guess, FitBounds, FitOptions, FitResult};

use crate::error::CliError;
use crate::scenario::{self, NamedProbe, Output, Resolved, Scenario, WindowKind};
use crate::table::{Estimate, SweepAxis, SweepRow, SweepTable};

/// What to run and where to put it.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Restricts the run to these artifacts (plus their prerequisites).
    pub only: Option<BTreeSet<Output>>,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    /// File name to SHA-256, in name order.
    pub artifacts: BTreeMap<String, String>,
    pub summary: BTreeMap<String, String>,
    pub sweep: Option<SweepTable>,
}

struct Artifacts {
    dir: PathBuf,
    written: BTreeMap<String, String>,
}

impl Artifacts {
    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.written.insert(name.to_string(), hex(&Sha256::digest(bytes)));
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Seed of the `index`-th independent run of probe `probe`.
pub fn run_seed(base: u64, probe: usize, index: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(((probe as u64) << 32) | index as u64);
    rng.next_u64()
}

/// Closes `only` under the prerequisite relation.
fn with_prerequisites(mut set: BTreeSet<Output>) -> BTreeSet<Output> {
    loop {
        let extra: Vec<Output> = set.iter().filter_map(|o| o.requires()).filter(|r| !set.contains(r)).collect();
        if extra.is_empty() {
            return set;
        }
        set.extend(extra);
    }
}

pub fn run_scenario(path: &Path, options: &RunOptions) -> Result<RunReport, CliError> {
    let (mut scenario, bytes) = scenario::load(path)?;
    if let Some(seed) = options.seed {
        scenario.seed = seed;
    }
    if let Some(only) = &options.only {
        scenario.outputs = with_prerequisites(only.clone()).into_iter().collect();
    }
    let violations = scenario.violations();
    if !violations.is_empty() {
        return Err(CliError::Schema(violations));
    }
    let resolved = scenario.resolve()?;
    std::fs::create_dir_all(&options.out_dir).map_err(|e| CliError::Io(format!("{}: {e}", options.out_dir.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let mut artifacts = Artifacts { dir: options.out_dir.clone(), written: BTreeMap::new() };
    let (summary, sweep) = pool.install(|| execute(&scenario, &resolved, &mut artifacts))?;

    let mut text = String::new();
    for (k, v) in &summary {
        let _ = writeln!(text, "{k}={v}");
    }
    artifacts.put("summary.txt", text.as_bytes())?;

    let input_name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let mut manifest = String::new();
    let _ = writeln!(manifest, "scenario={}", scenario.name);
    let _ = writeln!(manifest, "schema_version={}", scenario.schema_version);
    let _ = writeln!(manifest, "input={input_name}");
    let _ = writeln!(manifest, "input_sha256={}", hex(&Sha256::digest(&bytes)));
    let _ = writeln!(manifest, "seed={}", scenario.seed);
    let outputs: Vec<&str> = scenario.output_set().iter().map(|o| o.as_str()).collect();
    let _ = writeln!(manifest, "outputs={}", outputs.join(","));
    let _ = writeln!(manifest, "sqcool_version={}", env!("CARGO_PKG_VERSION"));
    for (name, sha) in &artifacts.written {
        let _ = writeln!(manifest, "sha256.{name}={sha}");
    }
    artifacts.put("manifest.txt", manifest.as_bytes())?;

    Ok(RunReport { artifacts: artifacts.written, summary, sweep })
}

/// Everything produced for one probe at the scenario's feedback setting.
struct ProbeRun {
    trajectory: Option<Trajectory>,
    spectra: Option<(Spectrum, Spectrum)>,
    fit: Option<FitResult>,
}

fn window(kind: WindowKind) -> Window {
    match kind {
        WindowKind::Hann => Window::Hann,
        WindowKind::Rectangular => Window::Rectangular,
    }
}

/// Viscous gain the loop is expected to produce, for band-coverage checks.
fn expected_gain(cfg: &SimConfig) -> f64 {
    match cfg.feedback.mode {
        FeedbackMode::Off => 0.0,
        FeedbackMode::IdealViscous => cfg.feedback.gain,
        FeedbackMode::RealisticChain => nominal_viscous_gain(&cfg.feedback, &cfg.mode, cfg.sample_rate).max(0.0),
    }
}

fn fit_record(scenario: &Scenario, mode: &MechanicalMode, y: &Spectrum, sample_rate: f64) -> Result<FitResult, CliError> {
    let a = &scenario.analysis;
    let init = initial_guess(y, mode, a.band_linewidths)?;
    let options = FitOptions {
        band_linewidths: a.band_linewidths,
        detector_rate: a.detector_aware.then_some(sample_rate),
        ..FitOptions::default()
    };
    Ok(fit_spectrum(y, mode, &init, &FitBounds::around(&init), &options)?)
}

/// Fitted temperature with an error propagated from the individual
/// parameter errors (correlations ignored).
fn fitted_temperature(fit: &FitResult, mode: &MechanicalMode) -> Result<Estimate, CliError> {
    let t = effective_temperature(fit, mode)?;
    let mut var = 0.0;
    for k in 0..3 {
        let mut shifted = fit.clone();
        match k {
            0 => shifted.params.g += fit.param_errors.g,
            1 => shifted.params.s_imp += fit.param_errors.s_imp,
            _ => shifted.params.omega_m += fit.param_errors.omega_m,
        }
        if let Ok(ts) = effective_temperature(&shifted, mode) {
            var += (ts - t).powi(2);
        }
    }
    Ok(Estimate { value: t, error: var.sqrt() })
}

fn simulate_probe(scenario: &Scenario, r: &Resolved, index: usize, np: &NamedProbe) -> Result<ProbeRun, CliError> {
    let outputs = scenario.output_set();
    let mut out = ProbeRun { trajectory: None, spectra: None, fit: None };
    let Some(template) = &r.sim else { return Ok(out) };
    if !outputs.contains(&Output::Simulate) {
        return Ok(out);
    }
    let cfg = SimConfig { probe: np.probe, seed: run_seed(scenario.seed, index, 0), ..*template };
    let traj = run(&cfg)?;
    if outputs.contains(&Output::Psd) {
        let a = &scenario.analysis;
        let psd = |series: &[f64], source| welch_psd(series, cfg.sample_rate, a.segment_length, window(a.window), a.overlap, source);
        let y = psd(&traj.y, SpectrumSource::InLoopY)?;
        let x = psd(&traj.x, SpectrumSource::TrueX)?;
        if outputs.contains(&Output::Fit) {
            out.fit = Some(fit_record(scenario, &r.mode, &y, cfg.sample_rate)?);
        }
        out.spectra = Some((y, x));
    }
    out.trajectory = Some(traj);
    Ok(out)
}

fn execute(
    scenario: &Scenario,
    r: &Resolved,
    artifacts: &mut Artifacts,
) -> Result<(BTreeMap<String, String>, Option<SweepTable>), CliError> {
    let outputs = scenario.output_set();
    let mut summary = BTreeMap::new();
    let mode = &r.mode;
    summary.insert("scenario".into(), scenario.name.clone());
    summary.insert("mode.t0_k".into(), format!("{:e}", mode.t_bath));
    summary.insert("mode.quality_factor".into(), format!("{:e}", mode.quality_factor()));

    if outputs.contains(&Output::Predict) {
        let mut csv = String::from("probe,gain,t_fb_k,ratio,n_fb\n");
        for np in &r.probes {
            let p = &np.probe;
            let key = |k: &str| format!("predict.{}.{k}", np.label);
            let a = cooling_parameter(mode, p, Occupancy::HighTemperature)?;
            let g_opt = optimal_gain(mode, p)?;
            summary.insert(key("cooperativity"), format!("{:e}", cooperativity(p, mode)));
            summary.insert(key("detected_variance"), format!("{:e}", detected_variance(p)));
            summary.insert(key("eta_fb"), format!("{:e}", p.eta_fb));
            summary.insert(key("eta_d"), format!("{:e}", p.eta_d));
            summary.insert(key("cooling_parameter"), format!("{a:e}"));
            summary.insert(key("optimal_gain"), format!("{g_opt:e}"));
            summary.insert(key("t_min_k"), format!("{:e}", predict_temperature(mode, p, g_opt)?.t_fb));
            summary.insert(key("measurement_rate"), format!("{:e}", measurement_rate(mode, p)));
            summary.insert(key("imprecision_psd"), format!("{:e}", imprecision_psd(mode, p)?));
            let mut gains = scenario.gain_grid();
            if gains.is_empty() {
                gains = (0..=60).map(|k| k as f64 * g_opt / 20.0).collect();
            }
            for c in cooling_curve(mode, p, &gains)? {
                let _ = writeln!(csv, "{},{:e},{:e},{:e},{:e}", np.label, c.gain, c.t_fb, c.ratio(), c.n_fb);
            }
        }
        artifacts.put("predict.csv", csv.as_bytes())?;
    }

    let runs: Vec<ProbeRun> = r
        .probes
        .par_iter()
        .enumerate()
        .map(|(k, np)| simulate_probe(scenario, r, k, np))
        .collect::<Result<_, _>>()?;

    let bw = scenario.analysis.lockin_bandwidth_hz.unwrap_or(default_lockin_bandwidth(mode));
    let mut lockin_variance = Vec::new();
    let mut fit_csv = format!("probe,{}\n", FitResult::csv_header());
    for (k, (np, pr)) in r.probes.iter().zip(&runs).enumerate() {
        let label = np.label;
        let key = |s: &str| format!("{label}.{s}");
        let Some(traj) = &pr.trajectory else { continue };
        let cfg = &traj.config;
        let mut buf = Vec::new();
        traj.write_csv_head(&mut buf, r.trajectory_rows)?;
        artifacts.put(&format!("trajectory_{label}.csv"), &buf)?;
        let (t_sim, t_err) = traj.batched_temperature(20);
        summary.insert(key("simulated.t_k"), format!("{t_sim:e}"));
        summary.insert(key("simulated.t_err_k"), format!("{t_err:e}"));
        summary.insert(key("simulated.seed"), cfg.seed.to_string());
        summary.insert(key("simulated.delay_samples"), traj.delay_samples.to_string());

        if let Some((y, x)) = &pr.spectra {
            for (spec, suffix) in [(y, "y"), (x, "x")] {
                let mut buf = Vec::new();
                write_spectrum_csv(spec, &mut buf)?;
                artifacts.put(&format!("psd_{label}_{suffix}.csv"), &buf)?;
            }
            let options = EquipartitionOptions {
                linewidth: Some(mode.linewidth_hz() * (1.0 + expected_gain(cfg))),
                ..Default::default()
            };
            match equipartition_temperature(x, mode, x.band(), options) {
                Ok(t) => summary.insert(key("equipartition.t_k"), format!("{t:e}")),
                Err(e) => summary.insert(key("equipartition.error"), e.to_string()),
            };
        }

        if let Some(fit) = &pr.fit {
            let mut text = fit.to_key_value();
            match fitted_temperature(fit, mode) {
                Ok(est) => {
                    let _ = writeln!(text, "t_eff_err_k={:e}", est.error);
                    summary.insert(key("fit.t_eff_k"), format!("{:e}", est.value));
                    summary.insert(key("fit.t_eff_err_k"), format!("{:e}", est.error));
                }
                Err(e) => {
                    summary.insert(key("fit.error"), e.to_string());
                }
            }
            summary.insert(key("fit.g"), format!("{:e}", fit.params.g));
            summary.insert(key("fit.converged"), fit.converged.to_string());
            summary.insert(key("fit.reduced_chi2"), format!("{:e}", fit.reduced_chi2()));
            artifacts.put(&format!("fit_{label}.txt"), text.as_bytes())?;
            let _ = writeln!(fit_csv, "{label},{}", fit.csv_row());
        }

        if outputs.contains(&Output::Lockin) {
            let coherent = r.probes[0].probe;
            let unit = shot_noise_scale(mode, &coherent, cfg.sample_rate, mode.frequency_hz(), bw, cfg.duration.min(1.0), run_seed(scenario.seed, k, 1))?;
            let track = lockin_demodulate(&traj.x, cfg.sample_rate, mode.frequency_hz(), bw)?;
            let track = track.after(track.settling_time()).normalized(unit);
            let (vx, vy) = (track.variance(Axis::InPhase), track.variance(Axis::Quadrature));
            summary.insert(key("lockin.var_x"), format!("{vx:e}"));
            summary.insert(key("lockin.var_y"), format!("{vy:e}"));
            summary.insert(key("lockin.shot_noise_unit_m"), format!("{unit:e}"));
            lockin_variance.push(vx + vy);
            let stride = ((cfg.sample_rate / (4.0 * bw)).floor() as usize).max(1);
            let mut buf = Vec::new();
            write_track_csv(&track.decimated(stride), &mut buf)?;
            artifacts.put(&format!("lockin_{label}.csv"), &buf)?;
            match marginal_histogram(&track, Axis::InPhase, scenario.analysis.histogram_bins) {
                Ok(h) => {
                    let mut csv = format!("# mean={:e}\n# variance={:e}\n# chi2_per_bin={:e}\n", h.mean, h.variance, h.chi2_per_bin);
                    csv.push_str("x_shot_units,density,gaussian\n");
                    for i in 0..h.centers.len() {
                        let _ = writeln!(csv, "{:e},{:e},{:e}", h.centers[i], h.density[i], h.gaussian[i]);
                    }
                    artifacts.put(&format!("histogram_{label}.csv"), csv.as_bytes())?;
                    summary.insert(key("lockin.chi2_per_bin"), format!("{:e}", h.chi2_per_bin));
                }
                Err(e) => {
                    summary.insert(key("lockin.histogram_error"), e.to_string());
                }
            }
        }
    }
    if outputs.contains(&Output::Fit) {
        artifacts.put("fit.csv", fit_csv.as_bytes())?;
    }
    if lockin_variance.len() == 2 {
        summary.insert("lockin.variance_ratio".into(), format!("{:e}", lockin_variance[1] / lockin_variance[0]));
    }

    let sweep = if outputs.contains(&Output::SweepTable) {
        let table = sweep_table(scenario, r)?;
        table.check().map_err(|e| CliError::Io(format!("sweep table: {e}")))?;
        for probe in table.probes() {
            if let Some(min) = table.minimum(probe) {
                summary.insert(format!("sweep.{probe}.min_t_pred_k"), format!("{:e}", min.predicted));
                summary.insert(format!("sweep.{probe}.argmin"), format!("{:e}", min.x));
            }
        }
        artifacts.put("sweep_table.csv", table.to_csv().as_bytes())?;
        Some(table)
    } else {
        None
    };
    Ok((summary, sweep))
}

fn sweep_table(scenario: &Scenario, r: &Resolved) -> Result<SweepTable, CliError> {
    let spec = scenario.sweep.clone().unwrap_or_default();
    let mode = &r.mode;
    if let Some(dbs) = &spec.squeezing_db {
        let base = r.probes[0].probe;
        let base = sqcool_core::model::ProbeState { eta_d: spec.eta_d.unwrap_or(1.0), ..base };
        let mut dbs = dbs.clone();
        dbs.sort_by(f64::total_cmp);
        let rows = squeezing_sweep(mode, &base, &dbs)?
            .into_iter()
            .map(|p| SweepRow {
                probe: "squeezing",
                x: p.squeezing_db,
                predicted: p.t_min,
                simulated: None,
                fitted: None,
                detected_variance: Some(p.detected_variance),
                optimal_gain: Some(p.optimal_gain),
            })
            .collect();
        return Ok(SweepTable { axis: SweepAxis::Squeezing, t0: mode.t_bath, rows });
    }

    // (probe index, gain) in table order
    let mut points = Vec::new();
    for (k, np) in r.probes.iter().enumerate() {
        let mut gains = scenario.gain_grid();
        if spec.include_optimum {
            gains.push(optimal_gain(mode, &np.probe)?);
        }
        gains.sort_by(f64::total_cmp);
        gains.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        points.extend(gains.into_iter().map(|g| (k, g)));
    }

    let rows = points
        .par_iter()
        .enumerate()
        .map(|(i, &(k, g))| -> Result<SweepRow, CliError> {
            let np = &r.probes[k];
            let predicted_gain = match r.feedback.mode {
                FeedbackMode::RealisticChain => {
                    let rate = r.sim.as_ref().map(|s| s.sample_rate).unwrap_or(20.0 * mode.frequency_hz());
                    nominal_viscous_gain(&FeedbackConfig { gain: g, ..r.feedback }, mode, rate).max(0.0)
                }
                _ => g,
            };
            let mut row = SweepRow {
                probe: np.label,
                x: g,
                predicted: predict_temperature(mode, &np.probe, predicted_gain)?.t_fb,
                simulated: None,
                fitted: None,
                detected_variance: None,
                optimal_gain: None,
            };
            if let (true, Some(template)) = (spec.simulate, &r.sim) {
                let feedback = FeedbackConfig { gain: g, ..r.feedback };
                let cfg = SimConfig { probe: np.probe, feedback, seed: run_seed(scenario.seed, k, 2 + i), ..*template };
                let traj = run(&cfg)?;
                let (t, err) = traj.batched_temperature(20);
                row.simulated = Some(Estimate { value: t, error: err });
                let a = &scenario.analysis;
                let y = welch_psd(&traj.y, cfg.sample_rate, a.segment_length, window(a.window), a.overlap, SpectrumSource::InLoopY)?;
                let fit = fit_record(scenario, mode, &y, cfg.sample_rate)?;
                row.fitted = fitted_temperature(&fit, mode).ok();
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepTable { axis: SweepAxis::Gain, t0: mode.t_bath, rows })
}
