//! Scenario files: a versioned TOML schema in laboratory units (Hz, K, kg,
//! dB, s), converted to core types once on load.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::Deserialize;
use sqcool_core::model::{calibrate_efficiency, cooling_parameter_from_minimum, MechanicalMode, ProbeState};
use sqcool_core::simulate::{viscous_delay, FeedbackConfig, FeedbackMode, Integrator, SimConfig};
use sqcool_core::units::{hz_to_angular, squeezed_variance, VACUUM_VARIANCE};
use sqcool_core::ModelError;

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub outputs: Vec<Output>,
    pub mode: ModeSpec,
    pub probe: ProbeSpec,
    pub squeezed: Option<SqueezedSpec>,
    #[serde(default)]
    pub feedback: FeedbackSpec,
    pub sweep: Option<SweepSpec>,
    pub sim: Option<SimSpec>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Predict,
    Simulate,
    Psd,
    Lockin,
    Fit,
    SweepTable,
}

impl Output {
    pub fn as_str(self) -> &'static str {
        match self {
            Output::Predict => "predict",
            Output::Simulate => "simulate",
            Output::Psd => "psd",
            Output::Lockin => "lockin",
            Output::Fit => "fit",
            Output::SweepTable => "sweep_table",
        }
    }

    /// The artifact this one is computed from.
    pub fn requires(self) -> Option<Output> {
        match self {
            Output::Psd | Output::Lockin => Some(Output::Simulate),
            Output::Fit => Some(Output::Psd),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub frequency_hz: f64,
    pub linewidth_hz: f64,
    pub mass_kg: f64,
    pub temperature_k: Option<f64>,
    /// Alternative to `temperature_k`: high-temperature occupancy.
    pub thermal_occupancy: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub photons: f64,
    pub kappa_hz: f64,
    pub g0_hz: Option<f64>,
    /// Alternative to `g0_hz`.
    pub cooperativity: Option<f64>,
    pub eta_fb: Option<f64>,
    /// Alternative to `eta_fb`: calibrate it so the coherent optimum reaches this temperature.
    pub coherent_minimum_k: Option<f64>,
    /// Alternative to `eta_fb`: calibrate it to this `8·η·n_th·C/V_d`.
    pub cooling_parameter: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SqueezedSpec {
    /// Source squeezing, dB below vacuum.
    pub squeezing_db: f64,
    pub eta_d: Option<f64>,
    /// Alternative to `eta_d`: detected squeezing, dB below vacuum.
    pub detected_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackKind {
    #[default]
    Off,
    IdealViscous,
    RealisticChain,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedbackSpec {
    #[serde(default)]
    pub mode: FeedbackKind,
    /// Dimensionless `G` (ideal) or electronic gain `K` in N/m (chain).
    #[serde(default)]
    pub gain: f64,
    pub bandpass_center_hz: Option<f64>,
    pub bandpass_bandwidth_hz: Option<f64>,
    /// Defaults to the viscous delay for the chain.
    pub delay_s: Option<f64>,
    pub sign: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainRange {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub gains: Option<Vec<f64>>,
    pub gain_range: Option<GainRange>,
    /// Insert each probe's optimal gain into the grid.
    #[serde(default)]
    pub include_optimum: bool,
    pub squeezing_db: Option<Vec<f64>>,
    /// Squeezed-mode transmission for a squeezing sweep.
    pub eta_d: Option<f64>,
    /// Add simulated and fitted temperatures to a gain sweep.
    #[serde(default)]
    pub simulate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorKind {
    #[default]
    Exact,
    SmallStep,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub sample_rate_hz: f64,
    pub duration_s: f64,
    pub burn_in_s: Option<f64>,
    #[serde(default)]
    pub integrator: IntegratorKind,
    pub substeps: Option<usize>,
    #[serde(default = "yes")]
    pub measurement_noise: bool,
    /// Rows written to each trajectory CSV.
    #[serde(default = "default_trajectory_rows")]
    pub trajectory_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    #[default]
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "default_segment_length")]
    pub segment_length: usize,
    #[serde(default)]
    pub window: WindowKind,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
    pub lockin_bandwidth_hz: Option<f64>,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    #[serde(default = "default_band")]
    pub band_linewidths: f64,
    /// Fit with the detector's sample-period averaging included.
    #[serde(default = "yes")]
    pub detector_aware: bool,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            segment_length: default_segment_length(),
            window: WindowKind::default(),
            overlap: default_overlap(),
            lockin_bandwidth_hz: None,
            histogram_bins: default_bins(),
            band_linewidths: default_band(),
            detector_aware: true,
        }
    }
}

fn yes() -> bool {
    true
}
fn default_trajectory_rows() -> usize {
    100_000
}
fn default_segment_length() -> usize {
    1 << 15
}
fn default_overlap() -> f64 {
    0.5
}
fn default_bins() -> usize {
    40
}
fn default_band() -> f64 {
    10.0
}

/// A schema or physics violation with the offending key path.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

/// Parses TOML text, reporting the key path of any schema error.
pub fn parse(text: &str) -> Result<Scenario, CliError> {
    let de = toml::Deserializer::new(text);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        CliError::Schema(vec![Violation { path, reason: inner.message().to_string() }])
    })?;
    if scenario.schema_version != SCHEMA_VERSION {
        return Err(CliError::Schema(vec![Violation {
            path: "schema_version".into(),
            reason: format!("unsupported version {} (expected {SCHEMA_VERSION})", scenario.schema_version),
        }]));
    }
    Ok(scenario)
}

pub fn load(path: &Path) -> Result<(Scenario, Vec<u8>), CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok((parse(text)?, bytes))
}

/// A labelled probe ready for the core.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NamedProbe {
    pub label: &'static str,
    pub probe: ProbeState,
}

/// Everything converted to SI and angular units.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub mode: MechanicalMode,
    pub probes: Vec<NamedProbe>,
    pub feedback: FeedbackConfig,
    /// Simulation template; `feedback`, `probe` and `seed` are set per run.
    pub sim: Option<SimConfig>,
    pub trajectory_rows: usize,
}

fn bad(path: &str, reason: impl Into<String>) -> Violation {
    Violation { path: path.into(), reason: reason.into() }
}

fn model_violation(prefix: &str, e: ModelError) -> Violation {
    match e {
        ModelError::InvalidParameter { field, reason } => bad(&format!("{prefix}.{field}"), reason),
        ModelError::NoTransduction => bad(prefix, "no transduction: cooperativity is zero"),
    }
}

fn positive(out: &mut Vec<Violation>, path: &str, v: f64) {
    if !(v.is_finite() && v > 0.0) {
        out.push(bad(path, format!("must be > 0 (got {v})")));
    }
}

fn exactly_one(out: &mut Vec<Violation>, section: &str, keys: &[(&str, bool)]) {
    let set: Vec<&str> = keys.iter().filter(|(_, s)| *s).map(|(k, _)| *k).collect();
    if set.len() != 1 {
        let names: Vec<&str> = keys.iter().map(|(k, _)| *k).collect();
        out.push(bad(section, format!("set exactly one of {}", names.join(", "))));
    }
}

impl Scenario {
    pub fn output_set(&self) -> BTreeSet<Output> {
        self.outputs.iter().copied().collect()
    }

    /// Sorted gain grid from `sweep.gains` or `sweep.gain_range`.
    pub fn gain_grid(&self) -> Vec<f64> {
        let Some(sweep) = &self.sweep else { return Vec::new() };
        let mut gains = sweep.gains.clone().unwrap_or_default();
        if let Some(r) = &sweep.gain_range {
            if r.points == 1 {
                gains.push(r.start);
            } else {
                let step = (r.stop - r.start) / (r.points.max(2) - 1) as f64;
                gains.extend((0..r.points).map(|k| r.start + k as f64 * step));
            }
        }
        gains
    }

    /// Every violation, without stopping at the first.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.name.trim().is_empty() {
            out.push(bad("name", "must not be empty"));
        }
        let outputs = self.output_set();
        if outputs.is_empty() {
            out.push(bad("outputs", "no artifacts requested"));
        }
        for o in &outputs {
            if let Some(req) = o.requires() {
                if !outputs.contains(&req) {
                    out.push(bad("outputs", format!("`{}` requires `{}`", o.as_str(), req.as_str())));
                }
            }
        }
        let simulated = outputs.contains(&Output::Simulate);
        if simulated && self.sim.is_none() {
            out.push(bad("sim", "required when `simulate` is requested"));
        }
        if outputs.contains(&Output::SweepTable) && self.sweep.is_none() {
            out.push(bad("sweep", "required when `sweep_table` is requested"));
        }

        let m = &self.mode;
        positive(&mut out, "mode.frequency_hz", m.frequency_hz);
        positive(&mut out, "mode.linewidth_hz", m.linewidth_hz);
        positive(&mut out, "mode.mass_kg", m.mass_kg);
        exactly_one(&mut out, "mode", &[("temperature_k", m.temperature_k.is_some()), ("thermal_occupancy", m.thermal_occupancy.is_some())]);
        if let Some(t) = m.temperature_k {
            if !(t.is_finite() && t >= 0.0) {
                out.push(bad("mode.temperature_k", "must be >= 0"));
            }
        }
        if let Some(n) = m.thermal_occupancy {
            positive(&mut out, "mode.thermal_occupancy", n);
        }
        if m.frequency_hz > 0.0 && m.linewidth_hz > 0.0 && m.frequency_hz <= m.linewidth_hz {
            out.push(bad("mode.linewidth_hz", "mode must be underdamped (Q > 1)"));
        }

        let p = &self.probe;
        if !(p.photons.is_finite() && p.photons >= 0.0) {
            out.push(bad("probe.photons", "must be >= 0"));
        }
        positive(&mut out, "probe.kappa_hz", p.kappa_hz);
        exactly_one(&mut out, "probe", &[("g0_hz", p.g0_hz.is_some()), ("cooperativity", p.cooperativity.is_some())]);
        if let Some(c) = p.cooperativity {
            positive(&mut out, "probe.cooperativity", c);
        }
        if let Some(g0) = p.g0_hz {
            if !(g0.is_finite() && g0 >= 0.0) {
                out.push(bad("probe.g0_hz", "must be >= 0"));
            }
        }
        exactly_one(
            &mut out,
            "probe",
            &[
                ("eta_fb", p.eta_fb.is_some()),
                ("coherent_minimum_k", p.coherent_minimum_k.is_some()),
                ("cooling_parameter", p.cooling_parameter.is_some()),
            ],
        );
        if let Some(eta) = p.eta_fb {
            if !(eta > 0.0 && eta <= 1.0) {
                out.push(bad("probe.eta_fb", format!("must lie in (0, 1] (got {eta})")));
            }
        }
        if let Some(a) = p.cooling_parameter {
            positive(&mut out, "probe.cooling_parameter", a);
        }

        if let Some(sq) = &self.squeezed {
            positive(&mut out, "squeezed.squeezing_db", sq.squeezing_db);
            exactly_one(&mut out, "squeezed", &[("eta_d", sq.eta_d.is_some()), ("detected_db", sq.detected_db.is_some())]);
            if let Some(eta) = sq.eta_d {
                if !(eta > 0.0 && eta <= 1.0) {
                    out.push(bad("squeezed.eta_d", format!("must lie in (0, 1] (got {eta})")));
                }
            }
            if let Some(d) = sq.detected_db {
                if !(d > 0.0 && d < sq.squeezing_db) {
                    out.push(bad("squeezed.detected_db", "must lie in (0, squeezing_db)"));
                }
            }
        }

        let fb = &self.feedback;
        if !(fb.gain.is_finite() && fb.gain >= 0.0) {
            out.push(bad("feedback.gain", "must be finite and >= 0"));
        }
        if let Some(s) = fb.sign {
            if s != 1.0 && s != -1.0 {
                out.push(bad("feedback.sign", "must be +1 or -1"));
            }
        }
        if let Some(d) = fb.delay_s {
            if !(d >= 0.0) {
                out.push(bad("feedback.delay_s", "must be >= 0"));
            }
        }
        if simulated && fb.mode == FeedbackKind::Off && fb.gain != 0.0 {
            out.push(bad("feedback.gain", "feedback is off but a gain is set"));
        }

        if let Some(sweep) = &self.sweep {
            if let Some(r) = &sweep.gain_range {
                if r.points == 0 {
                    out.push(bad("sweep.gain_range.points", "must be >= 1"));
                }
                if !(r.start >= 0.0 && r.stop >= r.start) {
                    out.push(bad("sweep.gain_range", "need 0 <= start <= stop"));
                }
            }
            if sweep.gains.is_none() && sweep.gain_range.is_none() && sweep.squeezing_db.is_none() {
                out.push(bad("sweep", "set gains, gain_range or squeezing_db"));
            }
            if sweep.squeezing_db.is_some() && (sweep.gains.is_some() || sweep.gain_range.is_some()) {
                out.push(bad("sweep", "a sweep is over gain or over squeezing, not both"));
            }
            for (k, g) in sweep.gains.iter().flatten().enumerate() {
                if !(g.is_finite() && *g >= 0.0) {
                    out.push(bad(&format!("sweep.gains[{k}]"), "must be >= 0"));
                }
            }
            for (k, d) in sweep.squeezing_db.iter().flatten().enumerate() {
                if !(d.is_finite() && *d >= 0.0) {
                    out.push(bad(&format!("sweep.squeezing_db[{k}]"), "must be >= 0"));
                }
            }
            if sweep.squeezing_db.is_some() && sweep.simulate {
                out.push(bad("sweep.simulate", "squeezing sweeps are predicted only"));
            }
            if sweep.simulate && self.sim.is_none() {
                out.push(bad("sim", "required when `sweep.simulate` is set"));
            }
            if sweep.simulate && self.feedback.mode == FeedbackKind::Off {
                out.push(bad("feedback.mode", "a simulated gain sweep needs feedback"));
            }
            if let Some(eta) = sweep.eta_d {
                if sweep.squeezing_db.is_none() {
                    out.push(bad("sweep.eta_d", "only meaningful for a squeezing sweep"));
                }
                if !(eta > 0.0 && eta <= 1.0) {
                    out.push(bad("sweep.eta_d", format!("must lie in (0, 1] (got {eta})")));
                }
            }
        }

        if let Some(sim) = &self.sim {
            positive(&mut out, "sim.sample_rate_hz", sim.sample_rate_hz);
            positive(&mut out, "sim.duration_s", sim.duration_s);
            if sim.integrator == IntegratorKind::SmallStep && sim.substeps == Some(0) {
                out.push(bad("sim.substeps", "must be >= 1"));
            }
            if sim.integrator == IntegratorKind::Exact && sim.substeps.is_some() {
                out.push(bad("sim.substeps", "only meaningful for the small_step integrator"));
            }
        }

        let a = &self.analysis;
        if a.segment_length < 16 {
            out.push(bad("analysis.segment_length", "must be >= 16"));
        }
        if !(0.0..1.0).contains(&a.overlap) {
            out.push(bad("analysis.overlap", "must lie in [0, 1)"));
        }
        if a.histogram_bins < 2 {
            out.push(bad("analysis.histogram_bins", "must be >= 2"));
        }
        positive(&mut out, "analysis.band_linewidths", a.band_linewidths);
        if let Some(bw) = a.lockin_bandwidth_hz {
            positive(&mut out, "analysis.lockin_bandwidth_hz", bw);
        }

        // physics checks that need the converted values
        if out.is_empty() {
            match self.resolve() {
                Ok(r) => out.extend(self.runtime_violations(&r)),
                Err(CliError::Schema(v)) => out.extend(v),
                Err(e) => out.push(bad("scenario", e.to_string())),
            }
        }
        out
    }

    fn runtime_violations(&self, r: &Resolved) -> Vec<Violation> {
        let mut out = Vec::new();
        let Some(template) = &r.sim else { return out };
        let simulated = self.output_set().contains(&Output::Simulate) || self.sweep.as_ref().is_some_and(|s| s.simulate);
        if !simulated {
            return out;
        }
        for np in &r.probes {
            let cfg = SimConfig { probe: np.probe, feedback: r.feedback, ..*template };
            for v in cfg.violations() {
                let path = match v.field {
                    "sample_rate" => "sim.sample_rate_hz".to_string(),
                    "duration" => "sim.duration_s".to_string(),
                    "burn_in" => "sim.burn_in_s".to_string(),
                    "integrator.substeps" => "sim.substeps".to_string(),
                    "feedback.delay" => "feedback.delay_s".to_string(),
                    "feedback.bandpass_center" => "feedback.bandpass_center_hz".to_string(),
                    "feedback.bandpass_bandwidth" => "feedback.bandpass_bandwidth_hz".to_string(),
                    other if other.starts_with("feedback.") => other.to_string(),
                    other => format!("{}.{other}", np.label),
                };
                let v = Violation { path, reason: v.reason };
                if !out.contains(&v) {
                    out.push(v);
                }
            }
            let samples = (template.duration * template.sample_rate).round() as usize;
            if self.output_set().contains(&Output::Psd) && self.analysis.segment_length > samples {
                out.push(bad("analysis.segment_length", format!("longer than the {samples} simulated samples")));
            }
        }
        let f_m = r.mode.frequency_hz();
        let bw = self.analysis.lockin_bandwidth_hz.unwrap_or(sqcool_core::dsp::default_lockin_bandwidth(&r.mode));
        if self.output_set().contains(&Output::Lockin) && bw >= f_m {
            out.push(bad("analysis.lockin_bandwidth_hz", "must be below the mode frequency"));
        }
        out
    }

    /// Converts to core types. Assumes [`Scenario::violations`] passed the
    /// schema-level checks; physics errors are still reported as violations.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let fail = |v: Violation| CliError::Schema(vec![v]);
        let m = &self.mode;
        let mut mode = MechanicalMode::from_hz(m.frequency_hz, m.linewidth_hz, m.mass_kg, m.temperature_k.unwrap_or(0.0))
            .map_err(|e| fail(model_violation("mode", e)))?;
        if let Some(n) = m.thermal_occupancy {
            mode = mode.with_occupancy(n);
        }

        let p = &self.probe;
        let kappa = hz_to_angular(p.kappa_hz);
        let mut base = ProbeState::coherent(p.photons, hz_to_angular(p.g0_hz.unwrap_or(0.0)), kappa, p.eta_fb.unwrap_or(1.0))
            .map_err(|e| fail(model_violation("probe", e)))?;
        if let Some(c) = p.cooperativity {
            base = base.with_cooperativity(c, &mode);
        }
        let target = match (p.coherent_minimum_k, p.cooling_parameter) {
            (Some(t_min), _) => Some(
                cooling_parameter_from_minimum(t_min / mode.t_bath)
                    .map_err(|_| fail(bad("probe.coherent_minimum_k", "must lie in (0, T0]")))?,
            ),
            (None, Some(a)) => Some(a),
            _ => None,
        };
        if let Some(a) = target {
            base.eta_fb = calibrate_efficiency(&mode, &base, a).map_err(|e| match e {
                ModelError::NoTransduction => fail(bad("probe", "no transduction: cooperativity is zero")),
                ModelError::InvalidParameter { reason, .. } => fail(bad("probe.eta_fb", reason)),
            })?;
        }

        let mut probes = vec![NamedProbe { label: "coherent", probe: base }];
        if let Some(sq) = &self.squeezed {
            let eta_d = match (sq.eta_d, sq.detected_db) {
                (Some(eta), _) => eta,
                (None, Some(d)) => (VACUUM_VARIANCE - squeezed_variance(d)) / (VACUUM_VARIANCE - squeezed_variance(sq.squeezing_db)),
                _ => 1.0,
            };
            let probe = base.squeezed(sq.squeezing_db, eta_d).map_err(|e| fail(model_violation("squeezed", e)))?;
            probes.push(NamedProbe { label: "squeezed", probe });
        }

        let fb = &self.feedback;
        let mut feedback = FeedbackConfig::off(&mode);
        feedback.gain = fb.gain;
        if let Some(c) = fb.bandpass_center_hz {
            feedback.bandpass_center = c;
        }
        if let Some(b) = fb.bandpass_bandwidth_hz {
            feedback.bandpass_bandwidth = b;
        }
        feedback.mode = match fb.mode {
            FeedbackKind::Off => FeedbackMode::Off,
            FeedbackKind::IdealViscous => FeedbackMode::IdealViscous,
            FeedbackKind::RealisticChain => FeedbackMode::RealisticChain,
        };

        let sim = self.sim.as_ref().map(|s| {
            let mut cfg = SimConfig::new(mode, base, feedback, s.sample_rate_hz, s.duration_s, self.seed);
            if let Some(b) = s.burn_in_s {
                cfg.burn_in = b;
            }
            cfg.integrator = match s.integrator {
                IntegratorKind::Exact => Integrator::Exact,
                IntegratorKind::SmallStep => Integrator::SmallStep { substeps: s.substeps.unwrap_or(8) },
            };
            cfg.measurement_noise = s.measurement_noise;
            cfg
        });

        if feedback.mode == FeedbackMode::RealisticChain {
            let rate = sim.as_ref().map(|s| s.sample_rate).unwrap_or(20.0 * mode.frequency_hz());
            // default to the actuation sign that needs the shorter delay
            let delay_for = |sign: f64| viscous_delay(&FeedbackConfig { sign, ..feedback }, &mode, rate);
            feedback.sign = fb.sign.unwrap_or(if delay_for(1.0) <= delay_for(-1.0) { 1.0 } else { -1.0 });
            feedback.delay = match fb.delay_s {
                Some(d) => d,
                None => viscous_delay(&feedback, &mode, rate),
            };
        } else if let Some(s) = fb.sign {
            feedback.sign = s;
        }
        let sim = sim.map(|s| SimConfig { feedback, ..s });

        Ok(Resolved {
            mode,
            probes,
            feedback,
            sim,
            trajectory_rows: self.sim.as_ref().map(|s| s.trajectory_rows).unwrap_or(0),
        })
    }
}
