//! Closed-loop spectral fitting with in-loop noise squashing, and the
//! effective temperature inferred from the fit.
//!
//! Spectra enter as one-sided Hz densities; [`SquashModel`] works with
//! double-sided angular densities and the conversion `S₁(f) = 2·S(2πf)` is
//! applied only inside the residual.

mod lm;
mod squash;

pub use lm::{LmOutcome, LmSettings};
pub use squash::{detector_response, synthetic_spectrum, SquashModel, N_PARAMS};

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::dsp::Spectrum;
use crate::error::FitError;
use crate::model::{temperature_ratio, MechanicalMode, Occupancy};

const NAMES: [&str; N_PARAMS] = ["omega_m", "gamma_m", "g", "s_imp", "s_force"];

/// Which parameters float.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeParams {
    pub omega_m: bool,
    pub gamma_m: bool,
    pub g: bool,
    pub s_imp: bool,
    pub s_force: bool,
}

impl FreeParams {
    /// `{Ω_m, G, S_imp}`; `Γ_m` comes from a feedback-off calibration.
    pub const STANDARD: FreeParams = FreeParams { omega_m: true, gamma_m: false, g: true, s_imp: true, s_force: false };
    /// Feedback-off calibration: `G = 0` fixed, everything else free.
    pub const CALIBRATION: FreeParams = FreeParams { omega_m: true, gamma_m: true, g: false, s_imp: true, s_force: true };

    fn mask(&self) -> [bool; N_PARAMS] {
        [self.omega_m, self.gamma_m, self.g, self.s_imp, self.s_force]
    }
}

impl Default for FreeParams {
    fn default() -> Self {
        Self::STANDARD
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitBounds {
    pub lower: SquashModel,
    pub upper: SquashModel,
}

impl FitBounds {
    /// Generous box around an initial model.
    pub fn around(init: &SquashModel) -> Self {
        let lower = SquashModel {
            omega_m: 0.8 * init.omega_m,
            gamma_m: 1e-2 * init.gamma_m,
            g: -0.9,
            s_imp: 1e-6 * init.s_imp,
            s_force: 1e-6 * init.s_force,
        };
        let upper = SquashModel {
            omega_m: 1.2 * init.omega_m,
            gamma_m: 1e2 * init.gamma_m,
            g: 1e6,
            s_imp: 1e6 * init.s_imp,
            s_force: 1e6 * init.s_force,
        };
        Self { lower, upper }
    }

    fn contains(&self, m: &SquashModel) -> bool {
        let (lo, hi, p) = (self.lower.to_array(), self.upper.to_array(), m.to_array());
        (0..N_PARAMS).all(|i| lo[i] <= p[i] && p[i] <= hi[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub free: FreeParams,
    /// Half-width of the fitted band in bare linewidths around the initial resonance.
    pub band_linewidths: f64,
    /// Sample rate (Hz) of an integrate-and-dump detector that recorded the
    /// spectrum; `None` fits the continuous-time model.
    pub detector_rate: Option<f64>,
    pub lm: LmSettings,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            free: FreeParams::STANDARD,
            band_linewidths: 10.0,
            detector_rate: None,
            lm: LmSettings { max_iterations: 200, abs_step_tol: 1e-10, rel_step_tol: 1e-8, gradient_tol: 1e-3 },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: SquashModel,
    /// 1σ errors from `(JᵀJ)⁻¹`; zero for fixed parameters.
    pub param_errors: SquashModel,
    /// Effective temperature of the fitted `S_x` (K); NaN when not converged.
    pub t_eff: f64,
    pub converged: bool,
    /// `√Σr²` of the weighted residuals.
    pub residual_norm: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub bins: usize,
    pub free: FreeParams,
}

impl FitResult {
    /// `χ²` per degree of freedom; near one for a correct model and weights.
    pub fn reduced_chi2(&self) -> f64 {
        let nfree = self.free.mask().iter().filter(|f| **f).count();
        self.residual_norm.powi(2) / (self.bins.saturating_sub(nfree)).max(1) as f64
    }

    /// Flat `key=value` record, one per line.
    pub fn to_key_value(&self) -> String {
        let mut s = String::new();
        let p = self.params.to_array();
        let e = self.param_errors.to_array();
        let free = self.free.mask();
        for i in 0..N_PARAMS {
            let _ = writeln!(s, "{}={:e}", NAMES[i], p[i]);
            let _ = writeln!(s, "{}_err={:e}", NAMES[i], e[i]);
            let _ = writeln!(s, "{}_free={}", NAMES[i], free[i]);
        }
        let _ = writeln!(s, "t_eff_k={:e}", self.t_eff);
        let _ = writeln!(s, "converged={}", self.converged);
        let _ = writeln!(s, "residual_norm={:e}", self.residual_norm);
        let _ = writeln!(s, "gradient_norm={:e}", self.gradient_norm);
        let _ = writeln!(s, "iterations={}", self.iterations);
        let _ = writeln!(s, "bins={}", self.bins);
        s
    }

    pub fn csv_header() -> String {
        let mut cols: Vec<String> = Vec::new();
        for n in NAMES {
            cols.push(n.to_string());
            cols.push(format!("{n}_err"));
        }
        cols.extend(["t_eff_k", "converged", "residual_norm", "gradient_norm", "iterations", "bins"].map(String::from));
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let p = self.params.to_array();
        let e = self.param_errors.to_array();
        let mut cols: Vec<String> = Vec::new();
        for i in 0..N_PARAMS {
            cols.push(format!("{:e}", p[i]));
            cols.push(format!("{:e}", e[i]));
        }
        cols.push(format!("{:e}", self.t_eff));
        cols.push(self.converged.to_string());
        cols.push(format!("{:e}", self.residual_norm));
        cols.push(format!("{:e}", self.gradient_norm));
        cols.push(self.iterations.to_string());
        cols.push(self.bins.to_string());
        cols.join(",")
    }
}

/// Weighted least-squares fit of `spectrum` to the closed-loop model.
///
/// Bins are weighted by `σ = model/√averages`. The model (in-loop or true
/// displacement) follows the spectrum's source. `mode` supplies the mass for
/// the temperature.
pub fn fit_spectrum(
    spectrum: &Spectrum,
    mode: &MechanicalMode,
    init: &SquashModel,
    bounds: &FitBounds,
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    if !bounds.contains(init) {
        return Err(FitError::InvalidSetup("initial model outside bounds".into()));
    }
    let f0 = init.omega_m / (2.0 * PI);
    let half = options.band_linewidths * init.gamma_m / (2.0 * PI);
    let (lo, hi) = (f0 - half, f0 + half);
    let (fmin, fmax) = spectrum.band();
    if spectrum.freq.is_empty() || fmin > lo + spectrum.bin_width || fmax < hi - spectrum.bin_width {
        return Err(FitError::InvalidSetup(format!(
            "spectrum [{fmin:.1}, {fmax:.1}] Hz does not cover {} linewidths around {f0:.1} Hz",
            options.band_linewidths
        )));
    }
    let mut freq = Vec::new();
    let mut data = Vec::new();
    for (k, (&f, &p)) in spectrum.freq.iter().zip(&spectrum.psd).enumerate() {
        if f < lo || f > hi {
            continue;
        }
        if !(p.is_finite() && p >= 0.0) {
            return Err(FitError::InvalidBin { index: k });
        }
        freq.push(f);
        data.push(p);
    }

    let mask = options.free.mask();
    let free: Vec<usize> = (0..N_PARAMS).filter(|&i| mask[i]).collect();
    if free.is_empty() {
        return Err(FitError::InvalidSetup("no free parameters".into()));
    }
    if freq.len() <= free.len() {
        return Err(FitError::InvalidSetup(format!("only {} bins in the fit band", freq.len())));
    }
    let base = init.to_array();
    let scale: Vec<f64> = free.iter().map(|&i| if base[i] != 0.0 { base[i].abs() } else { 1.0 }).collect();
    let (lb, ub) = (bounds.lower.to_array(), bounds.upper.to_array());
    let x0: Vec<f64> = free.iter().zip(&scale).map(|(&i, s)| base[i] / s).collect();
    let lower: Vec<f64> = free.iter().zip(&scale).map(|(&i, s)| lb[i] / s).collect();
    let upper: Vec<f64> = free.iter().zip(&scale).map(|(&i, s)| ub[i] / s).collect();

    let source = spectrum.source;
    let sqrt_k = (spectrum.averages.max(1) as f64).sqrt();
    let unpack = |x: &[f64]| {
        let mut p = base;
        for (j, &i) in free.iter().enumerate() {
            p[i] = x[j] * scale[j];
        }
        SquashModel::from_array(p)
    };
    let eval = |x: &[f64]| {
        let model = unpack(x);
        let mut r = DVector::zeros(freq.len());
        let mut jac = DMatrix::zeros(freq.len(), free.len());
        for (k, (&f, &d)) in freq.iter().zip(&data).enumerate() {
            let w = 2.0 * PI * f;
            let m = 2.0 * model.detected(source, w, options.detector_rate);
            r[k] = sqrt_k * (d / m - 1.0);
            let grad = model.detected_gradient(source, w, options.detector_rate);
            let factor = -sqrt_k * d / (m * m) * 2.0;
            for (j, &i) in free.iter().enumerate() {
                jac[(k, j)] = factor * grad[i] * scale[j];
            }
        }
        (r, jac)
    };
    let out = lm::minimize(eval, &x0, &lower, &upper, options.lm);

    let params = unpack(&out.x);
    let mut errors = [0.0; N_PARAMS];
    if let Some(cov) = &out.covariance {
        for (j, &i) in free.iter().enumerate() {
            errors[i] = cov[(j, j)].max(0.0).sqrt() * scale[j];
        }
    } else {
        for &i in &free {
            errors[i] = f64::INFINITY;
        }
    }
    let converged = out.converged && bounds.contains(&params);
    Ok(FitResult {
        params,
        param_errors: SquashModel::from_array(errors),
        t_eff: if converged { params.temperature(mode.mass_eff) } else { f64::NAN },
        converged,
        residual_norm: (2.0 * out.cost).sqrt(),
        gradient_norm: out.gradient_norm,
        iterations: out.iterations,
        bins: freq.len(),
        free: options.free,
    })
}

/// Starting model for [`fit_spectrum`] from the spectrum shape.
///
/// `Γ_m` and `S_F/m²` come from `mode`. Within ±`band_linewidths` of the
/// nominal resonance the floor is the median of the outer 20% of bins; the
/// resonance is the peak or dip bin, whichever stands out more; `G` follows
/// from the extremum-to-floor ratio.
pub fn initial_guess(spectrum: &Spectrum, mode: &MechanicalMode, band_linewidths: f64) -> Result<SquashModel, FitError> {
    let f_m = mode.frequency_hz();
    let half = band_linewidths * mode.linewidth_hz();
    let bins: Vec<(f64, f64)> = spectrum
        .freq
        .iter()
        .zip(&spectrum.psd)
        .filter(|(f, _)| (**f - f_m).abs() <= half)
        .map(|(f, p)| (*f, *p))
        .collect();
    if bins.len() < 10 {
        return Err(FitError::InvalidSetup(format!("only {} bins near the nominal resonance", bins.len())));
    }
    if let Some(k) = bins.iter().position(|(_, p)| !(p.is_finite() && *p >= 0.0)) {
        let index = spectrum.freq.iter().position(|f| *f == bins[k].0).unwrap_or(k);
        return Err(FitError::InvalidBin { index });
    }
    let edge = (bins.len() / 10).max(1);
    let mut outer: Vec<f64> = bins[..edge].iter().chain(&bins[bins.len() - edge..]).map(|b| b.1).collect();
    outer.sort_by(f64::total_cmp);
    let floor = 0.5 * (outer[(outer.len() - 1) / 2] + outer[outer.len() / 2]);
    if !(floor > 0.0) {
        return Err(FitError::InvalidSetup("zero noise floor".into()));
    }

    // smooth over a fraction of the bare linewidth so single noisy bins cannot pick the extremum
    let bin = spectrum.bin_width.max(f64::MIN_POSITIVE);
    let w = ((0.25 * mode.linewidth_hz() / bin) as usize).clamp(2, bins.len() / 8);
    let smooth: Vec<f64> = (0..bins.len())
        .map(|k| {
            let (a, b) = (k.saturating_sub(w), (k + w + 1).min(bins.len()));
            bins[a..b].iter().map(|x| x.1).sum::<f64>() / (b - a) as f64
        })
        .collect();
    let (kmax, max) = smooth.iter().copied().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap_or((0, floor));
    let (kmin, min) = smooth.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap_or((0, floor));
    let dip = floor / min.max(f64::MIN_POSITIVE) > max / floor;
    let (k_res, extremum) = if dip { (kmin, min) } else { (kmax, max) };
    // a feature within the smoothed noise says nothing about where the resonance is
    let noise = 5.0 / ((spectrum.averages.max(1) * (2 * w + 1)) as f64).sqrt();
    let resolved = (extremum / floor - 1.0).abs() > noise;

    let mut model = SquashModel::for_mode(mode, 0.0, 0.5 * floor);
    if resolved {
        model.omega_m = 2.0 * PI * bins[k_res].0;
    }
    // the outer bins sit on the closed-loop skirt, so refine floor and gain together
    let w_edge = 2.0 * PI * (f_m + half);
    for _ in 0..5 {
        let r = model.peak_to_floor();
        let ratio = 2.0 * model.s_imp * (1.0 + r) / extremum;
        model.g = (ratio.max(0.0).sqrt() - 1.0).max(0.0);
        let edge_over_floor = model.in_loop(w_edge) / model.s_imp;
        model.s_imp = 0.5 * floor / edge_over_floor.max(1e-3);
    }
    Ok(model)
}

/// Effective temperature of a converged fit.
///
/// Evaluated through the closed-form cooling law, with the fitted floor
/// mapped to `Γ_m·S_imp/(4·x_zpf²·n_th)` at the fitted `Ω_m`, and through
/// the integral of the fitted `S_x`; the two must agree within 1%.
pub fn effective_temperature(fit: &FitResult, mode: &MechanicalMode) -> Result<f64, FitError> {
    if !fit.converged {
        return Err(FitError::NotConverged);
    }
    let p = &fit.params;
    // zero-point scale and occupancy at the fitted resonance
    let fitted = MechanicalMode { omega_m: p.omega_m, gamma_m: p.gamma_m, ..*mode };
    let x_zpf = fitted.x_zpf();
    let n_th = fitted.thermal_occupancy(Occupancy::HighTemperature);
    let a = 4.0 * x_zpf * x_zpf * n_th / (p.gamma_m * p.s_imp);
    let closed_form = mode.t_bath * temperature_ratio(p.g, a);
    let integral = mode.mass_eff * p.omega_m * p.omega_m * p.displacement_variance_numeric(1e-9) / crate::units::K_B;
    if (closed_form / integral - 1.0).abs() > 0.01 {
        return Err(FitError::TemperatureMismatch { closed_form, integral });
    }
    Ok(closed_form)
}

/// Linear map from electronic gain `K` to fitted viscous gain `G`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainCalibration {
    /// `dG/dK` of the least-squares line through the origin.
    pub slope: f64,
    /// RMS deviation from the line relative to the largest `|G|`.
    pub nonlinearity: f64,
    /// Fitted `G` does not increase monotonically with `K`.
    pub non_monotone: bool,
}

impl GainCalibration {
    pub fn gain(&self, k: f64) -> f64 {
        self.slope * k
    }
}

pub fn gain_calibration(sweep: &[(f64, FitResult)]) -> Result<GainCalibration, FitError> {
    if sweep.len() < 3 || !sweep.iter().any(|(k, _)| *k == 0.0) {
        return Err(FitError::CalibrationPoints);
    }
    let mut pts: Vec<(f64, f64)> = sweep.iter().map(|(k, r)| (*k, r.params.g)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let skk: f64 = pts.iter().map(|(k, _)| k * k).sum();
    let skg: f64 = pts.iter().map(|(k, g)| k * g).sum();
    if skk == 0.0 {
        return Err(FitError::CalibrationPoints);
    }
    let slope = skg / skk;
    let rms = (pts.iter().map(|(k, g)| (g - slope * k).powi(2)).sum::<f64>() / pts.len() as f64).sqrt();
    let g_max = pts.iter().map(|(_, g)| g.abs()).fold(0.0, f64::max);
    Ok(GainCalibration {
        slope,
        nonlinearity: if g_max > 0.0 { rms / g_max } else { 0.0 },
        non_monotone: pts.windows(2).any(|w| w[1].1 < w[0].1),
    })
}
