use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::dsp::{Spectrum, SpectrumSource};
use crate::model::{minimum_ratio_for, MechanicalMode, ProbeState};
use crate::quad::integrate_resonance;
use crate::simulate::imprecision_psd;
use crate::units::K_B;

/// Number of model parameters, in [`SquashModel::to_array`] order.
pub const N_PARAMS: usize = 5;

/// Closed-loop spectra of a viscously damped oscillator observed through a
/// noisy in-loop sensor. Densities are double-sided in angular frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquashModel {
    /// rad/s.
    pub omega_m: f64,
    /// rad/s.
    pub gamma_m: f64,
    /// Effective viscous gain `G`.
    pub g: f64,
    /// Imprecision floor (m²·s).
    pub s_imp: f64,
    /// Thermal force density over mass squared, `S_F/m²` (m²/s³).
    pub s_force: f64,
}

impl SquashModel {
    /// Model for `mode` at gain `g` with a given floor; `s_force` from the bath temperature.
    pub fn for_mode(mode: &MechanicalMode, g: f64, s_imp: f64) -> Self {
        Self {
            omega_m: mode.omega_m,
            gamma_m: mode.gamma_m,
            g,
            s_imp,
            s_force: mode.thermal_force_psd() / (mode.mass_eff * mode.mass_eff),
        }
    }

    /// Model whose floor is the probe's imprecision density.
    pub fn for_probe(mode: &MechanicalMode, probe: &ProbeState, g: f64) -> Result<Self, crate::error::ModelError> {
        Ok(Self::for_mode(mode, g, imprecision_psd(mode, probe)?))
    }

    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [self.omega_m, self.gamma_m, self.g, self.s_imp, self.s_force]
    }

    pub fn from_array(p: [f64; N_PARAMS]) -> Self {
        Self { omega_m: p[0], gamma_m: p[1], g: p[2], s_imp: p[3], s_force: p[4] }
    }

    fn parts(&self, w: f64) -> (f64, f64, f64) {
        let det = self.omega_m * self.omega_m - w * w;
        let d = det * det;
        let gw2 = self.gamma_m * self.gamma_m * w * w;
        let den = d + gw2 * (1.0 + self.g).powi(2);
        (d, gw2, den)
    }

    /// `S_y(ω)`.
    pub fn in_loop(&self, w: f64) -> f64 {
        let (d, gw2, den) = self.parts(w);
        (self.s_force + self.s_imp * (d + gw2)) / den
    }

    /// `S_x(ω)`.
    pub fn true_displacement(&self, w: f64) -> f64 {
        let (_, gw2, den) = self.parts(w);
        (self.s_force + gw2 * self.g * self.g * self.s_imp) / den
    }

    pub fn density(&self, source: SpectrumSource, w: f64) -> f64 {
        match source {
            SpectrumSource::InLoopY => self.in_loop(w),
            SpectrumSource::TrueX => self.true_displacement(w),
        }
    }

    /// One-sided density in Hz, `2·S(2πf)`.
    pub fn one_sided(&self, source: SpectrumSource, f: f64) -> f64 {
        2.0 * self.density(source, 2.0 * PI * f)
    }

    /// Density as recorded by an integrate-and-dump detector at `detector_rate`
    /// (Hz). Averaging over one period weights the in-loop signal by
    /// `sinc²(f/f_s)` while aliasing returns the white floor, so the recorded
    /// in-loop density is `sinc²·(S_y − S_imp) + S_imp`. True-displacement
    /// spectra are unaffected.
    pub fn detected(&self, source: SpectrumSource, w: f64, detector_rate: Option<f64>) -> f64 {
        let s = self.density(source, w);
        match (source, detector_rate) {
            (SpectrumSource::InLoopY, Some(fs)) => {
                let h = detector_response(w, fs);
                h * (s - self.s_imp) + self.s_imp
            }
            _ => s,
        }
    }

    /// Gradient of [`SquashModel::detected`].
    pub fn detected_gradient(&self, source: SpectrumSource, w: f64, detector_rate: Option<f64>) -> [f64; N_PARAMS] {
        let mut grad = self.gradient(source, w);
        if let (SpectrumSource::InLoopY, Some(fs)) = (source, detector_rate) {
            let h = detector_response(w, fs);
            for g in &mut grad {
                *g *= h;
            }
            grad[3] += 1.0 - h;
        }
        grad
    }

    /// Derivatives of the double-sided density with respect to
    /// `[Ω_m, Γ_m, G, S_imp, S_F/m²]`.
    pub fn gradient(&self, source: SpectrumSource, w: f64) -> [f64; N_PARAMS] {
        let (d, gw2, den) = self.parts(w);
        let g1 = 1.0 + self.g;
        let dd_domega = 4.0 * self.omega_m * (self.omega_m * self.omega_m - w * w);
        // ∂den/∂Γ and ∂den/∂G
        let dden_dgamma = 2.0 * gw2 * g1 * g1 / self.gamma_m;
        let dden_dg = 2.0 * gw2 * g1;
        match source {
            SpectrumSource::InLoopY => {
                let s = (self.s_force + self.s_imp * (d + gw2)) / den;
                [
                    dd_domega * (self.s_imp - s) / den,
                    (2.0 * self.s_imp * gw2 / self.gamma_m - s * dden_dgamma) / den,
                    -s * dden_dg / den,
                    (d + gw2) / den,
                    1.0 / den,
                ]
            }
            SpectrumSource::TrueX => {
                let g2 = self.g * self.g;
                let s = (self.s_force + gw2 * g2 * self.s_imp) / den;
                [
                    -s * dd_domega / den,
                    (2.0 * gw2 * g2 * self.s_imp / self.gamma_m - s * dden_dgamma) / den,
                    (2.0 * gw2 * self.g * self.s_imp - s * dden_dg) / den,
                    gw2 * g2 / den,
                    1.0 / den,
                ]
            }
        }
    }

    /// Effective damping rate `Γ_m(1+G)`.
    pub fn effective_linewidth(&self) -> f64 {
        self.gamma_m * (1.0 + self.g)
    }

    /// Closed-form `⟨x²⟩ = ∫S_x dω/2π = (S_F/m²/Ω_m² + Γ_m²G²S_imp) / (2Γ_m(1+G))`.
    pub fn displacement_variance(&self) -> f64 {
        (self.s_force / (self.omega_m * self.omega_m) + (self.gamma_m * self.g).powi(2) * self.s_imp)
            / (2.0 * self.effective_linewidth())
    }

    /// `⟨x²⟩` by numerical quadrature of `S_x` over all frequencies.
    pub fn displacement_variance_numeric(&self, rel_tol: f64) -> f64 {
        let half = 0.5 * self.effective_linewidth().max(1e-12 * self.omega_m);
        let one_side = integrate_resonance(|w| self.true_displacement(w), self.omega_m, half, 0.0, f64::INFINITY, rel_tol);
        one_side / PI
    }

    /// Ratio of the bare thermal peak to the floor, `S_F/(m²Γ_m²Ω_m²S_imp)`.
    pub fn peak_to_floor(&self) -> f64 {
        self.s_force / (self.gamma_m * self.gamma_m * self.omega_m * self.omega_m * self.s_imp)
    }

    /// Gain above which `S_y(Ω_m)` falls below the floor, `√(1 + peak/floor) − 1`.
    /// This coincides with the optimal cooling gain.
    pub fn resonance_dip_threshold(&self) -> f64 {
        let r = self.peak_to_floor();
        r / ((1.0 + r).sqrt() + 1.0)
    }

    /// Cooling parameter implied by the model; equal to the peak-to-floor ratio.
    pub fn cooling_parameter(&self) -> f64 {
        self.peak_to_floor()
    }

    /// Minimum temperature ratio reachable with this floor.
    pub fn minimum_ratio(&self) -> f64 {
        minimum_ratio_for(self.cooling_parameter())
    }

    /// Equipartition temperature of the model's `S_x`.
    pub fn temperature(&self, mass_eff: f64) -> f64 {
        mass_eff * self.omega_m * self.omega_m * self.displacement_variance() / K_B
    }
}

/// `sinc²(f/f_s)`, the power response of averaging over one sample period.
pub fn detector_response(w: f64, sample_rate: f64) -> f64 {
    let u = 0.5 * w / sample_rate;
    if u == 0.0 {
        1.0
    } else {
        (u.sin() / u).powi(2)
    }
}

/// Averaged-periodogram realisation of `model` on a frequency grid: each bin
/// is the one-sided model value times a unit-mean Gamma variate of shape `averages`.
pub fn synthetic_spectrum<R: Rng + ?Sized>(
    model: &SquashModel,
    source: SpectrumSource,
    freq: &[f64],
    averages: usize,
    rng: &mut R,
) -> Spectrum {
    let k = averages.max(1) as f64;
    let unit = Gamma::new(k, 1.0 / k).expect("positive shape");
    let bin_width = if freq.len() > 1 { freq[1] - freq[0] } else { 1.0 };
    Spectrum {
        freq: freq.to_vec(),
        psd: freq.iter().map(|&f| model.one_sided(source, f) * unit.sample(rng)).collect(),
        resolution_bw: bin_width,
        bin_width,
        averages: averages.max(1),
        source,
    }
}
