//! Physical constants and the unit conventions shared by every module.
//!
//! Variances of optical quadratures are in shot-noise units with vacuum = 1/2.
//! Spectral densities come in two flavours:
//!
//! * double-sided, angular: `S(ω)` with `⟨q²⟩ = ∫_{-∞}^{∞} S(ω) dω/2π`. All
//!   physics formulas (susceptibilities, thermal force, imprecision) use this.
//! * one-sided, Hz: `S₁(f)` with `⟨q²⟩ = ∫_0^∞ S₁(f) df`. Every spectrum that
//!   crosses a module boundary or a file uses this.
//!
//! The conversion `S₁(f) = 2·S(2πf)` lives here and nowhere else.

use std::f64::consts::PI;

/// Reduced Planck constant (J s).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant (J/K).
pub const K_B: f64 = 1.380_649e-23;
/// Vacuum quadrature variance.
pub const VACUUM_VARIANCE: f64 = 0.5;

pub fn hz_to_angular(f: f64) -> f64 {
    2.0 * PI * f
}

pub fn angular_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Quadrature variance expressed in dB relative to vacuum (negative = squeezed).
pub fn variance_to_db(v: f64) -> f64 {
    10.0 * (v / VACUUM_VARIANCE).log10()
}

/// Inverse of [`variance_to_db`].
pub fn db_to_variance(db: f64) -> f64 {
    VACUUM_VARIANCE * 10f64.powf(db / 10.0)
}

/// Variance of a state squeezed `db_below` dB below vacuum (8 dB squeezing → `db_below = 8`).
pub fn squeezed_variance(db_below: f64) -> f64 {
    db_to_variance(-db_below)
}

/// Double-sided angular density → one-sided density in Hz.
pub fn two_sided_to_one_sided(s: f64) -> f64 {
    2.0 * s
}

/// One-sided density in Hz → double-sided angular density.
pub fn one_sided_to_two_sided(s: f64) -> f64 {
    0.5 * s
}

/// Per-sample variance of a white sequence sampled at `sample_rate` whose
/// double-sided density is `s`.
pub fn white_sample_variance(s: f64, sample_rate: f64) -> f64 {
    s * sample_rate
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn db_round_trip() {
        assert!((variance_to_db(0.5)).abs() < 1e-15);
        assert!((squeezed_variance(8.0) - 0.079_245).abs() < 1e-6);
        for db in [-12.0, -1.9, 0.0, 3.0, 9.0] {
            assert!((variance_to_db(db_to_variance(db)) - db).abs() < 1e-12);
        }
    }

    #[test]
    fn sided_conversion_is_inverse() {
        let s = 3.7e-30;
        assert_eq!(one_sided_to_two_sided(two_sided_to_one_sided(s)), s);
    }
}
