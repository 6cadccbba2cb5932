//! Adaptive quadrature for sharply peaked spectral integrands.

use std::f64::consts::FRAC_PI_2;

/// Adaptive Simpson integration of `f` over `[a, b]` to relative tolerance `rel_tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel_tol: f64) -> f64 {
    // seed with a coarse composite rule so narrow features are not missed
    const PANELS: usize = 64;
    let h = (b - a) / PANELS as f64;
    let mut coarse = 0.0;
    let mut panels = Vec::with_capacity(PANELS);
    for i in 0..PANELS {
        let lo = a + i as f64 * h;
        let hi = if i + 1 == PANELS { b } else { lo + h };
        let (flo, fmid, fhi) = (f(lo), f(0.5 * (lo + hi)), f(hi));
        let s = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        coarse += s.abs();
        panels.push((lo, hi, flo, fmid, fhi, s));
    }
    let abs_tol = (rel_tol * coarse).max(f64::MIN_POSITIVE);
    panels
        .into_iter()
        .map(|(lo, hi, flo, fmid, fhi, s)| refine(f, lo, hi, flo, fmid, fhi, s, abs_tol / PANELS as f64, 40))
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn refine<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        refine(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + refine(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Integrates `f(ω)` over `ω ∈ (lo, hi)` where `f` has a resonance of
/// half-width `half_width` at `center`. The substitution
/// `ω = center + half_width·tan θ` flattens the Lorentzian core; `hi` may be
/// `f64::INFINITY` provided `f` decays at least as `1/ω²`.
pub fn integrate_resonance<F: Fn(f64) -> f64>(f: F, center: f64, half_width: f64, lo: f64, hi: f64, rel_tol: f64) -> f64 {
    let theta = |w: f64| ((w - center) / half_width).atan();
    let t_lo = theta(lo);
    let t_hi = if hi.is_infinite() { FRAC_PI_2 } else { theta(hi) };
    let g = |t: f64| {
        let c = t.cos();
        if c <= 0.0 {
            return 0.0;
        }
        let w = center + half_width * t.tan();
        f(w) * half_width / (c * c)
    };
    adaptive_simpson(&g, t_lo, t_hi, rel_tol)
}
