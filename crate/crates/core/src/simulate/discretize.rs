//! Exact one-step Gaussian update for linear SDEs `dz = A z dt + Σ_j b_j dW_j`.
//!
//! The state is `(x, p, N, I)` where `p` is a velocity-like coordinate
//! divided by `Ω_m` (this keeps `A·dt` balanced), `N` is the time integral
//! of the imprecision noise over the current step and `I` that of `x`.

use nalgebra::{Matrix4, SMatrix, SymmetricEigen, Vector4};

pub(crate) const DIM: usize = 4;
pub(crate) type Mat = Matrix4<f64>;
pub(crate) type Vector = Vector4<f64>;

/// Discrete propagator for one sample period.
#[derive(Debug, Clone)]
pub(crate) struct Propagator {
    pub transition: Mat,
    /// Response to a unit force held constant over the step.
    pub force_input: Vector,
    /// Square-root factors of the per-source process noise covariances.
    pub thermal_factor: Mat,
    pub imprecision_factor: Mat,
}

/// Noise source: input direction `b` with white intensity `s`
/// (`⟨ξ(t)ξ(t')⟩ = s·δ(t − t')`).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Source {
    pub direction: Vector,
    pub intensity: f64,
}

impl Propagator {
    pub fn new(drift: Mat, force_dir: Vector, dt: f64, thermal: Source, imprecision: Source) -> Self {
        let transition = (drift * dt).exp();
        Self {
            transition,
            force_input: zoh_input(&drift, &force_dir, dt),
            thermal_factor: sqrt_psd(&process_covariance(&drift, &thermal, dt)),
            imprecision_factor: sqrt_psd(&process_covariance(&drift, &imprecision, dt)),
        }
    }
}

/// `∫_0^dt e^{A s} ds · b` via the exponential of the augmented matrix.
fn zoh_input(drift: &Mat, b: &Vector, dt: f64) -> Vector {
    let mut m = SMatrix::<f64, 5, 5>::zeros();
    m.fixed_view_mut::<DIM, DIM>(0, 0).copy_from(drift);
    m.fixed_view_mut::<DIM, 1>(0, DIM).copy_from(b);
    let e = (m * dt).exp();
    e.fixed_view::<DIM, 1>(0, DIM).into_owned()
}

/// Van Loan: `Q_d = ∫_0^dt e^{A s} s·b bᵀ e^{Aᵀ s} ds`.
pub(crate) fn process_covariance(drift: &Mat, source: &Source, dt: f64) -> Mat {
    let norm = source.direction.norm();
    if norm == 0.0 || source.intensity == 0.0 {
        return Mat::zeros();
    }
    // unit-normalised input keeps the block exponential well scaled
    let u = source.direction / norm;
    let qc = u * u.transpose();
    let mut m = SMatrix::<f64, 8, 8>::zeros();
    m.fixed_view_mut::<DIM, DIM>(0, 0).copy_from(&(-drift));
    m.fixed_view_mut::<DIM, DIM>(0, DIM).copy_from(&qc);
    m.fixed_view_mut::<DIM, DIM>(DIM, DIM).copy_from(&drift.transpose());
    let e = (m * dt).exp();
    let f12 = e.fixed_view::<DIM, DIM>(0, DIM).into_owned();
    let f22 = e.fixed_view::<DIM, DIM>(DIM, DIM).into_owned();
    let q = f22.transpose() * f12 * (source.intensity * norm * norm);
    0.5 * (q + q.transpose())
}

/// Symmetric square root `L` with `L Lᵀ = Q`; negative round-off eigenvalues are clamped.
pub(crate) fn sqrt_psd(q: &Mat) -> Mat {
    let eig = SymmetricEigen::new(*q);
    let mut l = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..DIM {
            l[(i, j)] *= s;
        }
    }
    l
}
