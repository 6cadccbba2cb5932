//! Squeezed-light feedback cooling of a mechanical mode: closed-form
//! predictions, an in-loop Monte Carlo, and the spectral analysis chain that
//! turns simulated or measured records into effective temperatures.

// negated comparisons deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsp;
pub mod error;
pub mod model;
pub mod quad;
pub mod simulate;
pub mod specfit;
pub mod units;

pub use error::{DspError, FitError, ModelError, SimError};
