use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("no transduction: cooperativity is zero")]
    NoTransduction,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid simulation config `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("loop unstable at t = {time:.6e} s (|x| = {amplitude:.3e} m)")]
    LoopUnstable { time: f64, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DspError {
    #[error("series of {len} samples is shorter than one segment of {segment}")]
    TooShort { len: usize, segment: usize },
    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: &'static str, reason: String },
    #[error("in-loop spectra are biased; fit first")]
    InLoopSpectrum,
    #[error("integration band covers only {fraction:.4} of the resonance weight")]
    BandTooNarrow { fraction: f64 },
    #[error("degenerate input: zero variance")]
    Degenerate,
    #[error("only {available:.0} effective samples, need {required:.0}")]
    InsufficientSamples { available: f64, required: f64 },
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("spectrum bin {index} has negative or non-finite value")]
    InvalidBin { index: usize },
    #[error("invalid fit setup: {0}")]
    InvalidSetup(String),
    #[error("fit did not converge; refusing to infer temperature")]
    NotConverged,
    #[error("gain calibration needs at least 3 sweep points including K = 0")]
    CalibrationPoints,
    #[error("temperature routes disagree: closed form {closed_form:.3} K vs integral {integral:.3} K")]
    TemperatureMismatch { closed_form: f64, integral: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}
