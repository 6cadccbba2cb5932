//! Feedback electronics: bandpass biquad, sample delay line and the
//! band-limited velocity estimator.

use num_complex::Complex64;
use std::collections::VecDeque;
use std::f64::consts::PI;

/// Second-order bandpass with unity gain and zero phase at its center
/// (bilinear-transform design, constant 0 dB peak).
#[derive(Debug, Clone)]
pub struct Bandpass {
    b0: f64,
    b2: f64,
    a1: f64,
    a2: f64,
    s1: f64,
    s2: f64,
}

impl Bandpass {
    pub fn new(center: f64, bandwidth: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * center / sample_rate;
        let q = center / bandwidth;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        Self {
            b0: alpha / a0,
            b2: -alpha / a0,
            a1: -2.0 * w0.cos() / a0,
            a2: (1.0 - alpha) / a0,
            s1: 0.0,
            s2: 0.0,
        }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        // transposed direct form II; b1 = 0
        let y = self.b0 * x + self.s1;
        self.s1 = -self.a1 * y + self.s2;
        self.s2 = self.b2 * x - self.a2 * y;
        y
    }

    /// Complex frequency response at `f` (Hz).
    pub fn response(&self, f: f64, sample_rate: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / sample_rate);
        let z2 = z1 * z1;
        (self.b0 + self.b2 * z2) / (1.0 + self.a1 * z1 + self.a2 * z2)
    }
}

/// Fixed delay of `len` samples, zero-filled at start-up.
#[derive(Debug, Clone)]
pub struct DelayLine {
    buf: VecDeque<f64>,
}

impl DelayLine {
    pub fn new(len: usize) -> Self {
        Self { buf: std::iter::repeat_n(0.0, len).collect() }
    }

    #[inline]
    pub fn push(&mut self, x: f64) -> f64 {
        if self.buf.is_empty() {
            return x;
        }
        self.buf.push_back(x);
        self.buf.pop_front().unwrap_or(0.0)
    }
}

/// Causal central difference `(y_k − y_{k−2}) / 2dt` followed by a bandpass.
#[derive(Debug, Clone)]
pub struct VelocityEstimator {
    prev: [f64; 2],
    sample_rate: f64,
    filter: Bandpass,
}

impl VelocityEstimator {
    pub fn new(center: f64, bandwidth: f64, sample_rate: f64) -> Self {
        Self { prev: [0.0; 2], sample_rate, filter: Bandpass::new(center, bandwidth, sample_rate) }
    }

    #[inline]
    pub fn process(&mut self, y: f64) -> f64 {
        let d = 0.5 * (y - self.prev[1]) * self.sample_rate;
        self.prev = [y, self.prev[0]];
        self.filter.process(d)
    }
}
