//! Digital Butterworth low-pass as a cascade of second-order sections.
//!
//! Each analog pole pair is mapped through the bilinear transform with the
//! cutoff prewarped, so the digital response is exactly −3.01 dB there.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Direct-form-II-transposed biquad `(b0 + b1 z⁻¹ + b2 z⁻²)/(1 + a1 z⁻¹ + a2 z⁻²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Butterworth {
    pub sections: Vec<Biquad>,
    pub sample_rate_hz: f64,
}

impl Butterworth {
    pub fn lowpass(order: usize, cutoff_hz: f64, sample_rate_hz: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Invalid("filter order must be at least 1".into()));
        }
        if !(cutoff_hz > 0.0 && cutoff_hz < 0.5 * sample_rate_hz) {
            return Err(Error::Invalid(format!(
                "cutoff {cutoff_hz} Hz must lie below Nyquist ({} Hz)",
                0.5 * sample_rate_hz
            )));
        }
        let k = (PI * cutoff_hz / sample_rate_hz).tan();
        let mut sections = Vec::new();
        for i in 1..=order / 2 {
            let q = 1.0 / (2.0 * ((2 * i - 1) as f64 * PI / (2 * order) as f64).sin());
            let norm = 1.0 + k / q + k * k;
            let b0 = k * k / norm;
            sections.push(Biquad {
                b: [b0, 2.0 * b0, b0],
                a: [2.0 * (k * k - 1.0) / norm, (1.0 - k / q + k * k) / norm],
            });
        }
        if order % 2 == 1 {
            let norm = 1.0 + k;
            sections.push(Biquad {
                b: [k / norm, k / norm, 0.0],
                a: [(k - 1.0) / norm, 0.0],
            });
        }
        Ok(Self {
            sections,
            sample_rate_hz,
        })
    }

    /// Complex response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * freq_hz / self.sample_rate_hz);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|s| (s.b[0] + s.b[1] * z1 + s.b[2] * z2) / (1.0 + s.a[0] * z1 + s.a[1] * z2))
            .product()
    }

    /// Filter a complex sequence from rest.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut w1, mut w2) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
            for v in y.iter_mut() {
                let input = *v;
                let out = s.b[0] * input + w1;
                w1 = s.b[1] * input - s.a[0] * out + w2;
                w2 = s.b[2] * input - s.a[1] * out;
                *v = out;
            }
        }
        y
    }
}
