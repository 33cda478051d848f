use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{sigmoid, softplus};
use crate::error::{MfnError, Result};

/// Default floor on the imaginary part of every pole.
pub const Y_MIN: f64 = 1e-3;

/// Learnable conjugate pole pairs: `w_s = a_s + i b_s`,
/// `z_s = x_s + i (y_min + softplus(ŷ_s))`. Each pair also contributes
/// its conjugate, so `f(H) = Σ_s 2 Re(w_s (z_s I − H)⁻¹)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoleSet {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub x: Vec<f64>,
    pub y_raw: Vec<f64>,
    pub y_min: f64,
}

impl PoleSet {
    /// `x` equally spaced on `[−2, 2]`, `Im z = 1`, weights uniform in
    /// `(−0.1, 0.1)`.
    pub fn init(pairs: usize, rng: &mut impl Rng) -> Self {
        Self::init_with(pairs, 1.0, Y_MIN, rng)
    }

    /// As [`PoleSet::init`] with every pole at height `imag` above the
    /// real axis.
    pub fn init_with(pairs: usize, imag: f64, y_min: f64, rng: &mut impl Rng) -> Self {
        let x = if pairs == 1 {
            vec![0.0]
        } else {
            (0..pairs)
                .map(|s| -2.0 + 4.0 * s as f64 / (pairs - 1) as f64)
                .collect()
        };
        let a = (0..pairs).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let b = (0..pairs).map(|_| rng.gen_range(-0.1..0.1)).collect();
        Self {
            a,
            b,
            x,
            y_raw: vec![raw_for_imag(imag, y_min); pairs],
            y_min,
        }
    }

    /// Pole set with the given weights and poles (upper half plane).
    pub fn from_complex(weights: &[Complex64], poles: &[Complex64], y_min: f64) -> Result<Self> {
        if weights.len() != poles.len() {
            return Err(crate::error::shape("weights and poles differ in length"));
        }
        if !(y_min > 0.0) {
            return Err(MfnError::Precondition("y_min must be positive".into()));
        }
        let mut y_raw = Vec::with_capacity(poles.len());
        for z in poles {
            if !(z.im > y_min) {
                return Err(MfnError::Precondition(format!(
                    "pole {z} has imaginary part below the floor {y_min}"
                )));
            }
            y_raw.push(raw_for_imag(z.im, y_min));
        }
        Ok(Self {
            a: weights.iter().map(|w| w.re).collect(),
            b: weights.iter().map(|w| w.im).collect(),
            x: poles.iter().map(|z| z.re).collect(),
            y_raw,
            y_min,
        })
    }

    pub fn pairs(&self) -> usize {
        self.a.len()
    }

    pub fn weight(&self, s: usize) -> Complex64 {
        Complex64::new(self.a[s], self.b[s])
    }

    pub fn pole(&self, s: usize) -> Complex64 {
        Complex64::new(self.x[s], self.y_min + softplus(self.y_raw[s]))
    }

    /// `d Im(z_s) / d ŷ_s`.
    pub fn imag_slope(&self, s: usize) -> f64 {
        sigmoid(self.y_raw[s])
    }

    /// Parameters in the order `a, b, x, ŷ`.
    pub fn to_vec(&self) -> Vec<f64> {
        [&self.a[..], &self.b, &self.x, &self.y_raw].concat()
    }

    pub fn from_vec(values: &[f64], y_min: f64) -> Result<Self> {
        if !values.len().is_multiple_of(4) {
            return Err(crate::error::shape("pole parameter count is not a multiple of 4"));
        }
        let p = values.len() / 4;
        Ok(Self {
            a: values[..p].to_vec(),
            b: values[p..2 * p].to_vec(),
            x: values[2 * p..3 * p].to_vec(),
            y_raw: values[3 * p..].to_vec(),
            y_min,
        })
    }

    /// Pole set whose poles sit exactly on the real axis; used to
    /// exercise singular-resolvent reporting.
    pub fn corrupted_real_axis(x: &[f64]) -> Self {
        let p = x.len();
        Self {
            a: vec![1.0; p],
            b: vec![0.0; p],
            x: x.to_vec(),
            y_raw: vec![f64::NEG_INFINITY; p],
            y_min: 0.0,
        }
    }
}

/// `ŷ` with `y_min + softplus(ŷ) = target`.
pub fn raw_for_imag(target: f64, y_min: f64) -> f64 {
    let t = target - y_min;
    if t > 30.0 {
        t
    } else {
        t.exp_m1().ln()
    }
}

/// `Σ_s 2 Re(w_s / (z_s − λ))`.
pub fn scalar_f(lambda: f64, poles: &PoleSet) -> f64 {
    (0..poles.pairs())
        .map(|s| 2.0 * (poles.weight(s) / (poles.pole(s) - lambda)).re)
        .sum()
}
