//! Radial basis `sin(kπr/r_c)/r` times a polynomial cutoff envelope.

/// Number of radial basis functions.
pub const RADIAL_FUNCTIONS: usize = 8;

const ENVELOPE_POWER: i32 = 6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialBasis {
    pub cutoff: f64,
}

impl RadialBasis {
    pub fn new(cutoff: f64) -> Self {
        Self { cutoff }
    }

    /// Smooth envelope: 1 at r = 0, vanishing with its first two
    /// derivatives at r_c.
    pub fn envelope(&self, r: f64) -> f64 {
        let u = r / self.cutoff;
        if u >= 1.0 {
            return 0.0;
        }
        let p = ENVELOPE_POWER as f64;
        let up = u.powi(ENVELOPE_POWER);
        1.0 - 0.5 * (p + 1.0) * (p + 2.0) * up + p * (p + 2.0) * up * u
            - 0.5 * p * (p + 1.0) * up * u * u
    }

    pub fn eval(&self, r: f64) -> [f64; RADIAL_FUNCTIONS] {
        let mut out = [0.0; RADIAL_FUNCTIONS];
        let env = self.envelope(r);
        if env == 0.0 || r <= 0.0 {
            return out;
        }
        let pref = (2.0 / self.cutoff).sqrt() * env / r;
        for (k, o) in out.iter_mut().enumerate() {
            let kk = (k + 1) as f64;
            *o = pref * (kk * std::f64::consts::PI * r / self.cutoff).sin();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vanishes_at_cutoff() {
        let rb = RadialBasis::new(3.0);
        assert!(rb.eval(3.0).iter().all(|&v| v == 0.0));
        assert!(rb.eval(2.999).iter().all(|&v| v.abs() < 1e-8));
        assert!(rb.eval(1.0).iter().any(|&v| v.abs() > 0.1));
        assert_eq!(rb.envelope(0.0), 1.0);
        assert!(rb.envelope(3.0 - 1e-4).abs() < 1e-9);
    }
}
