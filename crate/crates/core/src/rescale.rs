//! The logarithmic time change `F_R(x) = log((R-1)x + 1) / log R`.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescaleR {
    r: f64,
    log_r: f64,
}

impl RescaleR {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 1.0) || !r.is_finite() {
            return Err(Error::InvalidParameter(format!("rescaling needs R > 1, got {r}")));
        }
        Ok(Self { r, log_r: r.ln() })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn log_r(&self) -> f64 {
        self.log_r
    }

    pub fn f(&self, x: f64) -> f64 {
        ((self.r - 1.0) * x).ln_1p() / self.log_r
    }

    pub fn f_inv(&self, x: f64) -> f64 {
        (x * self.log_r).exp_m1() / (self.r - 1.0)
    }

    /// `δ_N F_R(x) = N (F_R(x + 1/N) - F_R(x))`.
    pub fn delta_n(&self, n: u32, x: f64) -> f64 {
        let n = n as f64;
        n * (self.f(x + 1.0 / n) - self.f(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_reference_value() {
        for r in [1.5, 10.0, 1e6] {
            let f = RescaleR::new(r).unwrap();
            assert!(f.f(0.0).abs() < 1e-15);
            assert!((f.f(1.0) - 1.0).abs() < 1e-15);
        }
        let f = RescaleR::new(10.0).unwrap();
        assert!((f.f(0.5) - 5.5f64.ln() / 10f64.ln()).abs() < 1e-15);
        assert!((f.f(0.5) - 0.740363).abs() < 1e-6);
    }

    #[test]
    fn roundtrip() {
        for r in [2.0, 10.0, 1e8] {
            let f = RescaleR::new(r).unwrap();
            for i in 0..=1000 {
                let x = i as f64 / 1000.0;
                assert!((f.f_inv(f.f(x)) - x).abs() < 1e-12);
                assert!((f.f(f.f_inv(x)) - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_r_at_most_one() {
        assert!(RescaleR::new(1.0).is_err());
        assert!(RescaleR::new(0.5).is_err());
    }

    #[test]
    fn discrete_derivative() {
        let f = RescaleR::new(10.0).unwrap();
        // sums of δ_N F_R / N over a grid telescope to F_R(1) = 1
        let n = 50;
        let s: f64 = (0..n).map(|w| f.delta_n(n, w as f64 / n as f64) / n as f64).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}
