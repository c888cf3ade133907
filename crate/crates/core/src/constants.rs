//! Dimensional pinching constants.

use serde::{Deserialize, Serialize};

use crate::error::{PinchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinchingConstants {
    pub n: usize,
    pub eps0: f64,
    /// Sharp pinching constant `min{4/(3n), 3(n+1)/(2n(n+2))}`.
    pub c_n: f64,
    pub c1: f64,
    pub c2: f64,
    /// Working pinching constant used in `f = c0 |H|^2 - |A|^2`.
    pub c0: f64,
    pub delta: f64,
    pub sigma: f64,
    /// Derived slack `2n(n+2) eps0 / (3(n-1))`.
    pub eps: f64,
}

/// `4/(3n)`.
pub fn quadratic_bound(n: usize) -> f64 {
    4.0 / (3.0 * n as f64)
}

/// `3(n+1)/(2n(n+2))`.
pub fn critical_bound(n: usize) -> f64 {
    let n = n as f64;
    3.0 * (n + 1.0) / (2.0 * n * (n + 2.0))
}

/// `min{4/(3n), 3(n+1)/(2n(n+2))}`.
pub fn sharp_constant(n: usize) -> f64 {
    quadratic_bound(n).min(critical_bound(n))
}

pub fn slack_eps(n: usize, eps0: f64) -> f64 {
    let nf = n as f64;
    2.0 * nf * (nf + 2.0) * eps0 / (3.0 * (nf - 1.0))
}

pub fn make_constants(n: usize, eps0: f64) -> Result<PinchingConstants> {
    if n < 5 {
        return Err(PinchError::UnsupportedDimension(n));
    }
    if !eps0.is_finite() || eps0 < 0.0 {
        return Err(PinchError::InvalidSlack(format!("eps0 = {eps0} must be a finite non-negative number")));
    }
    let nf = n as f64;
    let c_n = sharp_constant(n);
    let q = quadratic_bound(n);
    let c1 = q.min(1.0 / (nf - 1.0));
    let c2 = q.min(1.0 / (nf - 2.0));
    let eps = slack_eps(n, eps0);
    let base_delta = 1.0 / (5.0 * nf - 8.0);
    let (c0, delta) = if n <= 7 {
        if eps0 <= 0.0 {
            return Err(PinchError::InvalidSlack(format!("n = {n} needs eps0 > 0")));
        }
        let c0 = c_n - eps0;
        if c0 <= 1.0 / nf {
            return Err(PinchError::InvalidSlack(format!(
                "eps0 = {eps0} makes c0 = {c0} <= 1/n"
            )));
        }
        (c0, base_delta.min(eps))
    } else {
        (q, base_delta)
    };
    let delta = delta.min(0.5);
    Ok(PinchingConstants { n, eps0, c_n, c1, c2, c0, delta, sigma: delta, eps })
}

impl PinchingConstants {
    /// Replace `c0` and/or `delta`, keeping them inside their admissible ranges.
    pub fn with_overrides(mut self, c0: Option<f64>, delta: Option<f64>, sigma: Option<f64>) -> Result<Self> {
        let inv_n = 1.0 / self.n as f64;
        if let Some(c0) = c0 {
            if c0 > self.c_n * (1.0 + 1e-15) {
                return Err(PinchError::Precondition(format!("c0 exceeds c_n ({c0} > {})", self.c_n)));
            }
            if c0 <= inv_n {
                return Err(PinchError::Precondition(format!("c0 must exceed 1/n ({c0} <= {inv_n})")));
            }
            self.c0 = c0;
        }
        if let Some(d) = delta {
            if !(d > 0.0 && d <= 0.5) {
                return Err(PinchError::Precondition(format!("delta must lie in (0, 1/2], got {d}")));
            }
            self.delta = d;
            self.sigma = d;
        }
        if let Some(s) = sigma {
            if !(s > 0.0 && s < 1.0) {
                return Err(PinchError::Precondition(format!("sigma must lie in (0, 1), got {s}")));
            }
            self.sigma = s;
        }
        Ok(self)
    }

    /// Default slack used by the batch runs: zero for n >= 8, a small positive value below.
    pub fn default_eps0(n: usize) -> f64 {
        match n {
            5 => 0.01,
            6 => 0.005,
            7 => 0.001,
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n8_values() {
        let k = make_constants(8, 0.0).unwrap();
        assert!((k.c_n - 1.0 / 6.0).abs() < 1e-15);
        assert!((k.c0 - 1.0 / 6.0).abs() < 1e-15);
        assert!((k.delta - 1.0 / 32.0).abs() < 1e-15);
        assert_eq!(k.sigma, k.delta);
    }

    #[test]
    fn low_dimensions() {
        let k = make_constants(5, 0.01).unwrap();
        assert!((k.c_n - 9.0 / 35.0).abs() < 1e-15);
        assert!((k.c0 - (9.0 / 35.0 - 0.01)).abs() < 1e-15);
        let k7 = make_constants(7, 0.001).unwrap();
        assert!((k7.c_n - 4.0 / 21.0).abs() < 1e-15);
        assert!(matches!(make_constants(4, 0.0), Err(PinchError::UnsupportedDimension(4))));
        assert!(matches!(make_constants(5, 0.1), Err(PinchError::InvalidSlack(_))));
        assert!(matches!(make_constants(6, 0.0), Err(PinchError::InvalidSlack(_))));
    }

    #[test]
    fn override_checks() {
        let k = make_constants(8, 0.0).unwrap();
        let e = k.with_overrides(Some(0.5), None, None).unwrap_err();
        assert!(e.to_string().contains("c0 exceeds c_n"));
    }
}
