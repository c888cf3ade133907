//! Exact `O(p+1) x O(q+1)`-symmetric solutions `S^p(a) x S^q(b)`.
//!
//! Under the flow the radii obey `a' = -p/a`, `b' = -q/b`; `q = 0` is the round sphere.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{PinchError, Result};
use crate::format::fmt17;
use crate::tensor::{decompose_curvature, CurvaturePoint, DecomposedCurvature};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductSphereState {
    pub p: usize,
    pub q: usize,
    pub a: f64,
    pub b: f64,
    pub t: f64,
}

impl ProductSphereState {
    pub fn new(p: usize, q: usize, a: f64, b: f64) -> Result<Self> {
        if p == 0 {
            return Err(PinchError::InvalidInput("p must be at least 1".into()));
        }
        if !(a > 0.0) || (q > 0 && !(b > 0.0)) {
            return Err(PinchError::InvalidInput("radii must be positive".into()));
        }
        Ok(ProductSphereState { p, q, a, b, t: 0.0 })
    }

    pub fn round_sphere(p: usize, a: f64) -> Result<Self> {
        Self::new(p, 0, a, f64::INFINITY)
    }

    pub fn n(&self) -> usize {
        self.p + self.q
    }

    fn uv(&self) -> (f64, f64) {
        let u = self.p as f64 / (self.a * self.a);
        let v = if self.q == 0 { 0.0 } else { self.q as f64 / (self.b * self.b) };
        (u, v)
    }

    /// Time left until the first factor collapses.
    pub fn collapse_time(&self) -> f64 {
        let ta = self.a * self.a / (2.0 * self.p as f64);
        let tb = if self.q == 0 { f64::INFINITY } else { self.b * self.b / (2.0 * self.q as f64) };
        self.t + ta.min(tb)
    }
}

/// Closed-form curvature invariants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductInvariants {
    pub a2: f64,
    pub h2: f64,
    pub hat_a2: f64,
    pub h_ring2: f64,
    pub h_ring_hat_a2: f64,
    pub hat_aa2: f64,
    pub rperp2: f64,
}

pub fn product_sphere_invariants(s: &ProductSphereState) -> ProductInvariants {
    let (u, v) = s.uv();
    let (p, q) = (s.p as f64, s.q as f64);
    let n = p + q;
    let h2 = p * u + q * v;
    let hat_a2 = n * u * v / h2;
    let h_full2 = (p * u * u + q * v * v) / h2;
    let h_ring_hat_a2 = p * q * (u - v).powi(2) * u * v / (h2 * h2);
    ProductInvariants {
        a2: u + v,
        h2,
        hat_a2,
        h_ring2: h_full2 - h2 / n,
        h_ring_hat_a2,
        hat_aa2: hat_a2 * hat_a2,
        rperp2: 0.0,
    }
}

/// The second fundamental form in the frame (radial of the first factor, radial of the second).
pub fn product_sphere_point(s: &ProductSphereState) -> CurvaturePoint {
    let n = s.n();
    let mut a1 = DMatrix::zeros(n, n);
    for i in 0..s.p {
        a1[(i, i)] = 1.0 / s.a;
    }
    let mut a = vec![a1];
    if s.q > 0 {
        let mut a2 = DMatrix::zeros(n, n);
        for i in s.p..n {
            a2[(i, i)] = 1.0 / s.b;
        }
        a.push(a2);
    }
    CurvaturePoint::orthonormal(a).expect("diagonal forms are valid")
}

pub fn product_sphere_curvature(s: &ProductSphereState) -> Result<DecomposedCurvature> {
    decompose_curvature(&product_sphere_point(s))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<ProductSphereState>,
    /// Set when the requested end time reached the collapse time.
    pub truncated: bool,
    pub collapse_time: f64,
}

fn rk4_radii(p: f64, q: f64, a: f64, b: f64, h: f64) -> (f64, f64) {
    let fa = |x: f64| -p / x;
    let fb = |x: f64| if q == 0.0 { 0.0 } else { -q / x };
    let (ka1, kb1) = (fa(a), fb(b));
    let (ka2, kb2) = (fa(a + 0.5 * h * ka1), fb(b + 0.5 * h * kb1));
    let (ka3, kb3) = (fa(a + 0.5 * h * ka2), fb(b + 0.5 * h * kb2));
    let (ka4, kb4) = (fa(a + h * ka3), fb(b + h * kb3));
    (
        a + h / 6.0 * (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4),
        b + h / 6.0 * (kb1 + 2.0 * kb2 + 2.0 * kb3 + kb4),
    )
}

/// Classical RK4 at fixed `dt`; the last step is shortened to land on `t_end`.
pub fn evolve_product_sphere(s0: &ProductSphereState, t_end: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !(t_end >= s0.t) {
        return Err(PinchError::InvalidInput("need dt > 0 and t_end >= t0".into()));
    }
    let collapse = s0.collapse_time();
    let (end, truncated) = if t_end >= collapse { (collapse - dt, true) } else { (t_end, false) };
    let mut states = vec![*s0];
    let mut s = *s0;
    let (p, q) = (s.p as f64, s.q as f64);
    let steps = ((end - s0.t) / dt).ceil().max(0.0) as u64;
    for k in 0..steps {
        let t_next = if k + 1 == steps { end } else { s0.t + (k + 1) as f64 * dt };
        let h = t_next - s.t;
        if h <= 0.0 {
            break;
        }
        let (a, b) = rk4_radii(p, q, s.a, s.b, h);
        s = ProductSphereState { a, b, t: t_next, ..s };
        states.push(s);
    }
    Ok(Trajectory { states, truncated, collapse_time: collapse })
}

/// One row of the trajectory table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub f: f64,
    pub pinch_ratio: f64,
    pub hat_a2: f64,
    pub ratio_f_sigma: f64,
    pub ratio_h_sigma: f64,
}

pub fn trajectory_row(s: &ProductSphereState, c0: f64, sigma: f64) -> TrajectoryRow {
    let inv = product_sphere_invariants(s);
    let f = c0 * inv.h2 - inv.a2;
    TrajectoryRow {
        t: s.t,
        a: s.a,
        b: s.b,
        f,
        pinch_ratio: inv.a2 / inv.h2,
        hat_a2: inv.hat_a2,
        ratio_f_sigma: if f > 0.0 { inv.hat_a2 / f.powf(1.0 - sigma) } else { f64::NAN },
        ratio_h_sigma: inv.hat_a2 / inv.h2.powf(1.0 - 0.5 * sigma),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub f_increasing: bool,
    pub ratio_f_nonincreasing: bool,
    pub ratio_h_bounded: bool,
    /// Largest relative decrease of `f` between consecutive states.
    pub worst_f_drop: f64,
    /// Largest relative increase of `|hat A|^2 / f^(1-sigma)`.
    pub worst_ratio_f_rise: f64,
    /// Largest relative excess of `|hat A|^2 / |H|^(2-sigma)` over its initial value.
    pub worst_ratio_h_excess: f64,
    pub rows: Vec<TrajectoryRow>,
}

pub const MONOTONE_TOLERANCE: f64 = 1e-10;

/// `f` must increase, `|hat A|^2/f^(1-sigma)` must not increase and
/// `|hat A|^2/|H|^(2-sigma)` must stay below its initial value, step by step.
pub fn monotonicity_report(traj: &Trajectory, c0: f64, sigma: f64) -> Result<MonotonicityReport> {
    let first = traj.states.first().ok_or_else(|| PinchError::InvalidInput("empty trajectory".into()))?;
    let rows: Vec<TrajectoryRow> = traj.states.iter().map(|s| trajectory_row(s, c0, sigma)).collect();
    if !(rows[0].f > 0.0) {
        return Err(PinchError::OutsidePinchingCone { f: rows[0].f });
    }
    let (p, q) = (first.p as f64, first.q as f64);
    let mut f_increasing = true;
    let mut worst_f_drop = f64::NEG_INFINITY;
    let mut worst_ratio_f_rise = f64::NEG_INFINITY;
    let mut worst_ratio_h_excess = f64::NEG_INFINITY;
    for (w, s) in rows.windows(2).zip(traj.states.iter().skip(1)) {
        let (u, v) = s.uv();
        let dfdt = 2.0 * ((c0 * p - 1.0) * u * u + (c0 * q - 1.0) * v * v);
        let drop = (w[0].f - w[1].f) / w[0].f.abs().max(1.0);
        worst_f_drop = worst_f_drop.max(drop);
        if !(dfdt > 0.0) || drop > MONOTONE_TOLERANCE {
            f_increasing = false;
        }
        let rise = (w[1].ratio_f_sigma - w[0].ratio_f_sigma) / w[0].ratio_f_sigma.abs().max(1.0);
        worst_ratio_f_rise = worst_ratio_f_rise.max(if rise.is_nan() { f64::INFINITY } else { rise });
        let excess = (w[1].ratio_h_sigma - rows[0].ratio_h_sigma) / rows[0].ratio_h_sigma.abs().max(1.0);
        worst_ratio_h_excess = worst_ratio_h_excess.max(excess);
    }
    Ok(MonotonicityReport {
        f_increasing,
        ratio_f_nonincreasing: worst_ratio_f_rise <= MONOTONE_TOLERANCE,
        ratio_h_bounded: worst_ratio_h_excess <= MONOTONE_TOLERANCE,
        worst_f_drop,
        worst_ratio_f_rise,
        worst_ratio_h_excess,
        rows,
    })
}

pub const TRAJECTORY_HEADER: &str = "t,a,b,f,pinch_ratio,hatA2,ratio_f_sigma,ratio_H_sigma";

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], mut w: W) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        let cols = [r.t, r.a, r.b, r.f, r.pinch_ratio, r.hat_a2, r.ratio_f_sigma, r.ratio_h_sigma];
        let line: Vec<String> = cols.iter().map(|x| fmt17(*x)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_matches_closed_form() {
        let s = ProductSphereState::new(3, 2, 1.0, 1.5).unwrap();
        let tr = evolve_product_sphere(&s, 0.1, 1e-4).unwrap();
        let last = tr.states.last().unwrap();
        assert!((last.t - 0.1).abs() < 1e-15);
        assert!((last.a - (1.0 - 6.0 * 0.1f64).sqrt()).abs() < 1e-12);
        assert!((last.b - (2.25 - 4.0 * 0.1f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn truncates_at_collapse() {
        let s = ProductSphereState::round_sphere(2, 1.0).unwrap();
        let tr = evolve_product_sphere(&s, 1.0, 1e-3).unwrap();
        assert!(tr.truncated);
        assert!((tr.collapse_time - 0.25).abs() < 1e-15);
        assert!(tr.states.last().unwrap().t < 0.25);
    }

    #[test]
    fn unpinched_start_rejected() {
        let s = ProductSphereState::new(4, 4, 1.0, 1.0).unwrap();
        let tr = evolve_product_sphere(&s, 0.01, 1e-3).unwrap();
        assert!(matches!(monotonicity_report(&tr, 1.0 / 6.0, 1.0 / 32.0), Err(PinchError::OutsidePinchingCone { .. })));
    }
}
