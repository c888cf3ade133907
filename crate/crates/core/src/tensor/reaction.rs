use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{commutator_norm2, DecomposedCurvature};

/// Quartic reaction quantities of the evolution equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionTerms {
    /// `|<A, H>|^2`
    pub adot_h2: f64,
    /// `|<A, A>|^2`
    pub aa2: f64,
    /// `|R^perp|^2`
    pub rperp2: f64,
    /// `|R^perp(nu1)|^2`
    pub rperp_nu1_2: f64,
    /// `|hat R^perp|^2`
    pub hat_rperp2: f64,
    /// `|sum h_ring hat A|^2`
    pub h_ring_hat_a2: f64,
    /// `|<hat A, hat A>|^2`
    pub hat_aa2: f64,
}

pub fn reaction_terms(d: &DecomposedCurvature) -> ReactionTerms {
    let m = d.m;
    let mut ah = DMatrix::zeros(d.n, d.n);
    for (x, w) in d.a.iter().zip(d.mean.iter()) {
        ah += x * *w;
    }
    let adot_h2 = ah.norm_squared();

    let mut aa2 = 0.0;
    let mut rperp2 = 0.0;
    for al in 0..m {
        aa2 += d.a[al].norm_squared().powi(2);
        for be in 0..al {
            aa2 += 2.0 * d.a[al].dot(&d.a[be]).powi(2);
            rperp2 += 2.0 * commutator_norm2(&d.a[al], &d.a[be]);
        }
    }

    let k = d.hat_a.len();
    let mut hat_aa2 = 0.0;
    let mut hat_rperp2 = 0.0;
    let mut rperp_nu1_2 = 0.0;
    let mut h_ring_hat_a2 = 0.0;
    for b in 0..k {
        hat_aa2 += d.hat_a[b].norm_squared().powi(2);
        for c in 0..b {
            hat_aa2 += 2.0 * d.hat_a[b].dot(&d.hat_a[c]).powi(2);
            hat_rperp2 += 2.0 * commutator_norm2(&d.hat_a[b], &d.hat_a[c]);
        }
        rperp_nu1_2 += commutator_norm2(&d.h_ring, &d.hat_a[b]);
        h_ring_hat_a2 += d.h_ring.dot(&d.hat_a[b]).powi(2);
    }

    ReactionTerms { adot_h2, aa2, rperp2, rperp_nu1_2, hat_rperp2, h_ring_hat_a2, hat_aa2 }
}

/// Relative residuals of the three cross identities linking the direct and split routes:
/// `|<A,H>|^2 = |H|^2 |h|^2`, `|<A,A>|^2 = |h|^4 + 2|h_ring hat A|^2 + |<hat A,hat A>|^2`,
/// `|R^perp|^2 = |hat R^perp|^2 + 2|R^perp(nu1)|^2`.
pub fn reaction_identity_residuals(d: &DecomposedCurvature, r: &ReactionTerms) -> [f64; 3] {
    let hh = d.h_full2();
    let rel = |lhs: f64, terms: &[f64]| {
        let rhs: f64 = terms.iter().sum();
        let scale = terms.iter().fold(lhs.abs(), |s, t| s.max(t.abs())).max(d.a2 * d.a2);
        if scale == 0.0 {
            0.0
        } else {
            (lhs - rhs).abs() / scale
        }
    };
    [
        rel(r.adot_h2, &[d.h2 * hh]),
        rel(r.aa2, &[hh * hh, 2.0 * r.h_ring_hat_a2, r.hat_aa2]),
        rel(r.rperp2, &[r.hat_rperp2, 2.0 * r.rperp_nu1_2]),
    ]
}

/// `f = c0 |H|^2 - |A|^2`.
pub fn pinching_f(d: &DecomposedCurvature, c0: f64) -> f64 {
    c0 * d.h2 - d.a2
}

/// Relative residual of `(n c0 - 1)/n |H|^2 = |hat A|^2 + |h_ring|^2 + f`.
pub fn pinching_identity_residual(d: &DecomposedCurvature, c0: f64) -> f64 {
    let n = d.n as f64;
    let f = pinching_f(d, c0);
    let lhs = (n * c0 - 1.0) / n * d.h2;
    let scale = lhs.abs().max(d.hat_a2).max(d.h_ring2).max(f.abs()).max(d.a2);
    (lhs - d.hat_a2 - d.h_ring2 - f).abs() / scale
}
