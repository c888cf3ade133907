use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::constants::{critical_bound, quadratic_bound, PinchingConstants};
use crate::error::{PinchError, Result};
use crate::jet::{CurvatureJet, GradientTerms};
use crate::tensor::{reaction_terms, DecomposedCurvature, ReactionTerms};

/// Slack below `-SLACK_TOLERANCE * scale^4` counts as a violation.
pub const SLACK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    AbEstimates,
    ReactionUpper,
    ReactionLower,
    ReactionCombined,
    FEvolutionLower,
    BochnerHatA,
    BochnerF,
    GradientQ,
    GradientCombined,
}

impl Lemma {
    pub const ALL: [Lemma; 9] = [
        Lemma::AbEstimates,
        Lemma::ReactionUpper,
        Lemma::ReactionLower,
        Lemma::ReactionCombined,
        Lemma::FEvolutionLower,
        Lemma::BochnerHatA,
        Lemma::BochnerF,
        Lemma::GradientQ,
        Lemma::GradientCombined,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Lemma::AbEstimates => "ab_estimates",
            Lemma::ReactionUpper => "reaction_upper",
            Lemma::ReactionLower => "reaction_lower",
            Lemma::ReactionCombined => "reaction_combined",
            Lemma::FEvolutionLower => "f_evolution_lower",
            Lemma::BochnerHatA => "bochner_hat_a",
            Lemma::BochnerF => "bochner_f",
            Lemma::GradientQ => "gradient_q",
            Lemma::GradientCombined => "gradient_combined",
        }
    }

    pub fn parse(s: &str) -> Option<Lemma> {
        Lemma::ALL.into_iter().find(|l| l.name() == s)
    }

    pub fn needs_jet(self) -> bool {
        matches!(
            self,
            Lemma::FEvolutionLower | Lemma::BochnerHatA | Lemma::BochnerF | Lemma::GradientQ | Lemma::GradientCombined
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`
    pub slack: f64,
    pub inputs_hash: String,
}

/// One side-by-side evaluation `lhs <= rhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Side {
    pub branch: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

impl Side {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradScalars {
    pub grad_a2: f64,
    pub grad_mean2: f64,
    pub grad_nu1_2: f64,
    pub proj_ring2: f64,
    pub proj_hat2: f64,
    pub hat_grad_hat2: f64,
    pub grad_hat_a2: f64,
    pub q_dot: f64,
}

/// Every scalar the checkers read, computed once per sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleScalars {
    pub n: usize,
    pub a2: f64,
    pub h2: f64,
    pub h_full2: f64,
    pub hat_a2: f64,
    pub h_ring2: f64,
    pub reaction: ReactionTerms,
    pub grad: Option<GradScalars>,
}

impl SampleScalars {
    pub fn from_point(d: &DecomposedCurvature) -> Self {
        SampleScalars {
            n: d.n,
            a2: d.a2,
            h2: d.h2,
            h_full2: d.h_full2(),
            hat_a2: d.hat_a2,
            h_ring2: d.h_ring2,
            reaction: reaction_terms(d),
            grad: None,
        }
    }

    pub fn from_gradients(g: &GradientTerms) -> Self {
        let mut s = Self::from_point(&g.point);
        s.grad = Some(GradScalars {
            grad_a2: g.grad_a2,
            grad_mean2: g.grad_mean2,
            grad_nu1_2: g.grad_nu1_2,
            proj_ring2: g.proj_ring2,
            proj_hat2: g.proj_hat2,
            hat_grad_hat2: g.hat_grad_hat2,
            grad_hat_a2: g.grad_hat_a2,
            q_dot: g.q_dot,
        });
        s
    }

    pub fn f(&self, c0: f64) -> f64 {
        c0 * self.h2 - self.a2
    }

    /// `max(|A|^2, |T|)^2`, the homogeneity weight of every inequality.
    pub fn scale4(&self) -> f64 {
        let t = self.grad.map(|g| g.grad_a2.sqrt()).unwrap_or(0.0);
        let s = self.a2.max(t);
        s * s
    }
}

fn within(x: f64, bound: f64) -> bool {
    x <= bound + 1e-13 * bound.abs()
}

fn pinched_f(s: &SampleScalars, c0: f64) -> Result<f64> {
    let f = s.f(c0);
    if !(f > 0.0) {
        return Err(PinchError::OutsidePinchingCone { f });
    }
    Ok(f)
}

fn grads(s: &SampleScalars, lemma: Lemma) -> Result<GradScalars> {
    s.grad
        .ok_or_else(|| PinchError::Precondition(format!("{} needs gradient data", lemma.name())))
}

/// All applicable branches of `lemma`, each as `lhs <= rhs`.
pub fn evaluate_lemma(lemma: Lemma, s: &SampleScalars, k: &PinchingConstants) -> Result<Vec<Side>> {
    let n = s.n as f64;
    let c0 = k.c0;
    let r = &s.reaction;
    let hat_sum = r.hat_aa2 + r.hat_rperp2 + r.rperp_nu1_2;
    let quad_ok = c0 > 1.0 / n && within(c0, quadratic_bound(s.n));
    let crit_ok = c0 > 1.0 / n && within(c0, critical_bound(s.n));
    let require = |ok: bool, what: &str| -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(PinchError::Precondition(format!("{}: {what}", lemma.name())))
        }
    };
    let reaction_gap = c0 * r.adot_h2 - r.aa2 - r.rperp2;
    let mut out = Vec::with_capacity(2);
    match lemma {
        Lemma::AbEstimates => {
            out.push(Side {
                branch: "h_ring_hat_a",
                lhs: r.h_ring_hat_a2 + r.rperp_nu1_2,
                rhs: 2.0 * s.h_ring2 * s.hat_a2,
            });
            out.push(Side { branch: "hat_a_hat_a", lhs: r.hat_aa2 + r.hat_rperp2, rhs: 1.5 * s.hat_a2 * s.hat_a2 });
        }
        Lemma::ReactionUpper => {
            out.push(Side {
                branch: "main",
                lhs: hat_sum,
                rhs: 1.5 * s.hat_a2 * s.hat_a2 + 2.0 * s.h_ring2 * s.hat_a2,
            });
        }
        Lemma::ReactionLower => {
            require(quad_ok, "needs 1/n < c0 <= 4/(3n)")?;
            let f = pinched_f(s, c0)?;
            let w = n * c0 - 1.0;
            out.push(Side {
                branch: "main",
                lhs: 2.0 / w * s.hat_a2 * s.hat_a2 + n * c0 / w * s.h_ring2 * s.hat_a2,
                rhs: s.hat_a2 / f * reaction_gap,
            });
        }
        Lemma::ReactionCombined => {
            require(quad_ok && k.delta <= 0.5, "needs 1/n < c0 <= 4/(3n) and delta <= 1/2")?;
            let f = pinched_f(s, c0)?;
            out.push(Side { branch: "main", lhs: hat_sum, rhs: (1.0 - k.delta) * s.hat_a2 / f * reaction_gap });
        }
        Lemma::FEvolutionLower => {
            require(quad_ok, "needs 1/n < c0 <= 4/(3n)")?;
            let f = pinched_f(s, c0)?;
            let g = grads(s, lemma)?;
            out.push(Side {
                branch: "main",
                lhs: 2.0 * s.h_full2 * f
                    + 2.0 / (n * c0 - 1.0) * s.hat_a2 * f
                    + (1.0 - c0 * (n + 2.0) / 3.0) * g.grad_a2,
                rhs: 2.0 * (g.grad_a2 - c0 * g.grad_mean2) + 2.0 * reaction_gap,
            });
        }
        Lemma::BochnerHatA => {
            let f = pinched_f(s, c0)?;
            let g = grads(s, lemma)?;
            let nu = g.grad_nu1_2;
            if quad_ok {
                out.push(Side {
                    branch: "quadratic",
                    lhs: (4.0 * n - 10.0) / (n + 2.0) * s.h_ring2 * nu
                        + 6.0 * (n - 1.0) / (n + 2.0) * (s.hat_a2 + f) * nu,
                    rhs: 2.0 * g.hat_grad_hat2,
                });
            }
            if crit_ok {
                out.push(Side {
                    branch: "critical",
                    lhs: 2.0 * s.h_ring2 * nu + 4.0 * s.hat_a2 * nu + 4.0 * f * nu,
                    rhs: 2.0 * g.hat_grad_hat2,
                });
            }
            require(!out.is_empty(), "needs c0 <= 4/(3n) or c0 <= 3(n+1)/(2n(n+2))")?;
        }
        Lemma::BochnerF => {
            let f = pinched_f(s, c0)?;
            let g = grads(s, lemma)?;
            let ratio = s.hat_a2 / f;
            let rhs = 2.0 * ratio * (g.grad_a2 - c0 * g.grad_mean2);
            if quad_ok {
                out.push(Side {
                    branch: "quadratic",
                    lhs: (5.0 * n - 8.0) / (3.0 * (n - 1.0)) * ratio * g.proj_ring2
                        + (10.0 * n - 16.0) / (n + 2.0) * s.hat_a2 * g.grad_nu1_2,
                    rhs,
                });
            }
            if crit_ok {
                out.push(Side {
                    branch: "critical",
                    lhs: 1.5 * ratio * g.proj_ring2 + 6.0 * s.hat_a2 * g.grad_nu1_2,
                    rhs,
                });
            }
            require(!out.is_empty(), "needs c0 <= 4/(3n) or c0 <= 3(n+1)/(2n(n+2))")?;
        }
        Lemma::GradientQ => {
            let f = pinched_f(s, c0)?;
            let g = grads(s, lemma)?;
            let ratio = s.hat_a2 / f;
            let nu = g.grad_nu1_2;
            let lhs = 4.0 * g.q_dot;
            if quad_ok && s.n > 3 {
                out.push(Side {
                    branch: "quadratic",
                    lhs,
                    rhs: 2.0 * g.proj_hat2
                        + (5.0 * n - 9.0) / (3.0 * (n - 1.0)) * ratio * g.proj_ring2
                        + 2.0 * s.hat_a2 * nu
                        + 3.0 * (n - 1.0) / (n - 3.0) * f * nu
                        + 2.0 * (n + 2.0) / (n + 3.0) * s.h_ring2 * nu,
                });
            }
            if c0 > 1.0 / n && within(c0, critical_bound(s.n) - k.eps0) {
                out.push(Side {
                    branch: "critical",
                    lhs,
                    rhs: 2.0 * g.proj_hat2
                        + (1.0 - k.eps) * 1.5 * ratio * g.proj_ring2
                        + 2.0 * s.hat_a2 * nu
                        + 4.0 * f * nu
                        + 2.0 * s.h_ring2 * nu,
                });
            }
            require(!out.is_empty(), "needs c0 <= 4/(3n) or c0 <= 3(n+1)/(2n(n+2)) - eps0")?;
        }
        Lemma::GradientCombined => {
            let f = pinched_f(s, c0)?;
            let g = grads(s, lemma)?;
            let branch1 = s.n >= 8 && quad_ok && within(k.delta, 1.0 / (5.0 * n - 8.0));
            let branch2 = c0 > 1.0 / n && within(c0, critical_bound(s.n) - k.eps0) && within(k.delta, k.eps.min(0.5));
            require(
                branch1 || branch2,
                "needs n >= 8, c0 <= 4/(3n), delta <= 1/(5n-8) or c0 <= 3(n+1)/(2n(n+2)) - eps0, delta <= min(1/2, eps)",
            )?;
            out.push(Side {
                branch: if branch1 { "quadratic" } else { "critical" },
                lhs: 4.0 * g.q_dot,
                rhs: 2.0 * g.grad_hat_a2 + 2.0 * (1.0 - k.delta) * s.hat_a2 / f * (g.grad_a2 - c0 * g.grad_mean2),
            });
        }
    }
    Ok(out)
}

/// Hex digest of the raw inputs, for locating a sample again.
pub fn inputs_hash(d: &DecomposedCurvature, t: Option<&[f64]>) -> String {
    let mut h = Sha256::new();
    h.update((d.n as u64).to_le_bytes());
    h.update((d.m as u64).to_le_bytes());
    for x in d.reconstruct() {
        for v in x.iter() {
            h.update(v.to_le_bytes());
        }
    }
    if let Some(t) = t {
        for v in t {
            h.update(v.to_le_bytes());
        }
    }
    h.finalize().iter().take(12).map(|b| format!("{b:02x}")).collect()
}

fn reports(lemma: Lemma, sides: Vec<Side>, hash: String) -> Vec<SlackReport> {
    sides
        .into_iter()
        .map(|s| SlackReport {
            name: format!("{}/{}", lemma.name(), s.branch),
            lhs: s.lhs,
            rhs: s.rhs,
            slack: s.slack(),
            inputs_hash: hash.clone(),
        })
        .collect()
}

fn point_constants(n: usize, c0: f64, delta: f64) -> PinchingConstants {
    PinchingConstants { n, eps0: 0.0, c_n: c0, c1: c0, c2: c0, c0, delta, sigma: delta, eps: 0.0 }
}

fn point_check(lemma: Lemma, d: &DecomposedCurvature, c0: f64, delta: f64) -> Result<Vec<SlackReport>> {
    let s = SampleScalars::from_point(d);
    let sides = evaluate_lemma(lemma, &s, &point_constants(d.n, c0, delta))?;
    Ok(reports(lemma, sides, inputs_hash(d, None)))
}

fn jet_check(lemma: Lemma, jet: &CurvatureJet, k: &PinchingConstants) -> Result<Vec<SlackReport>> {
    let g = crate::jet::derive_gradient_quantities(jet)?;
    let s = SampleScalars::from_gradients(&g);
    let sides = evaluate_lemma(lemma, &s, k)?;
    Ok(reports(lemma, sides, inputs_hash(&g.point, Some(&jet.t))))
}

pub fn check_ab_estimates(d: &DecomposedCurvature) -> Result<Vec<SlackReport>> {
    point_check(Lemma::AbEstimates, d, f64::NAN, f64::NAN)
}

pub fn check_reaction_upper(d: &DecomposedCurvature) -> Result<Vec<SlackReport>> {
    point_check(Lemma::ReactionUpper, d, f64::NAN, f64::NAN)
}

pub fn check_reaction_lower(d: &DecomposedCurvature, c0: f64) -> Result<Vec<SlackReport>> {
    point_check(Lemma::ReactionLower, d, c0, f64::NAN)
}

pub fn check_reaction_combined(d: &DecomposedCurvature, c0: f64, delta: f64) -> Result<Vec<SlackReport>> {
    if !(delta <= 0.5) {
        return Err(PinchError::Precondition(format!("reaction_combined: delta = {delta} exceeds 1/2")));
    }
    point_check(Lemma::ReactionCombined, d, c0, delta)
}

pub fn check_f_evolution_lower(jet: &CurvatureJet, c0: f64) -> Result<Vec<SlackReport>> {
    jet_check(Lemma::FEvolutionLower, jet, &point_constants(jet.dim(), c0, f64::NAN))
}

pub fn check_bochner_hat_a(jet: &CurvatureJet, k: &PinchingConstants) -> Result<Vec<SlackReport>> {
    jet_check(Lemma::BochnerHatA, jet, k)
}

pub fn check_bochner_f(jet: &CurvatureJet, k: &PinchingConstants) -> Result<Vec<SlackReport>> {
    jet_check(Lemma::BochnerF, jet, k)
}

pub fn check_gradient_q(jet: &CurvatureJet, k: &PinchingConstants) -> Result<Vec<SlackReport>> {
    jet_check(Lemma::GradientQ, jet, k)
}

pub fn check_gradient_combined(jet: &CurvatureJet, k: &PinchingConstants) -> Result<Vec<SlackReport>> {
    jet_check(Lemma::GradientCombined, jet, k)
}
