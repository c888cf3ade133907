use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mix_seed;
use super::sampler::Sampler;
use crate::error::Result;
use crate::jet::{derive_from_decomposed, jet_identity_residuals};
use crate::tensor::{decompose_curvature, pinching_identity_residual, reaction_identity_residuals, reaction_terms};

#[derive(Debug, Clone)]
pub struct IdentityConfig {
    pub dims: Vec<(usize, usize)>,
    pub instances: u64,
    pub seed: u64,
}

/// Largest relative residual seen per identity family for one `(n, m)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdentityRow {
    pub n: usize,
    pub m: usize,
    pub count: u64,
    pub reconstruction: f64,
    pub reaction: f64,
    pub pinching: f64,
    pub derivative_split: f64,
    pub traced_codazzi: f64,
    pub q_equivalence: f64,
    pub trace_tensors: f64,
}

impl IdentityRow {
    pub fn max(&self) -> f64 {
        [
            self.reconstruction,
            self.reaction,
            self.pinching,
            self.derivative_split,
            self.traced_codazzi,
            self.q_equivalence,
            self.trace_tensors,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    fn merge(&mut self, o: &IdentityRow) {
        self.count += o.count;
        self.reconstruction = self.reconstruction.max(o.reconstruction);
        self.reaction = self.reaction.max(o.reaction);
        self.pinching = self.pinching.max(o.pinching);
        self.derivative_split = self.derivative_split.max(o.derivative_split);
        self.traced_codazzi = self.traced_codazzi.max(o.traced_codazzi);
        self.q_equivalence = self.q_equivalence.max(o.q_equivalence);
        self.trace_tensors = self.trace_tensors.max(o.trace_tensors);
    }
}

const BLOCK: u64 = 2048;

fn run_block(n: usize, m: usize, seed: u64, start: u64, end: u64) -> Result<IdentityRow> {
    let mut sampler = Sampler::new(mix_seed(&[seed, n as u64, m as u64, start / BLOCK]));
    let c = crate::constants::quadratic_bound(n).max(1.0 / n as f64 + 0.05);
    let mut row = IdentityRow { n, m, ..Default::default() };
    for _ in start..end {
        let jet = sampler.jet(n, m, c)?;
        let d = decompose_curvature(&jet.point)?;
        let rebuilt = d.reconstruct();
        let mut rec = 0.0f64;
        for (x, y) in rebuilt.iter().zip(&jet.point.a) {
            rec = rec.max((x - y).amax());
        }
        let r = reaction_terms(&d);
        let res = reaction_identity_residuals(&d, &r);
        let g = derive_from_decomposed(d, &jet.t)?;
        let j = jet_identity_residuals(&g);
        row.merge(&IdentityRow {
            n,
            m,
            count: 1,
            reconstruction: rec / g.point.a2.sqrt(),
            reaction: res.into_iter().fold(0.0, f64::max),
            pinching: pinching_identity_residual(&g.point, c),
            derivative_split: j.grad_a_split.max(j.grad_mean_split).max(j.grad_hat_a_split),
            traced_codazzi: j.codazzi_normal.max(j.codazzi_perp),
            q_equivalence: j.q_equivalence.max(j.proj_hat_routes),
            trace_tensors: j.e1_projection.max(j.eperp_norm),
        });
    }
    Ok(row)
}

/// Random jets per `(n, m)`, each checked against every algebraic identity.
pub fn run_identity_suite(cfg: &IdentityConfig) -> Result<Vec<IdentityRow>> {
    let mut out = Vec::new();
    for &(n, m) in &cfg.dims {
        let blocks = cfg.instances.div_ceil(BLOCK);
        let rows: Vec<Result<IdentityRow>> = (0..blocks)
            .into_par_iter()
            .map(|b| run_block(n, m, cfg.seed, b * BLOCK, ((b + 1) * BLOCK).min(cfg.instances)))
            .collect();
        let mut total = IdentityRow { n, m, ..Default::default() };
        for r in rows {
            total.merge(&r?);
        }
        out.push(total);
    }
    Ok(out)
}
