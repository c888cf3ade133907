use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use super::checkers::{evaluate_lemma, inputs_hash, Lemma, SampleScalars, SlackReport};
use super::mix_seed;
use super::sampler::Sampler;
use crate::constants::PinchingConstants;
use crate::error::{PinchError, Result};
use crate::jet::{derive_from_decomposed, symmetrize};
use crate::tensor::{decompose_curvature, CurvaturePoint, DecomposedCurvature};

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub lemma: Lemma,
    pub n: usize,
    pub m: usize,
    pub constants: PinchingConstants,
    pub seed: u64,
    /// Random starting samples; the best one seeds the descent.
    pub restarts: u64,
    /// Number of descent evaluations; zero returns the best starting sample.
    pub budget: u64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub worst: SlackReport,
    /// `slack / scale^4` of `worst`.
    pub normalized_slack: f64,
    pub evaluations: u64,
}

#[derive(Clone)]
struct Candidate {
    a: Vec<DMatrix<f64>>,
    t: Vec<f64>,
}

struct Scored {
    value: f64,
    report: SlackReport,
}

fn score(c: &Candidate, cfg: &SearchConfig) -> Option<Scored> {
    let p = CurvaturePoint::orthonormal(c.a.clone()).ok()?;
    let d: DecomposedCurvature = decompose_curvature(&p).ok()?;
    if !(d.mean_norm > 1e-8 * d.a2.sqrt()) || !(cfg.constants.c0 * d.h2 - d.a2 > 1e-12 * d.a2) {
        return None;
    }
    let (s, hash) = if cfg.lemma.needs_jet() {
        let g = derive_from_decomposed(d, &c.t).ok()?;
        let h = inputs_hash(&g.point, Some(&c.t));
        (SampleScalars::from_gradients(&g), h)
    } else {
        let h = inputs_hash(&d, None);
        (SampleScalars::from_point(&d), h)
    };
    let sides = evaluate_lemma(cfg.lemma, &s, &cfg.constants).ok()?;
    let scale4 = s.scale4();
    let worst = sides.into_iter().min_by(|x, y| (x.slack() / scale4).total_cmp(&(y.slack() / scale4)))?;
    Some(Scored {
        value: worst.slack() / scale4,
        report: SlackReport {
            name: format!("{}/{}", cfg.lemma.name(), worst.branch),
            lhs: worst.lhs,
            rhs: worst.rhs,
            slack: worst.slack(),
            inputs_hash: hash,
        },
    })
}

fn normalize(c: &mut Candidate) {
    let a2: f64 = c.a.iter().map(|x| x.norm_squared()).sum();
    let s = a2.sqrt();
    if s > 0.0 {
        for x in c.a.iter_mut() {
            *x /= s;
        }
        for v in c.t.iter_mut() {
            *v /= a2;
        }
    }
}

/// Derivative-free local descent on the normalized slack, started from the
/// worst of `restarts` random pinched samples. Steps that leave the pinching
/// cone are rejected.
pub fn violation_search(cfg: &SearchConfig) -> Result<SearchOutcome> {
    let n = cfg.n;
    let m = cfg.m;
    let mut sampler = Sampler::new(mix_seed(&[cfg.seed, n as u64, m as u64, cfg.lemma as u64]));
    let mut best: Option<(Candidate, Scored)> = None;
    let mut evaluations = 0;
    for _ in 0..cfg.restarts.max(1) {
        let jet = sampler.jet(n, m, cfg.constants.c0)?;
        let mut c = Candidate { a: jet.point.a, t: jet.t };
        normalize(&mut c);
        evaluations += 1;
        if let Some(s) = score(&c, cfg) {
            if best.as_ref().map_or(true, |(_, b)| s.value < b.value) {
                best = Some((c, s));
            }
        }
    }
    let (mut cur, mut cur_score) =
        best.ok_or_else(|| PinchError::Precondition(format!("{}: no admissible starting sample", cfg.lemma.name())))?;

    let mut step = 0.1;
    let t_len = cur.t.len();
    for _ in 0..cfg.budget {
        let rng = &mut sampler.rng;
        let mut cand = cur.clone();
        for x in cand.a.iter_mut() {
            for i in 0..n {
                for j in 0..=i {
                    let d: f64 = rng.sample::<f64, _>(StandardNormal) * step / (n as f64);
                    x[(i, j)] += d;
                    if i != j {
                        x[(j, i)] += d;
                    }
                }
            }
        }
        let t_scale = cand.t.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-3) / (t_len as f64).sqrt();
        let mut noise: Vec<f64> = (0..t_len).map(|_| rng.sample::<f64, _>(StandardNormal) * step * t_scale).collect();
        symmetrize(&mut noise, n, m);
        for (v, e) in cand.t.iter_mut().zip(noise) {
            *v += e;
        }
        normalize(&mut cand);
        evaluations += 1;
        match score(&cand, cfg) {
            Some(s) if s.value < cur_score.value => {
                cur = cand;
                cur_score = s;
                step = (step * 1.5).min(1.0);
            }
            _ => {
                step *= 0.92;
                if step < 1e-7 {
                    step = 0.1;
                }
            }
        }
    }
    Ok(SearchOutcome { normalized_slack: cur_score.value, worst: cur_score.report, evaluations })
}
