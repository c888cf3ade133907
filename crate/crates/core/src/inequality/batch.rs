use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkers::{evaluate_lemma, inputs_hash, Lemma, SampleScalars, SLACK_TOLERANCE};
use super::mix_seed;
use super::sampler::Sampler;
use crate::constants::PinchingConstants;
use crate::error::Result;
use crate::jet::derive_from_decomposed;
use crate::tensor::decompose_curvature;

const BLOCK: u64 = 2048;

#[derive(Debug, Clone)]
pub struct BatchConfig {
    pub n: usize,
    pub m: usize,
    pub samples: u64,
    pub seed: u64,
    pub constants: PinchingConstants,
    pub lemmas: Vec<Lemma>,
}

/// Per-branch result; `min_slack` is normalized by `scale^4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub name: String,
    pub n: usize,
    pub m: usize,
    pub c0: f64,
    pub delta: f64,
    pub min_slack: f64,
    pub argmin_hash: String,
    pub count: u64,
    pub violations: u64,
}

impl BatchSummary {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.min_slack >= -SLACK_TOLERANCE
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub summaries: Vec<BatchSummary>,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, Copy)]
struct Tally {
    min: f64,
    argmin: u64,
    count: u64,
    violations: u64,
}

impl Tally {
    fn merge(&mut self, o: &Tally) {
        if o.min < self.min || (o.min == self.min && o.argmin < self.argmin) {
            self.min = o.min;
            self.argmin = o.argmin;
        }
        self.count += o.count;
        self.violations += o.violations;
    }
}

type Key = (Lemma, &'static str);

struct BlockResult {
    tallies: BTreeMap<Key, Tally>,
    attempted: u64,
    accepted: u64,
}

fn block_seed(cfg: &BatchConfig, block: u64) -> u64 {
    mix_seed(&[cfg.seed, cfg.n as u64, cfg.m as u64, block])
}

fn needs_jet(cfg: &BatchConfig) -> bool {
    cfg.lemmas.iter().any(|l| l.needs_jet())
}

fn scalars_for(sampler: &mut Sampler, cfg: &BatchConfig, jets: bool) -> Result<(SampleScalars, Option<Vec<f64>>, crate::tensor::DecomposedCurvature)> {
    let c = cfg.constants.c0;
    if jets {
        let jet = sampler.jet(cfg.n, cfg.m, c)?;
        let d = decompose_curvature(&jet.point)?;
        let g = derive_from_decomposed(d, &jet.t)?;
        let s = SampleScalars::from_gradients(&g);
        Ok((s, Some(jet.t), g.point))
    } else {
        let p = sampler.point(cfg.n, cfg.m, c)?;
        let d = decompose_curvature(&p)?;
        Ok((SampleScalars::from_point(&d), None, d))
    }
}

fn run_block(cfg: &BatchConfig, block: u64) -> Result<BlockResult> {
    let start = block * BLOCK;
    let end = (start + BLOCK).min(cfg.samples);
    let mut sampler = Sampler::new(block_seed(cfg, block));
    let jets = needs_jet(cfg);
    let mut tallies: BTreeMap<Key, Tally> = BTreeMap::new();
    for idx in start..end {
        let (s, _, _) = scalars_for(&mut sampler, cfg, jets)?;
        let scale4 = s.scale4();
        for &lemma in &cfg.lemmas {
            for side in evaluate_lemma(lemma, &s, &cfg.constants)? {
                let v = side.slack() / scale4;
                let e = tallies
                    .entry((lemma, side.branch))
                    .or_insert(Tally { min: f64::INFINITY, argmin: idx, count: 0, violations: 0 });
                e.merge(&Tally {
                    min: if v.is_nan() { f64::NEG_INFINITY } else { v },
                    argmin: idx,
                    count: 1,
                    violations: u64::from(!(v >= -SLACK_TOLERANCE)),
                });
            }
        }
    }
    Ok(BlockResult { tallies, attempted: sampler.attempted, accepted: sampler.accepted })
}

fn hashes_of_samples(cfg: &BatchConfig, wanted: &[u64]) -> Result<BTreeMap<u64, String>> {
    let jets = needs_jet(cfg);
    let mut out = BTreeMap::new();
    let mut sorted: Vec<u64> = wanted.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut i = 0;
    while i < sorted.len() {
        let block = sorted[i] / BLOCK;
        let mut sampler = Sampler::new(block_seed(cfg, block));
        let mut idx = block * BLOCK;
        while i < sorted.len() && sorted[i] / BLOCK == block {
            let (_, t, d) = loop {
                let s = scalars_for(&mut sampler, cfg, jets)?;
                if idx == sorted[i] {
                    break s;
                }
                idx += 1;
            };
            out.insert(sorted[i], inputs_hash(&d, t.as_deref()));
            idx += 1;
            i += 1;
        }
    }
    Ok(out)
}

/// Deterministic in `(seed, n, m)` regardless of the thread count: samples are
/// drawn in fixed blocks with their own streams and merged in block order.
pub fn run_batch(cfg: &BatchConfig) -> Result<BatchOutcome> {
    let blocks = cfg.samples.div_ceil(BLOCK);
    let results: Vec<Result<BlockResult>> = (0..blocks).into_par_iter().map(|b| run_block(cfg, b)).collect();
    let mut total: BTreeMap<Key, Tally> = BTreeMap::new();
    let mut attempted = 0;
    let mut accepted = 0;
    for r in results {
        let r = r?;
        attempted += r.attempted;
        accepted += r.accepted;
        for (k, t) in r.tallies {
            total
                .entry(k)
                .and_modify(|e| e.merge(&t))
                .or_insert(t);
        }
    }
    let wanted: Vec<u64> = total.values().map(|t| t.argmin).collect();
    let hashes = hashes_of_samples(cfg, &wanted)?;
    let mut summaries = Vec::new();
    for ((lemma, branch), t) in total {
        summaries.push(BatchSummary {
            name: format!("{}/{}", lemma.name(), branch),
            n: cfg.n,
            m: cfg.m,
            c0: cfg.constants.c0,
            delta: cfg.constants.delta,
            min_slack: t.min,
            argmin_hash: hashes[&t.argmin].clone(),
            count: t.count,
            violations: t.violations,
        });
    }
    Ok(BatchOutcome {
        summaries,
        acceptance_rate: if attempted == 0 { 1.0 } else { accepted as f64 / attempted as f64 },
    })
}
