use serde::Deserialize;

use pinchflow_core::flow::FlowPolicy;
use pinchflow_core::immersion::ImmersionSpec;
use pinchflow_core::inequality::Lemma;
use pinchflow_core::{make_constants, PinchError, PinchingConstants};

/// One experiment, selected by `kind`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentConfig {
    InequalityBatch(BatchSection),
    ViolationSearch(SearchSection),
    GridFlow(GridFlowSection),
    ProductFlow(ProductFlowSection),
    IdentitySuite(IdentitySection),
    Planarity(PlanaritySection),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<usize> {
        match self {
            OneOrMany::One(x) => vec![*x],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOverrides {
    pub c0: Option<f64>,
    pub eps0: Option<f64>,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
}

impl ConstantOverrides {
    pub fn build(&self, n: usize) -> Result<PinchingConstants, PinchError> {
        let eps0 = self.eps0.unwrap_or_else(|| PinchingConstants::default_eps0(n));
        make_constants(n, eps0)?.with_overrides(self.c0, self.delta, self.sigma)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    pub summary: Option<String>,
    pub series: Option<String>,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchSection {
    pub n: OneOrMany,
    pub m: OneOrMany,
    pub samples: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub lemmas: Option<Vec<String>>,
    #[serde(default)]
    pub constants: ConstantOverrides,
    #[serde(default)]
    pub output: OutputPaths,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub lemma: String,
    pub n: usize,
    pub m: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: u64,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub constants: ConstantOverrides,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_restarts() -> u64 {
    256
}

fn default_budget() -> u64 {
    2000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFlowSection {
    pub immersion: ImmersionSpec,
    #[serde(default)]
    pub policy: FlowPolicy,
    /// Write binary snapshots of the initial and final immersions.
    #[serde(default)]
    pub snapshots: bool,
    #[serde(default)]
    pub output: OutputPaths,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProductFlowSection {
    pub p: usize,
    pub q: usize,
    pub a: f64,
    pub b: f64,
    pub t_end: f64,
    #[serde(default = "default_product_dt")]
    pub dt: f64,
    #[serde(default)]
    pub constants: ConstantOverrides,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_product_dt() -> f64 {
    1e-5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitySection {
    pub n: OneOrMany,
    pub m: OneOrMany,
    pub instances: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_identity_tol")]
    pub tolerance: f64,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_identity_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanarExpectation {
    Planar,
    NonPlanar,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanaritySection {
    pub immersion: ImmersionSpec,
    #[serde(default = "default_rank_tol")]
    pub tol: f64,
    #[serde(default)]
    pub expect: Option<PlanarExpectation>,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_rank_tol() -> f64 {
    1e-9
}

pub fn parse_lemmas(names: &Option<Vec<String>>) -> Result<Vec<Lemma>, String> {
    match names {
        None => Ok(Lemma::ALL.to_vec()),
        Some(v) => v.iter().map(|s| Lemma::parse(s).ok_or_else(|| format!("lemmas: unknown checker `{s}`"))).collect(),
    }
}

/// Reject keys that serde's internally tagged enums silently ignore at the top level.
pub fn check_top_level_keys(raw: &serde_json::Value) -> Result<(), String> {
    let obj = raw.as_object().ok_or("config must be a JSON object")?;
    let kind = obj.get("kind").and_then(|k| k.as_str()).ok_or("missing field `kind`")?;
    let allowed: &[&str] = match kind {
        "inequality-batch" => &["n", "m", "samples", "seed", "lemmas", "constants", "output"],
        "violation-search" => &["lemma", "n", "m", "seed", "restarts", "budget", "constants", "output"],
        "grid-flow" => &["immersion", "policy", "snapshots", "output"],
        "product-flow" => &["p", "q", "a", "b", "t_end", "dt", "constants", "output"],
        "identity-suite" => &["n", "m", "instances", "seed", "tolerance", "output"],
        "planarity" => &["immersion", "tol", "expect", "output"],
        other => return Err(format!("kind: unknown experiment kind `{other}`")),
    };
    for key in obj.keys() {
        if key != "kind" && !allowed.contains(&key.as_str()) {
            return Err(format!("unknown field `{key}` for kind `{kind}`"));
        }
    }
    Ok(())
}
