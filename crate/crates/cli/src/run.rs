use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use pinchflow_core::flow::{run_flow, write_diagnostics_csv, DiagnosticsRecord, FlowState};
use pinchflow_core::format::{fmt17, to_json17};
use pinchflow_core::immersion::{build_immersion, planarity_test, write_snapshot, PlanarityReport};
use pinchflow_core::inequality::{
    run_batch, run_identity_suite, violation_search, BatchConfig, IdentityConfig, IdentityRow, Lemma, SearchConfig,
    SLACK_TOLERANCE,
};
use pinchflow_core::symmetric::{evolve_product_sphere, monotonicity_report, write_trajectory_csv, ProductSphereState};
use pinchflow_core::PinchError;

use crate::config::*;

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Parse(String),
    Validation(String),
    Runtime(String),
}

impl CliError {
    pub fn status(&self) -> i32 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Parse(m) | CliError::Validation(m) | CliError::Runtime(m) => m,
        }
    }
}

fn invalid(e: PinchError) -> CliError {
    CliError::Validation(e.to_string())
}

fn runtime(e: PinchError) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let raw: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Parse(format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()))
    })?;
    check_top_level_keys(&raw).map_err(CliError::Validation)?;
    serde_json::from_value(raw).map_err(|e| CliError::Validation(e.to_string()))
}

pub struct Artifacts {
    pub passed: bool,
    pub files: Vec<(PathBuf, Vec<u8>)>,
}

struct Outputs<'a> {
    dir: &'a Path,
    paths: &'a OutputPaths,
}

impl Outputs<'_> {
    fn summary(&self) -> PathBuf {
        self.dir.join(self.paths.summary.as_deref().unwrap_or("summary.json"))
    }

    fn series(&self) -> PathBuf {
        self.dir.join(self.paths.series.as_deref().unwrap_or("series.csv"))
    }
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>, CliError> {
    to_json17(v).map(String::into_bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn execute(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Artifacts, CliError> {
    match cfg {
        ExperimentConfig::InequalityBatch(c) => batch(c, out_dir),
        ExperimentConfig::ViolationSearch(c) => search(c, out_dir),
        ExperimentConfig::GridFlow(c) => grid_flow(c, out_dir),
        ExperimentConfig::ProductFlow(c) => product_flow(c, out_dir),
        ExperimentConfig::IdentitySuite(c) => identities(c, out_dir),
        ExperimentConfig::Planarity(c) => planarity(c, out_dir),
    }
}

#[derive(Serialize)]
struct CheckRow {
    lemma: String,
    branch: String,
    n: usize,
    m: usize,
    c0: f64,
    delta: f64,
    min_slack: f64,
    count: u64,
    violations: u64,
    argmin_hash: String,
    passed: bool,
}

#[derive(Serialize)]
struct RateRow {
    n: usize,
    m: usize,
    acceptance_rate: f64,
}

#[derive(Serialize)]
struct BatchReport {
    kind: &'static str,
    passed: bool,
    seed: u64,
    samples: u64,
    tolerance: f64,
    acceptance: Vec<RateRow>,
    checks: Vec<CheckRow>,
}

fn batch(c: &BatchSection, dir: &Path) -> Result<Artifacts, CliError> {
    let lemmas = parse_lemmas(&c.lemmas).map_err(CliError::Validation)?;
    if c.samples == 0 {
        return Err(CliError::Validation("samples: must be positive".into()));
    }
    let mut jobs = Vec::new();
    for &n in &c.n.values() {
        let constants = c.constants.build(n).map_err(|e| CliError::Validation(format!("constants (n = {n}): {e}")))?;
        for &m in &c.m.values() {
            if m == 0 {
                return Err(CliError::Validation("m: codimension must be at least 1".into()));
            }
            jobs.push(BatchConfig { n, m, samples: c.samples, seed: c.seed, constants, lemmas: lemmas.clone() });
        }
    }
    let mut checks = Vec::new();
    let mut acceptance = Vec::new();
    for job in &jobs {
        let outcome = run_batch(job).map_err(runtime)?;
        acceptance.push(RateRow { n: job.n, m: job.m, acceptance_rate: outcome.acceptance_rate });
        for s in outcome.summaries {
            let (lemma, branch) = s.name.split_once('/').unwrap_or((s.name.as_str(), ""));
            checks.push(CheckRow {
                lemma: lemma.to_string(),
                branch: branch.to_string(),
                n: s.n,
                m: s.m,
                c0: s.c0,
                delta: s.delta,
                min_slack: s.min_slack,
                count: s.count,
                violations: s.violations,
                argmin_hash: s.argmin_hash.clone(),
                passed: s.passed(),
            });
        }
    }
    let passed = checks.iter().all(|r| r.passed);
    let mut csv = String::from("lemma,branch,n,m,c0,delta,min_slack,count,violations,argmin_hash\n");
    for r in &checks {
        csv += &format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.lemma,
            r.branch,
            r.n,
            r.m,
            fmt17(r.c0),
            fmt17(r.delta),
            fmt17(r.min_slack),
            r.count,
            r.violations,
            r.argmin_hash
        );
    }
    let report = BatchReport {
        kind: "inequality-batch",
        passed,
        seed: c.seed,
        samples: c.samples,
        tolerance: SLACK_TOLERANCE,
        acceptance,
        checks,
    };
    let out = Outputs { dir, paths: &c.output };
    Ok(Artifacts { passed, files: vec![(out.summary(), json(&report)?), (out.series(), csv.into_bytes())] })
}

#[derive(Serialize)]
struct SearchReport {
    kind: &'static str,
    passed: bool,
    lemma: String,
    n: usize,
    m: usize,
    seed: u64,
    evaluations: u64,
    worst_branch: String,
    lhs: f64,
    rhs: f64,
    slack: f64,
    normalized_slack: f64,
    inputs_hash: String,
}

fn search(c: &SearchSection, dir: &Path) -> Result<Artifacts, CliError> {
    let lemma = Lemma::parse(&c.lemma).ok_or_else(|| CliError::Validation(format!("lemma: unknown checker `{}`", c.lemma)))?;
    let constants = c.constants.build(c.n).map_err(|e| CliError::Validation(format!("constants: {e}")))?;
    if c.m == 0 {
        return Err(CliError::Validation("m: codimension must be at least 1".into()));
    }
    let cfg = SearchConfig { lemma, n: c.n, m: c.m, constants, seed: c.seed, restarts: c.restarts, budget: c.budget };
    let outcome = violation_search(&cfg).map_err(runtime)?;
    let passed = outcome.normalized_slack >= -SLACK_TOLERANCE;
    let report = SearchReport {
        kind: "violation-search",
        passed,
        lemma: lemma.name().to_string(),
        n: c.n,
        m: c.m,
        seed: c.seed,
        evaluations: outcome.evaluations,
        worst_branch: outcome.worst.name.clone(),
        lhs: outcome.worst.lhs,
        rhs: outcome.worst.rhs,
        slack: outcome.worst.slack,
        normalized_slack: outcome.normalized_slack,
        inputs_hash: outcome.worst.inputs_hash.clone(),
    };
    let out = Outputs { dir, paths: &c.output };
    Ok(Artifacts { passed, files: vec![(out.summary(), json(&report)?)] })
}

#[derive(Serialize)]
struct RecordSummary {
    t: f64,
    min_f: f64,
    max_pinch_ratio: f64,
    max_hat_over_f1s: f64,
    max_hat_over_h2s: f64,
    max_h2: f64,
    max_hat_ratio: f64,
}

impl From<&DiagnosticsRecord> for RecordSummary {
    fn from(r: &DiagnosticsRecord) -> Self {
        RecordSummary {
            t: r.t,
            min_f: r.min_f,
            max_pinch_ratio: r.max_pinch_ratio,
            max_hat_over_f1s: r.max_hat_over_f1s,
            max_hat_over_h2s: r.max_hat_over_h2s,
            max_h2: r.max_h2,
            max_hat_ratio: r.max_hat_ratio,
        }
    }
}

#[derive(Serialize)]
struct GridFlowReport {
    kind: &'static str,
    passed: bool,
    n: usize,
    ambient: usize,
    shape: Vec<usize>,
    stop_reason: &'static str,
    steps: usize,
    c0: f64,
    sigma: f64,
    outside_theorem_hypothesis: bool,
    initial: RecordSummary,
    last: RecordSummary,
    /// Largest `|hat A|^2 / |H|^(2 - sigma)` over the run divided by its initial value.
    hat_over_h2s_growth: f64,
    max_residuals: Option<[f64; 4]>,
}

fn grid_flow(c: &GridFlowSection, dir: &Path) -> Result<Artifacts, CliError> {
    let grid = build_immersion(&c.immersion).map_err(invalid)?;
    let run = run_flow(FlowState::new(grid.clone()), &c.policy).map_err(|e| match e {
        PinchError::InvalidInput(_) | PinchError::TimestepTooLarge { .. } => invalid(e),
        other => runtime(other),
    })?;
    let first = run.records.first().expect("run_flow records the initial state");
    let last = run.records.last().expect("run_flow records the final state");
    let peak = run.records.iter().map(|r| r.max_hat_over_h2s).fold(0.0, f64::max);
    let growth = if first.max_hat_over_h2s > 0.0 { peak / first.max_hat_over_h2s } else { 0.0 };
    let mut max_residuals: Option<[f64; 4]> = None;
    for r in run.records.iter().filter_map(|r| r.residuals) {
        let acc = max_residuals.get_or_insert([0.0; 4]);
        for (a, v) in acc.iter_mut().zip(r.as_array()) {
            *a = a.max(v);
        }
    }
    let passed = run.stop_reason != pinchflow_core::flow::StopReason::MinF;
    let report = GridFlowReport {
        kind: "grid-flow",
        passed,
        n: grid.n,
        ambient: grid.ambient,
        shape: grid.shape.clone(),
        stop_reason: run.stop_reason.as_str(),
        steps: run.final_state.step_index,
        c0: run.c0,
        sigma: run.sigma,
        outside_theorem_hypothesis: run.outside_hypothesis,
        initial: first.into(),
        last: last.into(),
        hat_over_h2s_growth: growth,
        max_residuals,
    };
    let mut csv = Vec::new();
    write_diagnostics_csv(&mut csv, &run.records).map_err(runtime)?;
    let out = Outputs { dir, paths: &c.output };
    let mut files = vec![(out.summary(), json(&report)?), (out.series(), csv)];
    if c.snapshots {
        // Snapshots are written through a scratch directory so the artifact list stays byte-oriented.
        let tmp = tempdir_in(dir)?;
        for (name, g) in [("initial.bin", &grid), ("final.bin", &run.final_state.immersion)] {
            let p = tmp.join(name);
            write_snapshot(g, &p, Some(&c.immersion)).map_err(runtime)?;
            for (src, dst) in [(p.clone(), dir.join(name)), (side(&p), side(&dir.join(name)))] {
                files.push((dst, fs::read(&src).map_err(|e| CliError::Runtime(e.to_string()))?));
            }
        }
        let _ = fs::remove_dir_all(&tmp);
    }
    Ok(Artifacts { passed, files })
}

fn side(p: &Path) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn tempdir_in(dir: &Path) -> Result<PathBuf, CliError> {
    let p = dir.join(".pinchflow-snapshots");
    fs::create_dir_all(&p).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(p)
}

#[derive(Serialize)]
struct ProductReport {
    kind: &'static str,
    passed: bool,
    p: usize,
    q: usize,
    a: f64,
    b: f64,
    t_end: f64,
    dt: f64,
    c0: f64,
    sigma: f64,
    truncated: bool,
    collapse_time: f64,
    steps: usize,
    f_increasing: bool,
    ratio_f_nonincreasing: bool,
    ratio_h_bounded: bool,
    worst_f_drop: f64,
    worst_ratio_f_rise: f64,
    worst_ratio_h_excess: f64,
}

fn product_flow(c: &ProductFlowSection, dir: &Path) -> Result<Artifacts, CliError> {
    let s0 = ProductSphereState::new(c.p, c.q, c.a, c.b).map_err(invalid)?;
    let k = c.constants.build(s0.n()).map_err(|e| CliError::Validation(format!("constants: {e}")))?;
    if !(c.dt > 0.0) || !(c.t_end > 0.0) {
        return Err(CliError::Validation("dt and t_end must be positive".into()));
    }
    let traj = evolve_product_sphere(&s0, c.t_end, c.dt).map_err(runtime)?;
    let rep = monotonicity_report(&traj, k.c0, k.sigma).map_err(invalid)?;
    let passed = rep.f_increasing && rep.ratio_f_nonincreasing && rep.ratio_h_bounded;
    let mut csv = Vec::new();
    write_trajectory_csv(&rep.rows, &mut csv).map_err(runtime)?;
    let report = ProductReport {
        kind: "product-flow",
        passed,
        p: c.p,
        q: c.q,
        a: c.a,
        b: c.b,
        t_end: c.t_end,
        dt: c.dt,
        c0: k.c0,
        sigma: k.sigma,
        truncated: traj.truncated,
        collapse_time: traj.collapse_time,
        steps: traj.states.len() - 1,
        f_increasing: rep.f_increasing,
        ratio_f_nonincreasing: rep.ratio_f_nonincreasing,
        ratio_h_bounded: rep.ratio_h_bounded,
        worst_f_drop: rep.worst_f_drop,
        worst_ratio_f_rise: rep.worst_ratio_f_rise,
        worst_ratio_h_excess: rep.worst_ratio_h_excess,
    };
    let out = Outputs { dir, paths: &c.output };
    Ok(Artifacts { passed, files: vec![(out.summary(), json(&report)?), (out.series(), csv)] })
}

#[derive(Serialize)]
struct IdentityReport {
    kind: &'static str,
    passed: bool,
    tolerance: f64,
    seed: u64,
    worst: f64,
    rows: Vec<IdentityRow>,
}

fn identities(c: &IdentitySection, dir: &Path) -> Result<Artifacts, CliError> {
    let mut dims = Vec::new();
    for &n in &c.n.values() {
        for &m in &c.m.values() {
            if n < 2 || m == 0 {
                return Err(CliError::Validation(format!("dims: ({n}, {m}) needs n >= 2 and m >= 1")));
            }
            dims.push((n, m));
        }
    }
    let rows = run_identity_suite(&IdentityConfig { dims, instances: c.instances, seed: c.seed }).map_err(runtime)?;
    let worst = rows.iter().map(|r| r.max()).fold(0.0, f64::max);
    let passed = worst <= c.tolerance;
    let mut csv = String::from(
        "n,m,count,reconstruction,reaction,pinching,derivative_split,traced_codazzi,q_equivalence,trace_tensors\n",
    );
    for r in &rows {
        let vals = [
            r.reconstruction,
            r.reaction,
            r.pinching,
            r.derivative_split,
            r.traced_codazzi,
            r.q_equivalence,
            r.trace_tensors,
        ];
        let cols: Vec<String> = vals.iter().map(|v| fmt17(*v)).collect();
        csv += &format!("{},{},{},{}\n", r.n, r.m, r.count, cols.join(","));
    }
    let report = IdentityReport { kind: "identity-suite", passed, tolerance: c.tolerance, seed: c.seed, worst, rows };
    let out = Outputs { dir, paths: &c.output };
    Ok(Artifacts { passed, files: vec![(out.summary(), json(&report)?), (out.series(), csv.into_bytes())] })
}

#[derive(Serialize)]
struct PlanarityOut {
    kind: &'static str,
    passed: bool,
    expect: Option<&'static str>,
    #[serde(flatten)]
    report: PlanarityReport,
}

/// Planar: both measures at most 1e-10. Non-planar: both at least 0.1.
pub const PLANAR_TOL: f64 = 1e-10;
pub const NONPLANAR_FLOOR: f64 = 0.1;

fn planarity(c: &PlanaritySection, dir: &Path) -> Result<Artifacts, CliError> {
    let grid = build_immersion(&c.immersion).map_err(invalid)?;
    let report = planarity_test(&grid, c.tol).map_err(runtime)?;
    let (passed, expect) = match c.expect {
        None => (true, None),
        Some(PlanarExpectation::Planar) => {
            (report.max_hat_ratio <= PLANAR_TOL && report.affine_residual <= PLANAR_TOL, Some("planar"))
        }
        Some(PlanarExpectation::NonPlanar) => (
            report.max_hat_ratio >= NONPLANAR_FLOOR && report.affine_residual >= NONPLANAR_FLOOR,
            Some("non-planar"),
        ),
    };
    let out = Outputs { dir, paths: &c.output };
    let body = PlanarityOut { kind: "planarity", passed, expect, report };
    Ok(Artifacts { passed, files: vec![(out.summary(), json(&body)?)] })
}
