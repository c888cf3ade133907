//! Explicit mean curvature flow on periodic grids, with diagnostics and a
//! finite-difference check of the evolution equations.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::constants::make_constants;
use crate::error::{PinchError, Result};
use crate::format::fmt17;
use crate::immersion::{compute_geometry, DifferenceOrder, GeometryField, GeometryOptions, GridImmersion};
use crate::immersion::{mean_curvature_into, Stencil};
use crate::tensor::{pinching_f, reaction_terms};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Heun,
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowPolicy {
    /// Fixed step; `None` takes half the stability bound at every step.
    pub dt: Option<f64>,
    pub kappa: f64,
    pub integrator: Integrator,
    pub order: DifferenceOrder,
    /// Damp high azimuthal modes along axis 0 on rings whose circumference is
    /// too short for the step (latitude-longitude charts).
    pub polar_filter: bool,
    pub degenerate_tol: f64,
    pub t_end: f64,
    pub max_steps: usize,
    pub max_a2: f64,
    pub min_f: f64,
    pub record_every: usize,
    /// Evaluate evolution-equation residuals at every `verify_every`-th record (0 disables).
    pub verify_every: usize,
}

impl Default for FlowPolicy {
    fn default() -> Self {
        FlowPolicy {
            dt: None,
            kappa: 0.2,
            integrator: Integrator::Heun,
            order: DifferenceOrder::Second,
            polar_filter: false,
            degenerate_tol: 1e-8,
            t_end: 0.1,
            max_steps: 1_000_000,
            max_a2: 1e8,
            min_f: f64::NEG_INFINITY,
            record_every: 100,
            verify_every: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub immersion: GridImmersion,
    pub t: f64,
    pub step_index: usize,
}

impl FlowState {
    pub fn new(immersion: GridImmersion) -> Self {
        FlowState { immersion, t: 0.0, step_index: 0 }
    }

    pub fn geometry(&self, opts: &GeometryOptions) -> Result<GeometryField> {
        compute_geometry(&self.immersion, opts)
    }
}

/// Largest admissible step `kappa h^2` over the physical node spacings `|dF_a| h_a`,
/// reduced by 3/4 for fourth-order stencils. With the polar filter axis 0 is excluded,
/// since the filter adapts its cutoff to the step.
pub fn stability_bound(grid: &GridImmersion, policy: &FlowPolicy) -> f64 {
    bound_with(grid, policy, |node, axis, off| grid.neighbor(node, axis, off))
}

fn bound_with(grid: &GridImmersion, policy: &FlowPolicy, nb: impl Fn(usize, usize, isize) -> usize) -> f64 {
    let mut hmin2 = f64::INFINITY;
    for axis in 0..grid.n {
        if policy.polar_filter && axis == 0 && grid.n > 1 {
            continue;
        }
        for node in 0..grid.nodes() {
            let p = grid.position(nb(node, axis, 1));
            let q = grid.position(nb(node, axis, -1));
            let d2: f64 = p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum();
            hmin2 = hmin2.min(0.25 * d2);
        }
    }
    let factor = match policy.order {
        DifferenceOrder::Second => 1.0,
        DifferenceOrder::Fourth => 0.75,
    };
    factor * policy.kappa * hmin2
}

struct PolarFilter {
    fft: Arc<dyn rustfft::Fft<f64>>,
    ifft: Arc<dyn rustfft::Fft<f64>>,
}

impl PolarFilter {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        PolarFilter { fft: planner.plan_fft_forward(len), ifft: planner.plan_fft_inverse(len) }
    }

    /// Keep azimuthal modes `|k| <= M` with `M = floor(pi mean|dF_0| / sqrt(dt/kappa))` on each ring.
    fn apply(&self, grid: &GridImmersion, st: &Stencil, dt: f64, kappa: f64, vel: &mut [f64]) {
        let s0 = grid.shape[0];
        let rings = grid.nodes() / s0;
        let big = grid.ambient;
        let h0 = grid.spacing[0];
        let cut = (dt.abs() / kappa).sqrt();
        let filtered: Vec<(usize, Vec<f64>)> = (0..rings)
            .into_par_iter()
            .filter_map(|ring| {
                let nodes: Vec<usize> = (0..s0).map(|c| c * rings + ring).collect();
                let mut speed = 0.0;
                for &node in &nodes {
                    let p = grid.position(st.neighbor(node, 0, 1));
                    let q = grid.position(st.neighbor(node, 0, -1));
                    speed += (0..big).map(|r| (p[r] - q[r]).powi(2)).sum::<f64>().sqrt() / (2.0 * h0);
                }
                speed /= s0 as f64;
                let keep = ((std::f64::consts::PI * speed / cut).floor() as usize).max(1).min(s0 / 2);
                if keep >= s0 / 2 {
                    return None;
                }
                let mut out = vec![0.0; s0 * big];
                let mut buf = vec![Complex::new(0.0, 0.0); s0];
                for r in 0..big {
                    for (c, &node) in nodes.iter().enumerate() {
                        buf[c] = Complex::new(vel[node * big + r], 0.0);
                    }
                    self.fft.process(&mut buf);
                    for (k, z) in buf.iter_mut().enumerate() {
                        let freq = k.min(s0 - k);
                        if freq > keep {
                            *z = Complex::new(0.0, 0.0);
                        }
                    }
                    self.ifft.process(&mut buf);
                    for c in 0..s0 {
                        out[c * big + r] = buf[c].re / s0 as f64;
                    }
                }
                Some((ring, out))
            })
            .collect();
        for (ring, out) in filtered {
            for c in 0..s0 {
                let node = c * rings + ring;
                vel[node * big..(node + 1) * big].copy_from_slice(&out[c * big..(c + 1) * big]);
            }
        }
    }
}

struct Stepper {
    stencil: Stencil,
    filter: Option<PolarFilter>,
    policy: FlowPolicy,
}

impl Stepper {
    fn new(grid: &GridImmersion, policy: &FlowPolicy) -> Self {
        let filter = (policy.polar_filter && grid.n > 1).then(|| PolarFilter::new(grid.shape[0]));
        Stepper { stencil: Stencil::new(&grid.shape, &grid.spacing, policy.order), filter, policy: policy.clone() }
    }

    fn bound(&self, grid: &GridImmersion) -> f64 {
        bound_with(grid, &self.policy, |node, axis, off| self.stencil.neighbor(node, axis, off))
    }

    fn velocity(&self, grid: &GridImmersion, dt: f64, out: &mut [f64]) -> Result<()> {
        mean_curvature_into(grid, &self.stencil, self.policy.degenerate_tol, out)?;
        if let Some(f) = &self.filter {
            f.apply(grid, &self.stencil, dt, self.policy.kappa, out);
        }
        Ok(())
    }

    fn step(&self, state: &FlowState, dt: f64) -> Result<FlowState> {
        let grid = &state.immersion;
        let len = grid.positions.len();
        let stage = |base: &[f64], k: &[f64], w: f64| -> GridImmersion {
            let mut g = grid.clone();
            g.positions.iter_mut().zip(base.iter().zip(k)).for_each(|(x, (b, v))| *x = b + w * v);
            g
        };
        let x0 = &grid.positions;
        let mut k1 = vec![0.0; len];
        self.velocity(grid, dt, &mut k1)?;
        let next = match self.policy.integrator {
            Integrator::Heun => {
                let g1 = stage(x0, &k1, dt);
                let mut k2 = vec![0.0; len];
                self.velocity(&g1, dt, &mut k2)?;
                let mut g = grid.clone();
                for i in 0..len {
                    g.positions[i] = x0[i] + 0.5 * dt * (k1[i] + k2[i]);
                }
                g
            }
            Integrator::Rk4 => {
                let mut k2 = vec![0.0; len];
                let mut k3 = vec![0.0; len];
                let mut k4 = vec![0.0; len];
                self.velocity(&stage(x0, &k1, 0.5 * dt), dt, &mut k2)?;
                self.velocity(&stage(x0, &k2, 0.5 * dt), dt, &mut k3)?;
                self.velocity(&stage(x0, &k3, dt), dt, &mut k4)?;
                let mut g = grid.clone();
                for i in 0..len {
                    g.positions[i] = x0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                g
            }
        };
        if let Some(node) = next.positions.iter().position(|x| !x.is_finite()) {
            return Err(PinchError::FlowDegenerate { node: node / grid.ambient });
        }
        Ok(FlowState { immersion: next, t: state.t + dt, step_index: state.step_index + 1 })
    }
}

/// One explicit step of `dF/dt = H`. Negative `dt` steps backwards, which is only
/// meaningful for the single steps used by [`verify_evolution_equations`].
pub fn step_mcf(state: &FlowState, dt: f64, policy: &FlowPolicy) -> Result<FlowState> {
    let bound = stability_bound(&state.immersion, policy);
    if dt.abs() > bound {
        return Err(PinchError::TimestepTooLarge { dt, bound });
    }
    Stepper::new(&state.immersion, policy).step(state, dt)
}

/// Max-norm residuals of the evolution equations for `g`, `|H|^2`, `|A|^2`, `|hat A|^2`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EvolutionResiduals {
    pub g: f64,
    pub h2: f64,
    pub a2: f64,
    pub hat_a2: f64,
}

impl EvolutionResiduals {
    pub fn as_array(&self) -> [f64; 4] {
        [self.g, self.h2, self.a2, self.hat_a2]
    }
}

/// Compare central time differences over `t +- dt` with the right-hand sides assembled
/// from the geometry at `t`. Nodes where `H` vanishes skip the `|hat A|^2` equation.
pub fn verify_evolution_equations(state: &FlowState, dt: f64, policy: &FlowPolicy) -> Result<EvolutionResiduals> {
    let stepper = Stepper::new(&state.immersion, policy);
    let fwd = stepper.step(state, dt)?;
    let bwd = stepper.step(state, -dt)?;
    let scalar_opts = GeometryOptions { order: policy.order, with_jets: false };
    let gp = fwd.geometry(&scalar_opts)?;
    let gm = bwd.geometry(&scalar_opts)?;
    let g0 = state.geometry(&GeometryOptions { order: policy.order, with_jets: true })?;
    let n = g0.n;
    let nodes = g0.nodes.len();

    let field = |f: &dyn Fn(&crate::immersion::NodeGeometry) -> f64| -> Vec<f64> { g0.nodes.iter().map(f).collect() };
    let lap_h2 = g0.laplacian(&field(&|g| g.h2));
    let lap_a2 = g0.laplacian(&field(&|g| g.a2));
    let lap_hat = g0.laplacian(&field(&|g| g.hat_a2().unwrap_or(0.0)));

    let mut res = EvolutionResiduals::default();
    for k in 0..nodes {
        let (p, m, c) = (&gp.nodes[k], &gm.nodes[k], &g0.nodes[k]);
        for i in 0..n {
            for j in 0..n {
                let lhs = (p.g[(i, j)] - m.g[(i, j)]) / (2.0 * dt);
                let a_ij: f64 = (0..g0.codim)
                    .map(|al| {
                        let col = c.frame.column(al);
                        let h_al: f64 = (0..g0.ambient).map(|r| col[r] * c.mean[r]).sum();
                        c.point.a[al][(i, j)] * h_al
                    })
                    .sum();
                res.g = res.g.max((lhs + 2.0 * a_ij).abs());
            }
        }
        let Some(grad) = &c.gradients else { continue };
        let r = reaction_terms(&grad.point);
        let dh2 = (p.h2 - m.h2) / (2.0 * dt);
        res.h2 = res.h2.max((dh2 - (lap_h2[k] - 2.0 * grad.grad_mean2 + 2.0 * r.adot_h2)).abs());
        let da2 = (p.a2 - m.a2) / (2.0 * dt);
        res.a2 = res.a2.max((da2 - (lap_a2[k] - 2.0 * grad.grad_a2 + 2.0 * r.aa2 + 2.0 * r.rperp2)).abs());
        if let (Some(hp), Some(hm)) = (p.hat_a2(), m.hat_a2()) {
            let dhat = (hp - hm) / (2.0 * dt);
            let rhs = lap_hat[k] + 2.0 * r.hat_aa2 + 2.0 * r.hat_rperp2 + 2.0 * r.rperp_nu1_2 - 2.0 * grad.grad_hat_a2
                + 4.0 * grad.q_dot;
            res.hat_a2 = res.hat_a2.max((dhat - rhs).abs());
        }
    }
    Ok(res)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    TEnd,
    MaxSteps,
    MaxCurvature,
    MinF,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::TEnd => "t_end",
            StopReason::MaxSteps => "max_steps",
            StopReason::MaxCurvature => "max_curvature",
            StopReason::MinF => "min_f",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: usize,
    pub min_f: f64,
    pub max_pinch_ratio: f64,
    pub max_hat_over_f1s: f64,
    pub max_hat_over_h2s: f64,
    pub max_h2: f64,
    pub max_a2: f64,
    pub max_hat_ratio: f64,
    pub residuals: Option<EvolutionResiduals>,
    pub stop_reason: Option<StopReason>,
}

/// Pinching constants used by the diagnostics. Below dimension five the theorem's
/// constants are undefined and the surrogates `c0 = 4/(3n)`, `sigma = min(1/(5n-8), 1/2)` are used.
pub fn diagnostic_constants(n: usize) -> (f64, f64, bool) {
    match make_constants(n, crate::constants::PinchingConstants::default_eps0(n)) {
        Ok(k) => (k.c0, k.sigma, false),
        Err(_) => {
            let nf = n as f64;
            let sigma = if 5 * n > 8 { (1.0 / (5.0 * nf - 8.0)).min(0.5) } else { 0.5 };
            (4.0 / (3.0 * nf), sigma, true)
        }
    }
}

pub fn diagnostics(field: &GeometryField, t: f64, step: usize, c0: f64, sigma: f64) -> DiagnosticsRecord {
    let mut rec = DiagnosticsRecord {
        t,
        step,
        min_f: f64::INFINITY,
        max_pinch_ratio: 0.0,
        max_hat_over_f1s: 0.0,
        max_hat_over_h2s: 0.0,
        max_h2: 0.0,
        max_a2: 0.0,
        max_hat_ratio: 0.0,
        residuals: None,
        stop_reason: None,
    };
    for node in &field.nodes {
        rec.max_h2 = rec.max_h2.max(node.h2);
        rec.max_a2 = rec.max_a2.max(node.a2);
        rec.max_pinch_ratio = rec.max_pinch_ratio.max(node.a2 / node.h2);
        match &node.decomposed {
            Some(d) => {
                let f = pinching_f(d, c0);
                rec.min_f = rec.min_f.min(f);
                let hat = d.hat_a2;
                let over_f = if f > 0.0 { hat / f.powf(1.0 - sigma) } else { f64::INFINITY };
                rec.max_hat_over_f1s = rec.max_hat_over_f1s.max(over_f);
                rec.max_hat_over_h2s = rec.max_hat_over_h2s.max(hat / d.h2.powf(1.0 - 0.5 * sigma));
                rec.max_hat_ratio = rec.max_hat_ratio.max(hat.sqrt() / d.mean_norm);
            }
            None => {
                rec.min_f = rec.min_f.min(c0 * node.h2 - node.a2);
                rec.max_hat_over_f1s = f64::INFINITY;
                rec.max_hat_over_h2s = f64::INFINITY;
                rec.max_hat_ratio = f64::INFINITY;
            }
        }
    }
    rec
}

#[derive(Debug, Clone)]
pub struct FlowRun {
    pub records: Vec<DiagnosticsRecord>,
    pub stop_reason: StopReason,
    pub final_state: FlowState,
    pub c0: f64,
    pub sigma: f64,
    pub outside_hypothesis: bool,
}

pub fn run_flow(initial: FlowState, policy: &FlowPolicy) -> Result<FlowRun> {
    if !(policy.t_end > initial.t) {
        return Err(PinchError::InvalidInput("t_end must exceed the initial time".into()));
    }
    if let Some(dt) = policy.dt {
        if !(dt > 0.0) {
            return Err(PinchError::InvalidInput("dt must be positive".into()));
        }
    }
    let (c0, sigma, outside_hypothesis) = diagnostic_constants(initial.immersion.n);
    let opts = GeometryOptions { order: policy.order, with_jets: false };
    let stepper = Stepper::new(&initial.immersion, policy);
    let record_every = policy.record_every.max(1);
    let mut records = Vec::new();
    let mut state = initial;
    let mut records_taken = 0usize;
    let mut take = |state: &FlowState, records: &mut Vec<DiagnosticsRecord>, last_dt: f64| -> Result<DiagnosticsRecord> {
        let field = state.geometry(&opts)?;
        let mut rec = diagnostics(&field, state.t, state.step_index, c0, sigma);
        if policy.verify_every > 0 && records_taken % policy.verify_every == 0 {
            rec.residuals = Some(verify_evolution_equations(state, last_dt, policy)?);
        }
        records_taken += 1;
        records.push(rec.clone());
        Ok(rec)
    };

    let first_dt = policy.dt.unwrap_or_else(|| 0.5 * stability_bound(&state.immersion, policy));
    let mut rec = take(&state, &mut records, first_dt)?;
    let stop = loop {
        if rec.max_a2 >= policy.max_a2 {
            break StopReason::MaxCurvature;
        }
        if rec.min_f < policy.min_f {
            break StopReason::MinF;
        }
        if state.t >= policy.t_end * (1.0 - 1e-12) {
            break StopReason::TEnd;
        }
        if state.step_index >= policy.max_steps {
            break StopReason::MaxSteps;
        }
        let bound = stepper.bound(&state.immersion);
        let mut dt = policy.dt.unwrap_or(0.5 * bound);
        if dt > bound {
            return Err(PinchError::TimestepTooLarge { dt, bound });
        }
        let remaining = policy.t_end - state.t;
        if dt >= remaining * (1.0 - 1e-9) {
            dt = remaining;
        }
        state = stepper.step(&state, dt)?;
        let done = state.t >= policy.t_end * (1.0 - 1e-12) || state.step_index >= policy.max_steps;
        if state.step_index % record_every == 0 || done {
            rec = take(&state, &mut records, dt)?;
        }
    };
    if let Some(last) = records.last_mut() {
        last.stop_reason = Some(stop);
    }
    Ok(FlowRun { records, stop_reason: stop, final_state: state, c0, sigma, outside_hypothesis })
}

pub const DIAGNOSTICS_HEADER: &str = "t,min_f,max_pinch_ratio,max_hatA_over_f1s,max_hatA_over_H2s,max_H2,res_g,res_H2,res_A2,res_hatA2,stop_reason";

pub fn write_diagnostics_csv<W: Write>(out: &mut W, records: &[DiagnosticsRecord]) -> Result<()> {
    writeln!(out, "{DIAGNOSTICS_HEADER}")?;
    for r in records {
        let res = match &r.residuals {
            Some(x) => x.as_array().iter().map(|v| fmt17(*v)).collect::<Vec<_>>().join(","),
            None => ",,,".to_string(),
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt17(r.t),
            fmt17(r.min_f),
            fmt17(r.max_pinch_ratio),
            fmt17(r.max_hat_over_f1s),
            fmt17(r.max_hat_over_h2s),
            fmt17(r.max_h2),
            res,
            r.stop_reason.map(|s| s.as_str()).unwrap_or("")
        )?;
    }
    Ok(())
}
