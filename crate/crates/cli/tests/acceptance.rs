//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Pass criterion numbers as arguments to run a subset.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use pinchflow_core::flow::{run_flow, verify_evolution_equations, FlowPolicy, FlowState, Integrator};
use pinchflow_core::immersion::{
    build_immersion, compute_geometry, observed_order, planarity_test, structure_residuals, DifferenceOrder,
    GeometryOptions, GridImmersion, ImmersionSpec,
};
use pinchflow_core::inequality::{
    run_batch, run_identity_suite, BatchConfig, IdentityConfig, Lemma, SLACK_TOLERANCE,
};
use pinchflow_core::symmetric::{evolve_product_sphere, monotonicity_report, product_sphere_curvature, ProductSphereState};
use pinchflow_core::{make_constants, pinching_f, reaction_terms, PinchingConstants};

type Outcome = Result<(bool, String), String>;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn inequality_ladder() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut worst_name = String::new();
    let mut checks = 0;
    let mut violations = 0;
    for n in [5, 6, 7, 8, 10, 12] {
        let constants = make_constants(n, PinchingConstants::default_eps0(n)).map_err(|e| e.to_string())?;
        for m in [1, 2, 3, 5] {
            let cfg = BatchConfig { n, m, samples: 100_000, seed: 42, constants, lemmas: Lemma::ALL.to_vec() };
            for s in run_batch(&cfg).map_err(|e| e.to_string())?.summaries {
                checks += 1;
                violations += s.violations;
                if s.min_slack < worst {
                    worst = s.min_slack;
                    worst_name = format!("{} n={n} m={m}", s.name);
                }
            }
        }
    }
    Ok((
        worst >= -SLACK_TOLERANCE && violations == 0,
        format!("{checks} checker branches, 1e5 samples each, worst normalized slack {worst:.3e} ({worst_name})"),
    ))
}

fn identity_suite() -> Outcome {
    let dims = vec![(5, 1), (6, 2), (7, 3), (8, 4), (10, 3), (12, 5)];
    let rows = run_identity_suite(&IdentityConfig { dims, instances: 100_000, seed: 42 }).map_err(|e| e.to_string())?;
    let worst = rows.iter().map(|r| r.max()).fold(0.0, f64::max);
    Ok((worst <= 1e-12, format!("{} dimension pairs x 1e5 instances, worst relative residual {worst:.3e}", rows.len())))
}

fn closed_form_values() -> Outcome {
    let s = ProductSphereState::new(7, 1, 1.0, 1.0).map_err(|e| e.to_string())?;
    let d = product_sphere_curvature(&s).map_err(|e| e.to_string())?;
    let r = reaction_terms(&d);
    let pairs = [
        ("|A|^2", d.a2, 8.0),
        ("|H|^2", d.h2, 50.0),
        ("|hatA|^2", d.hat_a2, 1.12),
        ("|h_ring|^2", d.h_ring2, 0.63),
        ("f", pinching_f(&d, 1.0 / 6.0), 1.0 / 3.0),
        ("|sum h_ring hatA|^2", r.h_ring_hat_a2, 0.7056),
        ("|<hatA,hatA>|^2", r.hat_aa2, 1.2544),
    ];
    let (name, worst) = pairs
        .iter()
        .map(|(n, x, y)| (*n, ((x - y) / y).abs()))
        .fold(("", 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
    Ok((worst <= 1e-12, format!("worst relative error {worst:.3e} ({name})")))
}

fn product_monotonicity() -> Outcome {
    let start = Instant::now();
    let s = ProductSphereState::new(7, 1, 1.0, 1.0).map_err(|e| e.to_string())?;
    let traj = evolve_product_sphere(&s, 1.0 / 14.0 - 1e-4, 1e-5).map_err(|e| e.to_string())?;
    let rep = monotonicity_report(&traj, 1.0 / 6.0, 1.0 / 32.0).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let ok = rep.f_increasing && rep.ratio_f_nonincreasing && rep.ratio_h_bounded && secs < 1.0;
    Ok((
        ok,
        format!(
            "{} steps in {secs:.3}s; f increasing {}, ratio_f nonincreasing {} (worst rise {:.2e}), ratio_H bounded {} (worst excess {:.2e})",
            traj.states.len() - 1,
            rep.f_increasing,
            rep.ratio_f_nonincreasing,
            rep.worst_ratio_f_rise,
            rep.ratio_h_bounded,
            rep.worst_ratio_h_excess
        ),
    ))
}

fn grid(spec: &ImmersionSpec) -> Result<GridImmersion, String> {
    build_immersion(spec).map_err(|e| e.to_string())
}

fn structure_equations() -> Outcome {
    let mut res = Vec::new();
    let mut hs = Vec::new();
    for s in [32, 64, 128] {
        let g = grid(&ImmersionSpec::CliffordTorus { radii: vec![1.0, 1.0], nodes: s, shear: 0.3 })?;
        let f = compute_geometry(&g, &GeometryOptions::default()).map_err(|e| e.to_string())?;
        res.push(structure_residuals(&f).map_err(|e| e.to_string())?.as_array());
        hs.push(TWO_PI / s as f64);
    }
    let mut ok = true;
    let mut parts = Vec::new();
    for (k, name) in ["gauss", "codazzi", "ricci"].iter().enumerate() {
        let errs: Vec<f64> = res.iter().map(|r| r[k]).collect();
        let order = observed_order(&errs, &hs, 1e-12);
        ok &= order >= 1.8;
        parts.push(format!("{name} {:.2e}/{:.2e}/{:.2e} order {order:.2}", errs[0], errs[1], errs[2]));
    }
    Ok((ok, format!("sheared Clifford torus 32/64/128: {}", parts.join("; "))))
}

fn evolution_orders(spec: impl Fn(usize) -> ImmersionSpec, sizes: &[usize]) -> Result<(Vec<[f64; 4]>, [f64; 4]), String> {
    let mut res = Vec::new();
    let mut hs = Vec::new();
    for &s in sizes {
        let h = TWO_PI / s as f64;
        let state = FlowState::new(grid(&spec(s))?);
        let r = verify_evolution_equations(&state, 0.05 * h * h, &FlowPolicy::default()).map_err(|e| e.to_string())?;
        res.push(r.as_array());
        hs.push(h);
    }
    let mut orders = [0.0; 4];
    for (k, o) in orders.iter_mut().enumerate() {
        let errs: Vec<f64> = res.iter().map(|r| r[k]).collect();
        *o = observed_order(&errs, &hs, 1e-12);
    }
    Ok((res, orders))
}

fn evolution_equations() -> Outcome {
    let (_, circle) = evolution_orders(|s| ImmersionSpec::Circle { radius: 1.0, nodes: s }, &[32, 64, 128])?;
    let (_, torus) = evolution_orders(
        |s| ImmersionSpec::CliffordTorus { radii: vec![1.0, 1.0], nodes: s, shear: 0.0 },
        &[32, 64, 128],
    )?;
    let orders_ok = circle.iter().chain(&torus).all(|&o| o >= 1.8);

    let policy = FlowPolicy {
        dt: Some(1e-5),
        t_end: 0.25,
        order: DifferenceOrder::Fourth,
        integrator: Integrator::Heun,
        record_every: usize::MAX,
        ..Default::default()
    };
    let run = run_flow(FlowState::new(grid(&ImmersionSpec::Circle { radius: 1.0, nodes: 256 })?), &policy)
        .map_err(|e| e.to_string())?;
    let field = compute_geometry(
        &run.final_state.immersion,
        &GeometryOptions { order: DifferenceOrder::Fourth, with_jets: false },
    )
    .map_err(|e| e.to_string())?;
    let exact = 1.0 / (1.0 - 2.0 * run.final_state.t);
    let h2_err = field.nodes.iter().map(|g| (g.h2 - exact).abs()).fold(0.0, f64::max);
    let fmt = |o: &[f64; 4]| o.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join("/");
    Ok((
        orders_ok && h2_err <= 1e-6,
        format!(
            "orders g/H2/A2/hatA2: circle {} torus {}; circle |H|^2 error at t=0.25 {h2_err:.2e}",
            fmt(&circle),
            fmt(&torus)
        ),
    ))
}

fn planarity() -> Outcome {
    let rotated = [
        ImmersionSpec::Embedded {
            base: Box::new(ImmersionSpec::Circle { radius: 1.5, nodes: 64 }),
            ambient: 5,
            seed: 1,
            shift: 1.0,
        },
        ImmersionSpec::Embedded {
            base: Box::new(ImmersionSpec::RoundSphere { radius: 1.0, nodes: 64 }),
            ambient: 7,
            seed: 2,
            shift: 1.0,
        },
        ImmersionSpec::Embedded {
            base: Box::new(ImmersionSpec::TorusOfRevolution { major: 2.0, minor: 0.7, nodes: [64, 48] }),
            ambient: 6,
            seed: 3,
            shift: 1.0,
        },
    ];
    let mut worst_ratio = 0.0f64;
    let mut worst_res = 0.0f64;
    for spec in &rotated {
        let p = planarity_test(&grid(spec)?, 1e-9).map_err(|e| e.to_string())?;
        worst_ratio = worst_ratio.max(p.max_hat_ratio);
        worst_res = worst_res.max(p.affine_residual);
    }
    let clifford = ImmersionSpec::CliffordTorus { radii: vec![1.0, 1.0], nodes: 64, shear: 0.0 };
    let c = planarity_test(&grid(&clifford)?, 1e-9).map_err(|e| e.to_string())?;
    let ok = worst_ratio <= 1e-10 && worst_res <= 1e-10 && c.max_hat_ratio >= 0.1 && c.affine_residual >= 0.1;
    Ok((
        ok,
        format!(
            "rotated hypersurfaces: max ratio {worst_ratio:.2e}, affine residual {worst_res:.2e}; Clifford torus: ratio {:.3}, residual {:.3}",
            c.max_hat_ratio, c.affine_residual
        ),
    ))
}

fn radius_error(g: &GridImmersion, radius: f64) -> f64 {
    (0..g.nodes())
        .map(|k| {
            let r = g.position(k).iter().map(|x| x * x).sum::<f64>().sqrt();
            (r / radius - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

fn exact_flows() -> Outcome {
    let circle_policy = FlowPolicy { dt: Some(1e-5), t_end: 0.25, record_every: usize::MAX, ..Default::default() };
    let run = run_flow(FlowState::new(grid(&ImmersionSpec::Circle { radius: 1.0, nodes: 256 })?), &circle_policy)
        .map_err(|e| e.to_string())?;
    let circle = radius_error(&run.final_state.immersion, (1.0f64 - 2.0 * run.final_state.t).sqrt());

    let sphere_policy = FlowPolicy { polar_filter: true, t_end: 0.125, ..circle_policy };
    let run = run_flow(FlowState::new(grid(&ImmersionSpec::RoundSphere { radius: 1.0, nodes: 256 })?), &sphere_policy)
        .map_err(|e| e.to_string())?;
    let sphere = radius_error(&run.final_state.immersion, (1.0f64 - 4.0 * run.final_state.t).sqrt());
    Ok((
        circle <= 5e-4 && sphere <= 5e-4,
        format!("max relative radius error: circle {circle:.2e} at t=0.25, sphere {sphere:.2e} at t=0.125 (256 nodes per axis)"),
    ))
}

fn run_binary(config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_pinchflow"))
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .status()
        .map_err(|e| e.to_string())?;
    if status.code() == Some(0) {
        Ok(())
    } else {
        Err(format!("{} exited with {status}", config.display()))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let configs = [
        r#"{"kind":"inequality-batch","n":[6,8],"m":[2,3],"samples":20000,"seed":7}"#,
        r#"{"kind":"violation-search","lemma":"gradient_q","n":8,"m":3,"seed":3,"restarts":16,"budget":300}"#,
        r#"{"kind":"identity-suite","n":8,"m":[1,3],"instances":20000,"seed":5}"#,
        r#"{"kind":"product-flow","p":7,"q":1,"a":1.0,"b":1.0,"t_end":0.0713}"#,
        r#"{"kind":"grid-flow","immersion":{"type":"perturbed","base":{"type":"clifford-torus","radii":[1.0,1.0],"nodes":32,"shear":0.1},"eps":0.05},"policy":{"t_end":0.02,"record_every":20,"verify_every":2},"snapshots":true}"#,
    ];
    let mut files = 0;
    for (i, text) in configs.iter().enumerate() {
        let cfg = dir.path().join(format!("config{i}.json"));
        std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
        let (a, b) = (dir.path().join(format!("a{i}")), dir.path().join(format!("b{i}")));
        run_binary(&cfg, &a)?;
        run_binary(&cfg, &b)?;
        let mut names: Vec<_> = std::fs::read_dir(&a)
            .map_err(|e| e.to_string())?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .map(|e| e.file_name())
            .collect();
        names.sort();
        for name in names {
            let x = std::fs::read(a.join(&name)).map_err(|e| e.to_string())?;
            let y = std::fs::read(b.join(&name)).map_err(|e| e.to_string())?;
            if x != y {
                return Ok((false, format!("config {i}: {} differs between runs", name.to_string_lossy())));
            }
            files += 1;
        }
    }
    Ok((true, format!("{} configs, {files} output files byte-identical across two runs", configs.len())))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "inequality ladder", inequality_ladder),
        (2, "identity suite", identity_suite),
        (3, "closed-form product-sphere values", closed_form_values),
        (4, "homogeneous monotonicity", product_monotonicity),
        (5, "structure equations", structure_equations),
        (6, "evolution equations", evolution_equations),
        (7, "planarity", planarity),
        (8, "exact-solution flows", exact_flows),
        (9, "determinism", determinism),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {id} {verdict} {name}: {detail} [{:.1}s]", start.elapsed().as_secs_f64());
        if !ok {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
