use approx::assert_relative_eq;

use pinchflow_core::symmetric::*;
use pinchflow_core::PinchError;

fn radius_error(traj: &Trajectory, a0: f64, b0: f64) -> f64 {
    let first = traj.states[0];
    traj.states
        .iter()
        .map(|s| {
            let ea = (s.a / (a0 * a0 - 2.0 * first.p as f64 * s.t).sqrt() - 1.0).abs();
            let eb = if first.q == 0 { 0.0 } else { (s.b / (b0 * b0 - 2.0 * first.q as f64 * s.t).sqrt() - 1.0).abs() };
            ea.max(eb)
        })
        .fold(0.0, f64::max)
}

#[test]
fn collapse_times() {
    let s = ProductSphereState::new(7, 1, 1.0, 1.0).unwrap();
    assert_relative_eq!(s.collapse_time(), 1.0 / 14.0, max_relative = 1e-15);
    let sphere = ProductSphereState::round_sphere(8, 1.0).unwrap();
    assert_relative_eq!(sphere.collapse_time(), 1.0 / 16.0, max_relative = 1e-15);

    let traj = evolve_product_sphere(&s, 0.1, 1e-4).unwrap();
    assert!(traj.truncated);
    assert_relative_eq!(traj.collapse_time, 1.0 / 14.0, max_relative = 1e-15);
    assert!(traj.states.last().unwrap().t < 1.0 / 14.0);
}

#[test]
fn integrator_matches_exact_radii() {
    let s = ProductSphereState::new(7, 1, 1.0, 1.0).unwrap();
    let traj = evolve_product_sphere(&s, 1.0 / 14.0 - 1e-2, 1e-5).unwrap();
    assert!(radius_error(&traj, 1.0, 1.0) <= 1e-10);
}

#[test]
fn halving_dt_at_least_quarters_error() {
    let s = ProductSphereState::new(3, 2, 1.0, 1.5).unwrap();
    let t_end = 0.9 * s.collapse_time();
    let coarse = radius_error(&evolve_product_sphere(&s, t_end, 4e-3).unwrap(), 1.0, 1.5);
    let fine = radius_error(&evolve_product_sphere(&s, t_end, 2e-3).unwrap(), 1.0, 1.5);
    assert!(coarse > 1e-14 && fine * 4.0 <= coarse, "{coarse} {fine}");
}

#[test]
fn s7_s1_monotone_quantities() {
    let s = ProductSphereState::new(7, 1, 1.0, 1.0).unwrap();
    let traj = evolve_product_sphere(&s, 1.0 / 14.0 - 1e-4, 1e-5).unwrap();
    let rep = monotonicity_report(&traj, 1.0 / 6.0, 1.0 / 32.0).unwrap();
    assert_relative_eq!(rep.rows[0].f, 1.0 / 3.0, max_relative = 1e-12);
    assert_relative_eq!(rep.rows[0].pinch_ratio, 0.16, max_relative = 1e-12);
    assert!(rep.f_increasing && rep.ratio_f_nonincreasing && rep.ratio_h_bounded, "{:?}", (
        rep.worst_f_drop,
        rep.worst_ratio_f_rise,
        rep.worst_ratio_h_excess
    ));
    for r in &rep.rows {
        assert!(r.f > 0.0);
    }
}

#[test]
fn round_sphere_ratios_vanish() {
    let s = ProductSphereState::round_sphere(8, 1.0).unwrap();
    let traj = evolve_product_sphere(&s, 0.05, 1e-4).unwrap();
    let rep = monotonicity_report(&traj, 1.0 / 6.0, 1.0 / 32.0).unwrap();
    assert!(rep.rows.iter().all(|r| r.hat_a2 == 0.0 && r.ratio_h_sigma == 0.0));
}

#[test]
fn unpinched_product_is_rejected() {
    let s = ProductSphereState::new(4, 4, 1.0, 1.0).unwrap();
    let traj = evolve_product_sphere(&s, 0.01, 1e-3).unwrap();
    assert!(matches!(
        monotonicity_report(&traj, 1.0 / 6.0, 1.0 / 32.0),
        Err(PinchError::OutsidePinchingCone { .. })
    ));
}

#[test]
fn curvature_scalars_scale_with_radii() {
    let s = ProductSphereState::new(5, 2, 1.3, 0.8).unwrap();
    let big = ProductSphereState::new(5, 2, 2.6, 1.6).unwrap();
    let (i0, i1) = (product_sphere_invariants(&s), product_sphere_invariants(&big));
    assert_relative_eq!(i1.a2 * 4.0, i0.a2, max_relative = 1e-14);
    assert_relative_eq!(i1.h2 * 4.0, i0.h2, max_relative = 1e-14);
    assert_relative_eq!(i1.hat_a2 * 4.0, i0.hat_a2, max_relative = 1e-14);
    assert_relative_eq!(i1.a2 / i1.h2, i0.a2 / i0.h2, max_relative = 1e-14);
}

#[test]
fn trajectory_csv_has_header_and_rows() {
    let s = ProductSphereState::new(7, 1, 1.0, 1.0).unwrap();
    let traj = evolve_product_sphere(&s, 0.01, 1e-3).unwrap();
    let rep = monotonicity_report(&traj, 1.0 / 6.0, 1.0 / 32.0).unwrap();
    let mut out = Vec::new();
    write_trajectory_csv(&rep.rows, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRAJECTORY_HEADER);
    assert_eq!(text.lines().count(), rep.rows.len() + 1);
}
