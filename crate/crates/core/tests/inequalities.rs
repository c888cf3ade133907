use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use pinchflow_core::inequality::*;
use pinchflow_core::jet::CurvatureJet;
use pinchflow_core::symmetric::{product_sphere_curvature, ProductSphereState};
use pinchflow_core::{decompose_curvature, make_constants, CurvaturePoint, PinchError};

fn s7s1() -> pinchflow_core::DecomposedCurvature {
    product_sphere_curvature(&ProductSphereState::new(7, 1, 1.0, 1.0).unwrap()).unwrap()
}

#[test]
fn ab_estimates_on_product_sphere() {
    let r = check_ab_estimates(&s7s1()).unwrap();
    assert_eq!(r.len(), 2);
    assert_relative_eq!(r[0].rhs, 1.4112, max_relative = 1e-12);
    assert_relative_eq!(r[0].slack, 0.7056, max_relative = 1e-12);
    assert_relative_eq!(r[1].rhs, 1.8816, max_relative = 1e-12);
    assert_relative_eq!(r[1].slack, 0.6272, max_relative = 1e-12);
}

#[test]
fn reaction_checks_on_product_sphere() {
    let d = s7s1();
    let up = check_reaction_upper(&d).unwrap();
    assert_relative_eq!(up[0].slack, 1.8816 + 2.0 * 0.63 * 1.12 - 1.2544, max_relative = 1e-12);
    assert!(check_reaction_lower(&d, 1.0 / 6.0).unwrap()[0].slack >= 0.0);
    assert!(check_reaction_combined(&d, 1.0 / 6.0, 1.0 / 32.0).unwrap()[0].slack > 0.0);
}

#[test]
fn hat_a_zero_gives_zero_slacks() {
    let n = 6;
    let a = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 + i as f64 * 0.1 } else { 0.02 * (i + j) as f64 });
    let p = CurvaturePoint::orthonormal(vec![a, DMatrix::zeros(n, n)]).unwrap();
    let d = decompose_curvature(&p).unwrap();
    for r in check_ab_estimates(&d).unwrap() {
        assert!(r.slack.abs() < 1e-12, "{r:?}");
    }
    assert!(check_reaction_upper(&d).unwrap()[0].slack.abs() < 1e-12);
}

#[test]
fn commuting_hat_a_has_half_slack() {
    // m = 2: one normal beyond nu1, so the normal curvature of hat A vanishes.
    let mut s = Sampler::new(3);
    for _ in 0..100 {
        let d = decompose_curvature(&s.point(7, 2, 0.18).unwrap()).unwrap();
        let r = check_ab_estimates(&d).unwrap();
        assert_relative_eq!(r[1].slack, 0.5 * d.hat_a2 * d.hat_a2, max_relative = 1e-10, epsilon = 1e-14);
    }
}

#[test]
fn outside_cone_is_reported() {
    let d = product_sphere_curvature(&ProductSphereState::new(4, 4, 1.0, 1.0).unwrap()).unwrap();
    assert!(matches!(check_reaction_lower(&d, 1.0 / 6.0), Err(PinchError::OutsidePinchingCone { .. })));
}

#[test]
fn reaction_combined_is_affine_in_delta() {
    let mut s = Sampler::new(17);
    for _ in 0..200 {
        let d = decompose_curvature(&s.point(8, 3, 1.0 / 6.0).unwrap()).unwrap();
        let at = |delta: f64| check_reaction_combined(&d, 1.0 / 6.0, delta).unwrap()[0].slack;
        let (a, b, c) = (at(0.1), at(0.2), at(0.3));
        let scale = d.a2 * d.a2;
        assert!((a + c - 2.0 * b).abs() <= 1e-12 * scale);
        assert!(a >= b - 1e-12 * scale);
    }
}

#[test]
fn zero_jet_slacks_are_nonnegative() {
    let k = make_constants(8, 0.0).unwrap();
    let mut s = Sampler::new(23);
    let p = s.point(8, 3, 1.0 / 6.0).unwrap();
    let jet = CurvatureJet::new(p, vec![0.0; 8 * 8 * 8 * 3]).unwrap();
    for r in check_bochner_hat_a(&jet, &k)
        .unwrap()
        .into_iter()
        .chain(check_bochner_f(&jet, &k).unwrap())
        .chain(check_gradient_q(&jet, &k).unwrap())
        .chain(check_gradient_combined(&jet, &k).unwrap())
    {
        assert!(r.lhs.abs() < 1e-14 && r.slack >= -1e-14, "{r:?}");
    }
}

#[test]
fn n8_batch_has_no_violations_and_is_deterministic() {
    let cfg = BatchConfig {
        n: 8,
        m: 3,
        samples: 10_000,
        seed: 42,
        constants: make_constants(8, 0.0).unwrap(),
        lemmas: Lemma::ALL.to_vec(),
    };
    let a = run_batch(&cfg).unwrap();
    for s in &a.summaries {
        assert!(s.passed(), "{s:?}");
        assert_eq!(s.violations, 0);
        assert!(s.min_slack >= -SLACK_TOLERANCE);
    }
    assert!(a.acceptance_rate > 0.0);
    let b = run_batch(&cfg).unwrap();
    assert_eq!(a.summaries, b.summaries);
}

#[test]
fn critical_branch_batch_for_n5() {
    let cfg = BatchConfig {
        n: 5,
        m: 2,
        samples: 5_000,
        seed: 1,
        constants: make_constants(5, 0.01).unwrap(),
        lemmas: vec![Lemma::BochnerHatA, Lemma::BochnerF, Lemma::GradientCombined],
    };
    for s in run_batch(&cfg).unwrap().summaries {
        assert!(s.passed(), "{s:?}");
    }
}

#[test]
fn search_with_zero_budget_returns_best_sample() {
    let cfg = SearchConfig {
        lemma: Lemma::AbEstimates,
        n: 6,
        m: 2,
        constants: make_constants(6, 0.005).unwrap(),
        seed: 4,
        restarts: 16,
        budget: 0,
    };
    let out = violation_search(&cfg).unwrap();
    assert!(out.normalized_slack >= -SLACK_TOLERANCE);
    assert!(!out.worst.inputs_hash.is_empty());
    assert_eq!(violation_search(&cfg).unwrap().worst, out.worst);
}

#[test]
fn combined_reaction_search_approaches_zero() {
    let n = 8;
    let k = make_constants(n, 0.0).unwrap().with_overrides(None, Some(0.5), None).unwrap();
    let cfg = SearchConfig { lemma: Lemma::ReactionCombined, n, m: 3, constants: k, seed: 9, restarts: 32, budget: 400 };
    let out = violation_search(&cfg).unwrap();
    assert!(out.normalized_slack >= -SLACK_TOLERANCE);
    assert!(out.normalized_slack < 1e-2, "{}", out.normalized_slack);
}

fn scaled_jet(j: &CurvatureJet, lambda: f64) -> CurvatureJet {
    let a = j.point.a.iter().map(|x| x * lambda).collect();
    let t = j.t.iter().map(|x| x * lambda * lambda).collect();
    CurvatureJet::new(CurvaturePoint::new(j.point.g.clone(), a).unwrap(), t).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn slacks_are_homogeneous_of_degree_four(seed in 0u64..5000, lambda in 0.2f64..5.0) {
        let k = make_constants(8, 0.0).unwrap();
        let mut s = Sampler::new(seed);
        let j0 = s.jet(8, 2, 1.0 / 6.0).unwrap();
        let j1 = scaled_jet(&j0, lambda);
        let l4 = lambda.powi(4);
        let all = |j: &CurvatureJet| -> Vec<SlackReport> {
            let d = decompose_curvature(&j.point).unwrap();
            let mut v = check_ab_estimates(&d).unwrap();
            v.extend(check_reaction_upper(&d).unwrap());
            v.extend(check_reaction_lower(&d, k.c0).unwrap());
            v.extend(check_reaction_combined(&d, k.c0, k.delta).unwrap());
            v.extend(check_f_evolution_lower(j, k.c0).unwrap());
            v.extend(check_bochner_hat_a(j, &k).unwrap());
            v.extend(check_bochner_f(j, &k).unwrap());
            v.extend(check_gradient_q(j, &k).unwrap());
            v.extend(check_gradient_combined(j, &k).unwrap());
            v
        };
        let a2 = decompose_curvature(&j1.point).unwrap().a2;
        let t2 = j1.t.iter().map(|x| x * x).sum::<f64>();
        let floor = 1e-12 * (a2 * a2 + t2);
        for (r0, r1) in all(&j0).iter().zip(all(&j1).iter()) {
            let scale = r1.lhs.abs().max(r1.rhs.abs());
            prop_assert!(
                (r0.slack * l4 - r1.slack).abs() <= 1e-10 * scale + floor,
                "{} {} {}", r0.name, r0.slack * l4, r1.slack
            );
        }
    }
}
