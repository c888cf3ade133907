use approx::assert_relative_eq;
use nalgebra::DMatrix;
use proptest::prelude::*;

use pinchflow_core::inequality::Sampler;
use pinchflow_core::jet::{derive_gradient_quantities, jet_identity_residuals, CurvatureJet};
use pinchflow_core::symmetric::{product_sphere_curvature, product_sphere_point, ProductSphereState};
use pinchflow_core::tensor::{pinching_identity_residual, reaction_identity_residuals};
use pinchflow_core::{decompose_curvature, make_constants, pinching_f, reaction_terms, CurvaturePoint, PinchError};

fn diag(n: usize, entries: &[(usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for &(i, v) in entries {
        m[(i, i)] = v;
    }
    m
}

/// `S^7(1) x S^1(1)` with its two radial normals rotated by `angle` inside the normal plane.
fn product_point_rotated(angle: f64) -> CurvaturePoint {
    let a_first = diag(8, &(0..7).map(|i| (i, 1.0)).collect::<Vec<_>>());
    let a_second = diag(8, &[(7, 1.0)]);
    let (c, s) = (angle.cos(), angle.sin());
    CurvaturePoint::orthonormal(vec![&a_first * c - &a_second * s, &a_first * s + &a_second * c]).unwrap()
}

#[test]
fn constants_match_dimension_table() {
    let k8 = make_constants(8, 0.0).unwrap();
    assert_relative_eq!(k8.c_n, 1.0 / 6.0, max_relative = 1e-15);
    assert_relative_eq!(k8.c0, 1.0 / 6.0, max_relative = 1e-15);
    assert_relative_eq!(k8.delta, 1.0 / 32.0, max_relative = 1e-15);

    let k5 = make_constants(5, 0.01).unwrap();
    assert_relative_eq!(k5.c_n, 9.0 / 35.0, max_relative = 1e-15);
    assert_relative_eq!(k5.c0, 9.0 / 35.0 - 0.01, max_relative = 1e-15);

    let k7 = make_constants(7, 0.001).unwrap();
    assert_relative_eq!(k7.c_n, 4.0 / 21.0, max_relative = 1e-15);

    assert!(matches!(make_constants(4, 0.0), Err(PinchError::UnsupportedDimension(4))));
    assert!(matches!(make_constants(5, 0.2), Err(PinchError::InvalidSlack(_))));
    let err = k8.with_overrides(Some(0.5), None, None).unwrap_err();
    assert!(err.to_string().contains("c0 exceeds c_n"));
}

#[test]
fn round_sphere_is_umbilic() {
    let d = decompose_curvature(&product_sphere_point(&ProductSphereState::round_sphere(8, 1.0).unwrap())).unwrap();
    assert_relative_eq!(d.h2, 64.0, max_relative = 1e-14);
    assert!(d.hat_a2.abs() < 1e-14);
    assert!(d.h_ring2.abs() < 1e-13);
    assert_relative_eq!(pinching_f(&d, 1.0 / 6.0), 8.0 / 3.0, max_relative = 1e-13);
}

#[test]
fn product_sphere_values_in_any_normal_frame() {
    for angle in [0.0, 0.3, 1.1, -2.4] {
        let d = decompose_curvature(&product_point_rotated(angle)).unwrap();
        assert_relative_eq!(d.a2, 8.0, max_relative = 1e-12);
        assert_relative_eq!(d.h2, 50.0, max_relative = 1e-12);
        assert_relative_eq!(d.hat_a2, 1.12, max_relative = 1e-12);
        assert_relative_eq!(d.h_ring2, 0.63, max_relative = 1e-12);
        assert_relative_eq!(d.hat_a2 + d.h_ring2 + d.h2 / 8.0, d.a2, max_relative = 1e-12);
        assert_relative_eq!(pinching_f(&d, 1.0 / 6.0), 1.0 / 3.0, max_relative = 1e-12);
        let r = reaction_terms(&d);
        assert_relative_eq!(r.h_ring_hat_a2, 0.7056, max_relative = 1e-12);
        assert_relative_eq!(r.hat_aa2, 1.2544, max_relative = 1e-12);
        assert!(r.rperp_nu1_2.abs() < 1e-12);
        assert!(r.rperp2.abs() < 1e-12);
    }
}

#[test]
fn equal_factor_product_and_cylinder_limit() {
    let d = product_sphere_curvature(&ProductSphereState::new(4, 4, 1.0, 1.0).unwrap()).unwrap();
    assert_relative_eq!(d.hat_a2, 4.0, max_relative = 1e-12);
    assert_relative_eq!(d.a2 / d.h2, 0.25, max_relative = 1e-12);

    let n = 8;
    let wide = product_sphere_curvature(&ProductSphereState::new(n - 1, 1, 1.0, 1e6).unwrap()).unwrap();
    assert_relative_eq!(wide.a2 / wide.h2, 1.0 / (n - 1) as f64, max_relative = 1e-10);
}

#[test]
fn trivial_reaction_cases() {
    // Only a trace part along one normal: no hat A, no normal curvature.
    let a = diag(5, &[(0, 1.0), (1, 2.0), (2, 0.5), (3, 1.5), (4, 3.0)]);
    let p = CurvaturePoint::orthonormal(vec![a.clone(), DMatrix::zeros(5, 5), DMatrix::zeros(5, 5)]).unwrap();
    let d = decompose_curvature(&p).unwrap();
    assert!(d.hat_a2 < 1e-28);
    let r = reaction_terms(&d);
    assert!(r.rperp2.abs() < 1e-12);
    let h2 = a.norm_squared();
    assert_relative_eq!(r.aa2, h2 * h2, max_relative = 1e-12);
}

#[test]
fn boundary_of_cone_has_zero_f() {
    let d = product_sphere_curvature(&ProductSphereState::new(7, 1, 1.0, 1.0).unwrap()).unwrap();
    let c = d.a2 / d.h2;
    assert!(pinching_f(&d, c).abs() < 1e-13);
}

#[test]
fn zero_mean_curvature_is_rejected() {
    let a = diag(3, &[(0, 1.0), (1, -1.0)]);
    let p = CurvaturePoint::orthonormal(vec![a]).unwrap();
    assert!(matches!(decompose_curvature(&p), Err(PinchError::DegenerateMeanCurvature { .. })));
}

#[test]
fn zero_jet_has_no_gradients() {
    let p = product_point_rotated(0.4);
    let jet = CurvatureJet::new(p, vec![0.0; 8 * 8 * 8 * 2]).unwrap();
    let g = derive_gradient_quantities(&jet).unwrap();
    for v in [g.grad_a2, g.grad_mean2, g.grad_nu1_2, g.grad_hat_a2, g.q_dot, g.e1_2, g.eperp_2] {
        assert_eq!(v, 0.0);
    }
    assert!(g.q.iter().all(|&x| x == 0.0));
    assert_eq!(jet_identity_residuals(&g).max(), 0.0);
}

#[test]
fn trace_jet_along_mean_direction() {
    let (n, m) = (6, 3);
    let p = CurvaturePoint::orthonormal(vec![DMatrix::identity(n, n), DMatrix::zeros(n, n), DMatrix::zeros(n, n)]).unwrap();
    let w = [0.3, -1.2, 0.5, 0.0, 2.0, -0.7];
    let mut t = vec![0.0; n * n * n * m];
    let kron = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                t[((i * n + j) * n + k) * m] = kron(i, j) * w[k] + kron(j, k) * w[i] + kron(k, i) * w[j];
            }
        }
    }
    let g = derive_gradient_quantities(&CurvatureJet::new(p, t).unwrap()).unwrap();
    assert!(g.grad_nu1.iter().all(|x| x.abs() < 1e-14));
    for (i, wi) in w.iter().enumerate() {
        assert_relative_eq!(g.grad_mean_norm[i], (n + 2) as f64 * wi, max_relative = 1e-13, epsilon = 1e-14);
    }
}

#[test]
fn codimension_one_jets_have_no_normal_rotation() {
    let mut s = Sampler::new(11);
    for _ in 0..200 {
        let jet = s.jet(7, 1, 0.25).unwrap();
        let g = derive_gradient_quantities(&jet).unwrap();
        assert!(g.grad_nu1_2 == 0.0 && g.q_dot == 0.0);
        assert!(jet_identity_residuals(&g).max() <= 1e-12);
    }
}

#[test]
fn random_jets_satisfy_identities_and_trace_estimates() {
    let mut s = Sampler::new(5);
    let n = 8usize;
    let nf = n as f64;
    for _ in 0..10_000 {
        let jet = s.jet(n, 3, 1.0 / 6.0).unwrap();
        let g = derive_gradient_quantities(&jet).unwrap();
        assert!(jet_identity_residuals(&g).max() <= 1e-12);
        let scale = g.grad_a2.max(1e-300);
        assert!(3.0 / (nf + 2.0) * g.grad_mean2 <= g.grad_a2 + 1e-12 * scale);
        let k = 2.0 * (nf - 1.0) / (nf * (nf + 2.0));
        assert!(k * g.grad_mean_norm2 <= g.proj_ring2 + 1e-12 * scale);
    }
}

#[test]
fn random_points_satisfy_reaction_identities() {
    let mut s = Sampler::new(9);
    for (n, m) in [(5, 1), (6, 2), (9, 4), (10, 3)] {
        for _ in 0..2000 {
            let d = decompose_curvature(&s.point(n, m, 0.3).unwrap()).unwrap();
            let r = reaction_terms(&d);
            assert!(reaction_identity_residuals(&d, &r).into_iter().fold(0.0, f64::max) <= 1e-12);
            assert!(pinching_identity_residual(&d, 0.2) <= 1e-12);
        }
    }
}

fn random_orthogonal(m: usize, seed: &[f64]) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |i, j| seed[(i * m + j) % seed.len()] + (i * 7 + j * 3) as f64 * 0.01);
    g.qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scalars_are_frame_invariant(seed in 0u64..10_000, entries in prop::collection::vec(-1.0f64..1.0, 9)) {
        let mut s = Sampler::new(seed);
        let p = s.point(6, 3, 0.22).unwrap();
        let q = random_orthogonal(3, &entries);
        let rotated: Vec<DMatrix<f64>> = (0..3)
            .map(|b| (0..3).fold(DMatrix::zeros(6, 6), |acc, a| acc + &p.a[a] * q[(b, a)]))
            .collect();
        let d0 = decompose_curvature(&p).unwrap();
        let d1 = decompose_curvature(&CurvaturePoint::orthonormal(rotated).unwrap()).unwrap();
        let (r0, r1) = (reaction_terms(&d0), reaction_terms(&d1));
        let pairs = [
            (d0.a2, d1.a2), (d0.h2, d1.h2), (d0.hat_a2, d1.hat_a2), (d0.h_ring2, d1.h_ring2),
            (r0.adot_h2, r1.adot_h2), (r0.aa2, r1.aa2), (r0.rperp2, r1.rperp2),
            (r0.hat_aa2, r1.hat_aa2), (r0.hat_rperp2, r1.hat_rperp2), (r0.rperp_nu1_2, r1.rperp_nu1_2),
            (r0.h_ring_hat_a2, r1.h_ring_hat_a2),
        ];
        let scale = r0.aa2.max(d0.a2 * d0.a2);
        for (x, y) in pairs {
            prop_assert!((x - y).abs() <= 1e-12 * scale.max(1.0), "{x} vs {y}");
        }
    }

    #[test]
    fn curvature_scalars_are_homogeneous(seed in 0u64..10_000, lambda in 0.1f64..10.0) {
        let mut s = Sampler::new(seed);
        let p = s.point(7, 2, 0.2).unwrap();
        let scaled = CurvaturePoint::orthonormal(p.a.iter().map(|a| a * lambda).collect()).unwrap();
        let (d0, d1) = (decompose_curvature(&p).unwrap(), decompose_curvature(&scaled).unwrap());
        let (r0, r1) = (reaction_terms(&d0), reaction_terms(&d1));
        let l2 = lambda * lambda;
        for (x, y) in [(d0.a2, d1.a2), (d0.h2, d1.h2), (d0.hat_a2, d1.hat_a2)] {
            prop_assert!((x * l2 - y).abs() <= 1e-12 * y.abs().max(1e-300) + 1e-13 * d1.a2);
        }
        let f0 = pinching_f(&d0, 0.19);
        let f1 = pinching_f(&d1, 0.19);
        prop_assert!((f0 * l2 - f1).abs() <= 1e-12 * d1.a2);
        let l4 = l2 * l2;
        for (x, y) in [(r0.aa2, r1.aa2), (r0.rperp2, r1.rperp2), (r0.adot_h2, r1.adot_h2)] {
            prop_assert!((x * l4 - y).abs() <= 1e-12 * d1.a2 * d1.a2);
        }
    }
}
