use rayon::prelude::*;

use super::geometry::{dot, GeometryField};
use crate::error::{PinchError, Result};

/// Max-norm residuals of the Gauss, Codazzi and Ricci equations over all nodes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StructureResiduals {
    pub gauss: f64,
    pub codazzi: f64,
    pub ricci: f64,
}

impl StructureResiduals {
    pub fn as_array(&self) -> [f64; 3] {
        [self.gauss, self.codazzi, self.ricci]
    }
}

/// Intrinsic curvature comes from differencing the nodal Christoffel symbols; normal
/// curvature from the normal projector `P` as `<[d_i P, d_j P] nu_a, nu_c>`. Both are
/// compared with the algebraic right-hand sides built from `A`.
pub fn structure_residuals(field: &GeometryField) -> Result<StructureResiduals> {
    if field.amb_t.is_empty() {
        return Err(PinchError::Precondition("structure residuals need a field computed with jets".into()));
    }
    let (n, big, m) = (field.n, field.ambient, field.codim);
    let nodes = field.nodes.len();
    let st = field.stencil();
    let w_g = n * n * n;
    let gamma: Vec<f64> = field.nodes.iter().flat_map(|g| g.christoffel.iter().copied()).collect();
    let w_a = n * n * big;
    let w_p = big * big;
    let w_t = n * n * n * big;

    let per_node: Vec<[f64; 3]> = (0..nodes)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n * w_g], vec![0.0; n * w_p]),
            |(dgamma, dproj), node| {
                let geo = &field.nodes[node];
                let a = &field.amb_a[node * w_a..(node + 1) * w_a];
                let av = |i: usize, j: usize| &a[(i * n + j) * big..(i * n + j + 1) * big];

                let t = &field.amb_t[node * w_t..(node + 1) * w_t];
                let mut codazzi = 0.0f64;
                for k in 0..n {
                    for i in 0..n {
                        for j in 0..n {
                            let x = &t[((k * n + i) * n + j) * big..((k * n + i) * n + j + 1) * big];
                            let y = &t[((i * n + k) * n + j) * big..((i * n + k) * n + j + 1) * big];
                            let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                            codazzi = codazzi.max(d2.sqrt());
                        }
                    }
                }
                if n == 1 {
                    return [0.0, codazzi, 0.0];
                }

                for k in 0..n {
                    st.d1(&gamma, w_g, node, k, &mut dgamma[k * w_g..(k + 1) * w_g]);
                }
                let gm = &geo.christoffel;
                let c = |l: usize, i: usize, j: usize| gm[(l * n + i) * n + j];
                let dc = |d: usize, l: usize, i: usize, j: usize| dgamma[d * w_g + (l * n + i) * n + j];
                let mut gauss = 0.0f64;
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            let mut r_up = [0.0; 3];
                            for q in 0..n {
                                let mut s = dc(i, q, j, k) - dc(j, q, i, k);
                                for p in 0..n {
                                    s += c(q, i, p) * c(p, j, k) - c(q, j, p) * c(p, i, k);
                                }
                                r_up[q] = s;
                            }
                            for l in 0..n {
                                let intrinsic: f64 = (0..n).map(|q| geo.g[(l, q)] * r_up[q]).sum();
                                let extrinsic = dot(av(j, k), av(i, l)) - dot(av(i, k), av(j, l));
                                gauss = gauss.max((intrinsic - extrinsic).abs());
                            }
                        }
                    }
                }

                for k in 0..n {
                    st.d1(&field.proj, w_p, node, k, &mut dproj[k * w_p..(k + 1) * w_p]);
                }
                let frame = &geo.frame;
                let mut ricci = 0.0f64;
                let mut u = vec![0.0; big];
                let mut v = vec![0.0; big];
                for i in 0..n {
                    for j in 0..n {
                        let mut frob = 0.0;
                        let pi = &dproj[i * w_p..(i + 1) * w_p];
                        let pj = &dproj[j * w_p..(j + 1) * w_p];
                        for al in 0..m {
                            let nu_a: Vec<f64> = frame.column(al).iter().copied().collect();
                            // [P_i, P_j] nu_a
                            for r in 0..big {
                                u[r] = dot(&pj[r * big..(r + 1) * big], &nu_a);
                                v[r] = dot(&pi[r * big..(r + 1) * big], &nu_a);
                            }
                            let comm: Vec<f64> = (0..big)
                                .map(|r| dot(&pi[r * big..(r + 1) * big], &u) - dot(&pj[r * big..(r + 1) * big], &v))
                                .collect();
                            for ga in 0..m {
                                let nu_c = frame.column(ga);
                                let conn: f64 = (0..big).map(|r| nu_c[r] * comm[r]).sum();
                                let mut alg = 0.0;
                                for k in 0..n {
                                    for l in 0..n {
                                        let w = geo.g_inv[(k, l)];
                                        alg += w
                                            * (geo.point.a[al][(j, k)] * geo.point.a[ga][(i, l)]
                                                - geo.point.a[al][(i, k)] * geo.point.a[ga][(j, l)]);
                                    }
                                }
                                frob += (conn - alg) * (conn - alg);
                            }
                        }
                        ricci = ricci.max(frob.sqrt());
                    }
                }
                [gauss, codazzi, ricci]
            },
        )
        .collect();
    let mut out = StructureResiduals::default();
    for r in per_node {
        out.gauss = out.gauss.max(r[0]);
        out.codazzi = out.codazzi.max(r[1]);
        out.ricci = out.ricci.max(r[2]);
    }
    Ok(out)
}

/// Smallest observed convergence order over consecutive refinements. Pairs whose errors
/// both sit at or below `floor` are already exact and do not constrain the order.
pub fn observed_order(errors: &[f64], spacings: &[f64], floor: f64) -> f64 {
    let mut worst = f64::INFINITY;
    for k in 1..errors.len().min(spacings.len()) {
        let (e0, e1) = (errors[k - 1], errors[k]);
        if e0 <= floor && e1 <= floor {
            continue;
        }
        let p = (e0 / e1).ln() / (spacings[k - 1] / spacings[k]).ln();
        worst = worst.min(if p.is_nan() { f64::NEG_INFINITY } else { p });
    }
    worst
}
