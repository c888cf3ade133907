//! First-order jets `(A, T = nabla^perp A)` and the gradient quantities split along `nu1`.
//!
//! `T` is stored flat as `t[((i * n + j) * n + k) * m + alpha]` with `i` the
//! differentiation index; Codazzi makes it totally symmetric in `(i, j, k)`.

use nalgebra::DMatrix;

use crate::error::{PinchError, Result};
use crate::tensor::{decompose_curvature, CurvaturePoint, DecomposedCurvature};

#[derive(Debug, Clone)]
pub struct CurvatureJet {
    pub point: CurvaturePoint,
    pub t: Vec<f64>,
}

impl CurvatureJet {
    pub fn new(point: CurvaturePoint, t: Vec<f64>) -> Result<Self> {
        let n = point.dim();
        let m = point.codim();
        if t.len() != n * n * n * m {
            return Err(PinchError::InvalidJet(format!(
                "T has {} entries, expected {}",
                t.len(),
                n * n * n * m
            )));
        }
        let asym = codazzi_asymmetry(&t, n, m);
        let scale = t.iter().fold(0.0f64, |s, x| s.max(x.abs()));
        if asym > 1e-10 * scale.max(f64::MIN_POSITIVE) {
            return Err(PinchError::InvalidJet(format!("Codazzi symmetry violated by {asym:e}")));
        }
        Ok(CurvatureJet { point, t })
    }

    pub fn dim(&self) -> usize {
        self.point.dim()
    }

    pub fn codim(&self) -> usize {
        self.point.codim()
    }
}

#[inline]
fn tix(n: usize, i: usize, j: usize, k: usize) -> usize {
    (i * n + j) * n + k
}

/// Largest deviation of `T` from total symmetry.
pub fn codazzi_asymmetry(t: &[f64], n: usize, m: usize) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for a in 0..m {
                    let x = t[tix(n, i, j, k) * m + a];
                    worst = worst.max((x - t[tix(n, j, i, k) * m + a]).abs());
                    worst = worst.max((x - t[tix(n, i, k, j) * m + a]).abs());
                }
            }
        }
    }
    worst
}

/// Average of `T` over all index permutations.
pub fn symmetrize(t: &mut [f64], n: usize, m: usize) {
    let src = t.to_vec();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for a in 0..m {
                    let s = src[tix(n, i, j, k) * m + a]
                        + src[tix(n, i, k, j) * m + a]
                        + src[tix(n, j, i, k) * m + a]
                        + src[tix(n, j, k, i) * m + a]
                        + src[tix(n, k, i, j) * m + a]
                        + src[tix(n, k, j, i) * m + a];
                    t[tix(n, i, j, k) * m + a] = s / 6.0;
                }
            }
        }
    }
}

/// Gradient quantities at a point, all in orthonormal tangent and normal frames.
#[derive(Debug, Clone)]
pub struct GradientTerms {
    pub point: DecomposedCurvature,
    pub n: usize,
    pub m: usize,
    /// `T` in the orthonormal tangent frame.
    pub t: Vec<f64>,
    /// `nabla^perp_i H`, `n x m`.
    pub grad_mean: Vec<f64>,
    /// `nabla_i |H|`.
    pub grad_mean_norm: Vec<f64>,
    /// `nabla^perp_i nu1`, `n x m`.
    pub grad_nu1: Vec<f64>,
    /// `nabla_i h_jk`.
    pub grad_h: Vec<f64>,
    /// `<nabla^perp_i hat A_jk, nu1>`.
    pub proj_hat: Vec<f64>,
    /// `hat nabla^perp_i hat A_jk`, `n^3 x m`, orthogonal to `nu1`.
    pub hat_grad_hat: Vec<f64>,
    /// `nabla_i h_ring_jk`.
    pub grad_h_ring: Vec<f64>,
    /// `<nabla^perp_i A_ring_jk, nu1>`.
    pub proj_ring: Vec<f64>,
    /// `Q_ijk`, differentiated in `k`.
    pub q: Vec<f64>,

    pub t_norm: f64,
    pub grad_a2: f64,
    pub grad_mean2: f64,
    pub grad_nu1_2: f64,
    pub grad_mean_norm2: f64,
    pub proj_ring2: f64,
    pub proj_hat2: f64,
    pub hat_grad_hat2: f64,
    pub grad_hat_a2: f64,
    /// `|hat nabla hat A + h_ring nabla nu1|^2`.
    pub hat_grad_ring2: f64,
    /// `sum Q_ijk <hat A_ij, nabla^perp_k nu1>`.
    pub q_dot: f64,
    pub e1_2: f64,
    pub eperp_2: f64,
}

pub fn derive_gradient_quantities(jet: &CurvatureJet) -> Result<GradientTerms> {
    let d = decompose_curvature(&jet.point)?;
    derive_from_decomposed(d, &jet.t)
}

/// Same as [`derive_gradient_quantities`] for a point that is already decomposed.
pub fn derive_from_decomposed(d: DecomposedCurvature, t_coord: &[f64]) -> Result<GradientTerms> {
    let n = d.n;
    let m = d.m;
    if t_coord.len() != n * n * n * m {
        return Err(PinchError::InvalidJet("T has the wrong size".into()));
    }
    let t = match &d.tangent_factor {
        None => t_coord.to_vec(),
        Some(l) => {
            let linv = l.clone().try_inverse().ok_or_else(|| PinchError::InvalidJet("singular metric".into()))?;
            transform_tensor(t_coord, &linv, n, m)
        }
    };
    let n3 = n * n * n;
    let nf = n as f64;
    let hn = d.mean_norm;
    let nu1 = d.nu1.as_slice();

    let mut avec = vec![0.0; n * n * m];
    for (al, x) in d.a.iter().enumerate() {
        for j in 0..n {
            for k in 0..n {
                avec[(j * n + k) * m + al] = x[(j, k)];
            }
        }
    }

    let mut grad_mean = vec![0.0; n * m];
    for i in 0..n {
        for k in 0..n {
            let base = tix(n, i, k, k) * m;
            for al in 0..m {
                grad_mean[i * m + al] += t[base + al];
            }
        }
    }
    let mut grad_mean_norm = vec![0.0; n];
    let mut grad_nu1 = vec![0.0; n * m];
    for i in 0..n {
        let s: f64 = (0..m).map(|al| grad_mean[i * m + al] * nu1[al]).sum();
        grad_mean_norm[i] = s;
        for al in 0..m {
            grad_nu1[i * m + al] = (grad_mean[i * m + al] - s * nu1[al]) / hn;
        }
    }

    let hflat: Vec<f64> = d.h.iter().copied().collect();
    let hrflat: Vec<f64> = d.h_ring.iter().copied().collect();
    let mut grad_h = vec![0.0; n3];
    let mut proj_hat = vec![0.0; n3];
    let mut hat_grad_hat = vec![0.0; n3 * m];
    let mut grad_h_ring = vec![0.0; n3];
    let mut proj_ring = vec![0.0; n3];
    let mut hat_grad_ring2 = 0.0;
    for i in 0..n {
        let gn = &grad_nu1[i * m..(i + 1) * m];
        let tr_i = grad_mean_norm[i] / nf;
        for jk in 0..n * n {
            let idx = i * n * n + jk;
            let tv = &t[idx * m..(idx + 1) * m];
            let av = &avec[jk * m..(jk + 1) * m];
            let mut pt = 0.0;
            let mut a_dot = 0.0;
            for al in 0..m {
                pt += tv[al] * nu1[al];
                a_dot += av[al] * gn[al];
            }
            let gh = pt + a_dot;
            grad_h[idx] = gh;
            proj_hat[idx] = pt - gh;
            // column-major storage is irrelevant here: h and h_ring are symmetric
            let hjk = hflat[jk];
            let hrjk = hrflat[jk];
            let out = &mut hat_grad_hat[idx * m..(idx + 1) * m];
            for al in 0..m {
                let v = tv[al] - pt * nu1[al] - hjk * gn[al];
                out[al] = v;
                let w = v + hrjk * gn[al];
                hat_grad_ring2 += w * w;
            }
            let tr = if jk % (n + 1) == 0 { tr_i } else { 0.0 };
            grad_h_ring[idx] = gh - tr;
            proj_ring[idx] = pt - tr;
        }
    }

    // a_dot_nu[ij * n + k] = <A_ij, nabla_k nu1>
    let mut a_dot_nu = vec![0.0; n3];
    for ij in 0..n * n {
        let av = &avec[ij * m..(ij + 1) * m];
        for k in 0..n {
            let gn = &grad_nu1[k * m..(k + 1) * m];
            let mut s = 0.0;
            for al in 0..m {
                s += av[al] * gn[al];
            }
            a_dot_nu[ij * n + k] = s;
        }
    }
    let mut q = vec![0.0; n3];
    let mut q_dot = 0.0;
    for k in 0..n {
        let gk = grad_mean_norm[k] / hn;
        for ij in 0..n * n {
            let src = k * n * n + ij;
            let val = proj_ring[src] - proj_hat[src] - hrflat[ij] * gk;
            q[ij * n + k] = val;
            q_dot += val * a_dot_nu[ij * n + k];
        }
    }

    let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    let grad_a2 = sq(&t);
    let grad_mean2 = sq(&grad_mean);
    let grad_nu1_2 = sq(&grad_nu1);
    let grad_mean_norm2 = sq(&grad_mean_norm);
    let proj_ring2 = sq(&proj_ring);
    let proj_hat2 = sq(&proj_hat);
    let hat_grad_hat2 = sq(&hat_grad_hat);
    let e_coef = 3.0 / (nf + 2.0);
    Ok(GradientTerms {
        n,
        m,
        t_norm: grad_a2.sqrt(),
        grad_a2,
        grad_mean2,
        grad_nu1_2,
        grad_mean_norm2,
        proj_ring2,
        proj_hat2,
        hat_grad_hat2,
        grad_hat_a2: hat_grad_hat2 + proj_hat2,
        hat_grad_ring2,
        q_dot,
        e1_2: e_coef * grad_mean_norm2,
        eperp_2: e_coef * d.h2 * grad_nu1_2,
        point: d,
        t,
        grad_mean,
        grad_mean_norm,
        grad_nu1,
        grad_h,
        proj_hat,
        hat_grad_hat,
        grad_h_ring,
        proj_ring,
        q,
    })
}

/// Apply `M` to all three tangent slots of `T`.
pub fn transform_tensor(t: &[f64], mat: &DMatrix<f64>, n: usize, m: usize) -> Vec<f64> {
    let mut s1 = vec![0.0; t.len()];
    let mut s2 = vec![0.0; t.len()];
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for al in 0..m {
                    let mut s = 0.0;
                    for i in 0..n {
                        s += mat[(a, i)] * t[tix(n, i, b, c) * m + al];
                    }
                    s1[tix(n, a, b, c) * m + al] = s;
                }
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for al in 0..m {
                    let mut s = 0.0;
                    for j in 0..n {
                        s += mat[(b, j)] * s1[tix(n, a, j, c) * m + al];
                    }
                    s2[tix(n, a, b, c) * m + al] = s;
                }
            }
        }
    }
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for al in 0..m {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += mat[(c, k)] * s2[tix(n, a, b, k) * m + al];
                    }
                    s1[tix(n, a, b, c) * m + al] = s;
                }
            }
        }
    }
    s1
}

/// Relative residuals of the gradient identities.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JetIdentityResiduals {
    /// Traced Codazzi, `nu1` component.
    pub codazzi_normal: f64,
    /// Traced Codazzi, component orthogonal to `nu1`.
    pub codazzi_perp: f64,
    /// `|nabla A|^2` split into its `nu1` and complementary parts.
    pub grad_a_split: f64,
    /// `|nabla H|^2 = |H|^2 |nabla nu1|^2 + |nabla |H||^2`.
    pub grad_mean_split: f64,
    /// `|nabla hat A|^2 = |hat nabla hat A|^2 + |<nabla hat A, nu1>|^2`.
    pub grad_hat_a_split: f64,
    /// Two routes to `<nabla hat A, nu1>`.
    pub proj_hat_routes: f64,
    /// Two routes to `Q`.
    pub q_equivalence: f64,
    /// `<E1, <T, nu1>> = |E1|^2` and the closed form of `|E1|^2`.
    pub e1_projection: f64,
    /// Closed form against direct contraction of `|E_perp|^2`.
    pub eperp_norm: f64,
}

impl JetIdentityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.codazzi_normal,
            self.codazzi_perp,
            self.grad_a_split,
            self.grad_mean_split,
            self.grad_hat_a_split,
            self.proj_hat_routes,
            self.q_equivalence,
            self.e1_projection,
            self.eperp_norm,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

fn rel(diff: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        diff.abs() / scale
    } else {
        diff.abs()
    }
}

pub fn jet_identity_residuals(g: &GradientTerms) -> JetIdentityResiduals {
    let n = g.n;
    let m = g.m;
    let d = &g.point;
    let nu1 = d.nu1.as_slice();
    let nf = n as f64;
    let tn = g.t_norm;

    let mut avec = vec![0.0; m];
    let mut codazzi_normal = 0.0f64;
    let mut codazzi_perp = 0.0f64;
    for i in 0..n {
        let mut lhs = 0.0;
        let mut lhs_perp = vec![0.0; m];
        for k in 0..n {
            let idx = tix(n, k, i, k);
            lhs += g.grad_h[idx] + g.proj_hat[idx];
            for al in 0..m {
                lhs_perp[al] += g.hat_grad_hat[idx * m + al] + d.h[(i, k)] * g.grad_nu1[k * m + al];
            }
        }
        codazzi_normal = codazzi_normal.max(rel(lhs - g.grad_mean_norm[i], tn));
        for al in 0..m {
            codazzi_perp = codazzi_perp.max(rel(lhs_perp[al] - d.mean_norm * g.grad_nu1[i * m + al], tn));
        }
    }

    let mut split_hat = 0.0;
    let mut split_nu = 0.0;
    let mut direct_hat = 0.0;
    let mut proj_routes = 0.0f64;
    let mut e1_dot = 0.0;
    let e_den = 1.0 / (nf + 2.0);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let idx = tix(n, i, j, k);
                d.a_vec(j, k, &mut avec);
                let mut hat_dot = 0.0;
                let mut pt = 0.0;
                for al in 0..m {
                    let gn = g.grad_nu1[i * m + al];
                    let v = g.hat_grad_hat[idx * m + al] + d.h[(j, k)] * gn;
                    split_hat += v * v;
                    let w = g.t[idx * m + al] - g.grad_h[idx] * nu1[al] - d.h[(j, k)] * gn;
                    direct_hat += w * w;
                    let hat_a = avec[al] - d.h[(j, k)] * nu1[al];
                    hat_dot += hat_a * gn;
                    pt += g.t[idx * m + al] * nu1[al];
                }
                let s = g.proj_hat[idx] + g.grad_h[idx];
                split_nu += s * s;
                proj_routes = proj_routes.max(rel(g.proj_hat[idx] + hat_dot, tn));
                let mut e = 0.0;
                if i == j {
                    e += g.grad_mean_norm[k];
                }
                if j == k {
                    e += g.grad_mean_norm[i];
                }
                if k == i {
                    e += g.grad_mean_norm[j];
                }
                e1_dot += e * e_den * pt;
            }
        }
    }

    let mut q_equivalence = 0.0f64;
    let qscale = g.q.iter().fold(0.0f64, |s, x| s.max(x.abs())).max(tn);
    for i in 0..n {
        for j in 0..n {
            d.a_vec(i, j, &mut avec);
            for k in 0..n {
                let mut hat_dot = 0.0;
                for al in 0..m {
                    hat_dot += (avec[al] - d.h[(i, j)] * nu1[al]) * g.grad_nu1[k * m + al];
                }
                let alt = g.proj_ring[tix(n, k, i, j)] + hat_dot - d.h_ring[(i, j)] * g.grad_mean_norm[k] / d.mean_norm;
                q_equivalence = q_equivalence.max(rel(g.q[tix(n, i, j, k)] - alt, qscale));
            }
        }
    }

    let e1_direct = e_den * e_den * (3.0 * nf + 6.0) * g.grad_mean_norm2;
    let eperp_direct = e_den * e_den * (3.0 * nf + 6.0) * d.h2 * g.grad_nu1_2;
    let ga = g.grad_a2;
    JetIdentityResiduals {
        codazzi_normal,
        codazzi_perp,
        grad_a_split: rel(ga - split_hat - split_nu, ga.max(split_hat).max(split_nu)),
        grad_mean_split: rel(
            g.grad_mean2 - d.h2 * g.grad_nu1_2 - g.grad_mean_norm2,
            g.grad_mean2.max(d.h2 * g.grad_nu1_2),
        ),
        grad_hat_a_split: rel(direct_hat - g.grad_hat_a2, ga.max(direct_hat)),
        proj_hat_routes: proj_routes,
        q_equivalence,
        e1_projection: rel(e1_dot - g.e1_2, ga).max(rel(e1_direct - g.e1_2, ga)),
        eperp_norm: rel(eperp_direct - g.eperp_2, ga),
    }
}

/// Slacks (`rhs - lhs`) of the three improved trace estimates:
/// `2(n-1)/(n(n+2)) |nabla |H||^2 <= |<nabla A_ring, nu1>|^2`,
/// `2(n-1)/(n(n+2)) |H|^2 |nabla nu1|^2 <= |hat nabla hat A + h_ring nabla nu1|^2`,
/// `3/(n+2) |nabla H|^2 <= |nabla A|^2`.
pub fn improved_trace_slacks(g: &GradientTerms) -> [f64; 3] {
    let nf = g.n as f64;
    let c = 2.0 * (nf - 1.0) / (nf * (nf + 2.0));
    [
        g.proj_ring2 - c * g.grad_mean_norm2,
        g.hat_grad_ring2 - c * g.point.h2 * g.grad_nu1_2,
        g.grad_a2 - 3.0 / (nf + 2.0) * g.grad_mean2,
    ]
}
