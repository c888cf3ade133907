use nalgebra::{DMatrix, DVector};

use super::CurvaturePoint;
use crate::error::{PinchError, Result};

/// Split of `A` along the principal normal `nu1 = H/|H|`.
///
/// All tangent components are taken in the orthonormal frame `e = L^{-1} d`,
/// where `g = L L^T`; `tangent_factor` stores `L`.
#[derive(Debug, Clone)]
pub struct DecomposedCurvature {
    pub n: usize,
    pub m: usize,
    pub tangent_factor: Option<DMatrix<f64>>,
    /// `A` in the orthonormal tangent frame, one matrix per normal frame vector.
    pub a: Vec<DMatrix<f64>>,
    pub mean: DVector<f64>,
    pub mean_norm: f64,
    pub nu1: DVector<f64>,
    pub h: DMatrix<f64>,
    pub h_ring: DMatrix<f64>,
    /// Orthonormal basis of the complement of `nu1`, in normal-frame coordinates.
    pub hat_frame: Vec<DVector<f64>>,
    pub hat_a: Vec<DMatrix<f64>>,
    pub a2: f64,
    pub h2: f64,
    pub hat_a2: f64,
    pub h_ring2: f64,
}

pub fn decompose_curvature(p: &CurvaturePoint) -> Result<DecomposedCurvature> {
    let n = p.dim();
    let m = p.codim();
    let (a, tangent_factor) = if p.is_orthonormal_frame() {
        (p.a.clone(), None)
    } else {
        let l = p
            .g
            .clone()
            .cholesky()
            .ok_or_else(|| PinchError::InvalidInput("metric is not positive definite".into()))?
            .l();
        let linv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| PinchError::InvalidInput("metric factor is singular".into()))?;
        let a = p.a.iter().map(|x| &linv * x * linv.transpose()).collect();
        (a, Some(l))
    };

    let mean = DVector::from_iterator(m, a.iter().map(|x| x.trace()));
    let mean_norm = mean.norm();
    let a2: f64 = a.iter().map(|x| x.norm_squared()).sum();
    if !(mean_norm > 1e-14 * a2.sqrt()) {
        return Err(PinchError::DegenerateMeanCurvature { h_norm: mean_norm, a_norm: a2.sqrt() });
    }
    let nu1 = &mean / mean_norm;

    let mut h = DMatrix::zeros(n, n);
    for (x, w) in a.iter().zip(nu1.iter()) {
        h += x * *w;
    }
    let mut h_ring = h.clone();
    for i in 0..n {
        h_ring[(i, i)] -= mean_norm / n as f64;
    }

    let hat_frame = complement_frame(&nu1);
    let hat_a: Vec<DMatrix<f64>> = hat_frame
        .iter()
        .map(|e| {
            let mut s = DMatrix::zeros(n, n);
            for (x, w) in a.iter().zip(e.iter()) {
                s += x * *w;
            }
            s
        })
        .collect();

    let hat_a2 = hat_a.iter().map(|x| x.norm_squared()).sum();
    let h_ring2 = h_ring.norm_squared();
    Ok(DecomposedCurvature {
        n,
        m,
        tangent_factor,
        a,
        h2: mean_norm * mean_norm,
        mean,
        mean_norm,
        nu1,
        h,
        h_ring,
        hat_frame,
        hat_a,
        a2,
        hat_a2,
        h_ring2,
    })
}

/// Gram-Schmidt completion of `nu1`; candidates are the standard basis vectors,
/// least aligned with `nu1` first.
fn complement_frame(nu1: &DVector<f64>) -> Vec<DVector<f64>> {
    let m = nu1.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| nu1[i].abs().total_cmp(&nu1[j].abs()).then(i.cmp(&j)));
    let mut basis = vec![nu1.clone()];
    for idx in order {
        if basis.len() == m {
            break;
        }
        let mut v = DVector::zeros(m);
        v[idx] = 1.0;
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v -= b * d;
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }
    basis.remove(0);
    basis
}

impl DecomposedCurvature {
    /// `|h|^2 = |h_ring|^2 + |H|^2/n`.
    pub fn h_full2(&self) -> f64 {
        self.h.norm_squared()
    }

    /// Rebuild the coordinate components of `A` in the original frames.
    pub fn reconstruct(&self) -> Vec<DMatrix<f64>> {
        let n = self.n;
        (0..self.m)
            .map(|alpha| {
                let mut x = &self.h * self.nu1[alpha];
                for (e, ha) in self.hat_frame.iter().zip(&self.hat_a) {
                    x += ha * e[alpha];
                }
                match &self.tangent_factor {
                    Some(l) => l * x * l.transpose(),
                    None => {
                        debug_assert_eq!(x.nrows(), n);
                        x
                    }
                }
            })
            .collect()
    }

    /// Normal-frame vector `A_ij` in the orthonormal tangent frame.
    #[inline]
    pub fn a_vec(&self, i: usize, j: usize, out: &mut [f64]) {
        for (alpha, x) in self.a.iter().enumerate() {
            out[alpha] = x[(i, j)];
        }
    }
}
