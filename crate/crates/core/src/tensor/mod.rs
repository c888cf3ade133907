//! Pointwise second fundamental forms and their principal-normal split.

mod decompose;
mod reaction;

pub use decompose::{decompose_curvature, DecomposedCurvature};
pub use reaction::{
    pinching_f, pinching_identity_residual, reaction_identity_residuals, reaction_terms, ReactionTerms,
};

use nalgebra::DMatrix;

use crate::error::{PinchError, Result};

/// Second fundamental form at a point: `a[alpha]` holds the coordinate components
/// `A_ij` paired with an orthonormal normal frame vector `e_alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvaturePoint {
    pub g: DMatrix<f64>,
    pub a: Vec<DMatrix<f64>>,
}

impl CurvaturePoint {
    pub fn new(g: DMatrix<f64>, a: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = g.nrows();
        if n == 0 || g.ncols() != n {
            return Err(PinchError::InvalidInput("metric must be a non-empty square matrix".into()));
        }
        if a.is_empty() {
            return Err(PinchError::InvalidInput("codimension must be at least 1".into()));
        }
        if !is_symmetric(&g) {
            return Err(PinchError::InvalidInput("metric is not symmetric".into()));
        }
        if g.clone().cholesky().is_none() {
            return Err(PinchError::InvalidInput("metric is not positive definite".into()));
        }
        for (k, m) in a.iter().enumerate() {
            if m.nrows() != n || m.ncols() != n {
                return Err(PinchError::InvalidInput(format!("A[{k}] has the wrong shape")));
            }
            if !is_symmetric(m) {
                return Err(PinchError::InvalidInput(format!("A[{k}] is not symmetric")));
            }
        }
        Ok(CurvaturePoint { g, a })
    }

    /// Point in an orthonormal tangent frame.
    pub fn orthonormal(a: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = a.first().map(|m| m.nrows()).unwrap_or(0);
        Self::new(DMatrix::identity(n, n), a)
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn codim(&self) -> usize {
        self.a.len()
    }

    pub fn is_orthonormal_frame(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| self.g[(i, j)] == if i == j { 1.0 } else { 0.0 }))
    }
}

fn is_symmetric(m: &DMatrix<f64>) -> bool {
    let scale = m.amax().max(1e-300);
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return false;
            }
        }
    }
    true
}

/// Squared norm of the commutator `XY - YX`.
pub(crate) fn commutator_norm2(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let p = x * y;
    let n = p.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..i {
            let d = p[(i, j)] - p[(j, i)];
            s += d * d;
        }
    }
    2.0 * s
}
