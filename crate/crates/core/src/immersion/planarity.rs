use nalgebra::DMatrix;
use serde::Serialize;

use super::geometry::{compute_geometry, GeometryOptions};
use super::GridImmersion;
use crate::error::Result;
use crate::format::ser17;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanarityReport {
    #[serde(serialize_with = "ser17")]
    pub max_hat_ratio: f64,
    /// RMS distance of the nodes to the best-fitting affine `(n+1)`-plane.
    #[serde(serialize_with = "ser17")]
    pub affine_residual: f64,
    /// `N` minus the numerical rank of the centred positions.
    pub estimated_codim: usize,
    /// Smallest eigenvalue of `|H| g - h` in orthonormal frames over all nodes.
    #[serde(serialize_with = "ser17")]
    pub min_convexity_margin: f64,
}

pub fn planarity_test(grid: &GridImmersion, tol: f64) -> Result<PlanarityReport> {
    let field = compute_geometry(grid, &GeometryOptions { with_jets: false, ..Default::default() })?;
    let max_hat_ratio = field.max_hat_ratio()?;
    let min_convexity_margin = field
        .nodes
        .iter()
        .filter_map(|g| g.convexity_margin())
        .fold(f64::INFINITY, f64::min);

    let big = grid.ambient;
    let nodes = grid.nodes();
    let mut centre = vec![0.0; big];
    for k in 0..nodes {
        for (c, x) in centre.iter_mut().zip(grid.position(k)) {
            *c += x / nodes as f64;
        }
    }
    let centred = DMatrix::from_fn(nodes, big, |k, r| grid.position(k)[r] - centre[r]);
    let svd = centred.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let top = svd.singular_values[idx[0]];
    let rank = idx.iter().filter(|&&k| svd.singular_values[k] > tol * top).count();

    let keep = (grid.n + 1).min(idx.len());
    let basis = DMatrix::from_fn(big, keep, |r, c| v_t[(idx[c], r)]);
    let fitted = &centred * &basis * basis.transpose();
    let affine_residual = ((&centred - fitted).norm_squared() / nodes as f64).sqrt();

    Ok(PlanarityReport { max_hat_ratio, affine_residual, estimated_codim: big - rank, min_convexity_margin })
}
