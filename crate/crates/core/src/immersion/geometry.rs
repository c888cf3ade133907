use nalgebra::{DMatrix, Matrix3};
use rayon::prelude::*;

use super::stencil::{DifferenceOrder, Fourth, Second, Stencil, Weights};
use super::GridImmersion;
use crate::error::{PinchError, Result};
use crate::jet::{derive_from_decomposed, symmetrize, GradientTerms};
use crate::tensor::{decompose_curvature, CurvaturePoint, DecomposedCurvature};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryOptions {
    pub order: DifferenceOrder,
    /// Also build `T = nabla^perp A` and the derived gradient quantities.
    pub with_jets: bool,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        GeometryOptions { order: DifferenceOrder::Second, with_jets: true }
    }
}

/// Discrete geometry at one node. Tangent indices are chart coordinates;
/// normal components refer to the columns of `frame`.
#[derive(Debug, Clone)]
pub struct NodeGeometry {
    pub g: DMatrix<f64>,
    pub g_inv: DMatrix<f64>,
    /// `Gamma^l_ij` at `(l * n + i) * n + j`.
    pub christoffel: Vec<f64>,
    /// `N x m`, orthonormal columns spanning the normal space.
    pub frame: DMatrix<f64>,
    pub point: CurvaturePoint,
    /// Mean curvature vector in ambient coordinates.
    pub mean: Vec<f64>,
    pub h2: f64,
    pub a2: f64,
    pub min_singular: f64,
    pub decomposed: Option<DecomposedCurvature>,
    /// `T` in chart and frame components, layout as in [`crate::jet`]; not symmetrized.
    pub t: Option<Vec<f64>>,
    /// Gradient quantities built from the symmetrized `T`.
    pub gradients: Option<GradientTerms>,
}

impl NodeGeometry {
    pub fn hat_a2(&self) -> Option<f64> {
        self.decomposed.as_ref().map(|d| d.hat_a2)
    }

    pub fn h_ring2(&self) -> Option<f64> {
        self.decomposed.as_ref().map(|d| d.h_ring2)
    }

    /// Smallest eigenvalue of `|H| g - h` relative to `g`.
    pub fn convexity_margin(&self) -> Option<f64> {
        let d = self.decomposed.as_ref()?;
        let m = DMatrix::identity(d.n, d.n) * d.mean_norm - &d.h;
        Some(m.symmetric_eigenvalues().min())
    }
}

#[derive(Debug, Clone)]
pub struct GeometryField {
    pub n: usize,
    pub ambient: usize,
    pub codim: usize,
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub order: DifferenceOrder,
    pub nodes: Vec<NodeGeometry>,
    /// Per node `n x n x N` ambient second fundamental form.
    pub(crate) amb_a: Vec<f64>,
    /// Per node `N x N` normal projector.
    pub(crate) proj: Vec<f64>,
    /// Per node `n x n x n x N` ambient `T`, derivative index first.
    pub(crate) amb_t: Vec<f64>,
}

impl GeometryField {
    pub(crate) fn stencil(&self) -> Stencil {
        Stencil::new(&self.shape, &self.spacing, self.order)
    }

    pub fn max_hat_ratio(&self) -> Result<f64> {
        let mut worst = 0.0f64;
        for node in &self.nodes {
            let d = node.decomposed.as_ref().ok_or_else(|| degenerate(node))?;
            worst = worst.max(d.hat_a2.sqrt() / d.mean_norm);
        }
        Ok(worst)
    }

    /// `Delta u = g^ij (d_ij u - Gamma^k_ij d_k u)` for a nodal scalar field.
    pub fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        let st = self.stencil();
        let n = self.n;
        (0..self.nodes.len())
            .into_par_iter()
            .map(|node| {
                let geo = &self.nodes[node];
                let mut du = [0.0; 3];
                let mut tmp = [0.0];
                for k in 0..n {
                    st.d1(values, 1, node, k, &mut tmp);
                    du[k] = tmp[0];
                }
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        st.d2(values, 1, node, i, j, &mut tmp);
                        let mut v = tmp[0];
                        for k in 0..n {
                            v -= geo.christoffel[(k * n + i) * n + j] * du[k];
                        }
                        s += geo.g_inv[(i, j)] * v;
                    }
                }
                s
            })
            .collect()
    }
}

fn degenerate(node: &NodeGeometry) -> PinchError {
    PinchError::DegenerateMeanCurvature { h_norm: node.h2.sqrt(), a_norm: node.a2.sqrt() }
}

/// First and second chart derivatives with the induced metric at one node.
pub(crate) struct LocalJet {
    n: usize,
    big: usize,
    pub df: Vec<f64>,
    pub d2f: Vec<f64>,
    pub g: [f64; 9],
    pub g_inv: [f64; 9],
    pub min_sv: f64,
}

impl LocalJet {
    pub fn new(n: usize, big: usize) -> Self {
        LocalJet { n, big, df: vec![0.0; n * big], d2f: vec![0.0; n * n * big], g: [0.0; 9], g_inv: [0.0; 9], min_sv: 0.0 }
    }

    pub fn load(&mut self, st: &Stencil, pos: &[f64], node: usize) {
        let (n, big) = (self.n, self.big);
        for a in 0..n {
            st.d1(pos, big, node, a, &mut self.df[a * big..(a + 1) * big]);
        }
        for a in 0..n {
            for b in a..n {
                st.d2(pos, big, node, a, b, &mut self.d2f[(a * n + b) * big..(a * n + b + 1) * big]);
                if b != a {
                    self.d2f.copy_within((a * n + b) * big..(a * n + b + 1) * big, (b * n + a) * big);
                }
            }
        }
        for a in 0..n {
            for b in a..n {
                let v = dot(&self.df[a * big..(a + 1) * big], &self.df[b * big..(b + 1) * big]);
                self.g[a * n + b] = v;
                self.g[b * n + a] = v;
            }
        }
        invert_small(&self.g, n, &mut self.g_inv);
        self.min_sv = min_eig_small(&self.g, n).max(0.0).sqrt();
    }

    /// `Gamma^l_ab = g^lk <dF_k, d2F_ab>`.
    pub fn christoffel(&self, out: &mut [f64]) {
        let (n, big) = (self.n, self.big);
        let mut low = [0.0; 27];
        for k in 0..n {
            for ab in 0..n * n {
                low[k * n * n + ab] = dot(&self.df[k * big..(k + 1) * big], &self.d2f[ab * big..(ab + 1) * big]);
            }
        }
        for l in 0..n {
            for ab in 0..n * n {
                out[l * n * n + ab] = (0..n).map(|k| self.g_inv[l * n + k] * low[k * n * n + ab]).sum();
            }
        }
    }

    /// Ambient `A_ab = d2F_ab - Gamma^l_ab dF_l` written into `out` (`n x n x N`) and `H = g^ab A_ab`.
    pub fn second_form(&self, gamma: &[f64], out: &mut [f64], mean: &mut [f64]) {
        let (n, big) = (self.n, self.big);
        mean.iter_mut().for_each(|x| *x = 0.0);
        for ab in 0..n * n {
            let o = &mut out[ab * big..(ab + 1) * big];
            o.copy_from_slice(&self.d2f[ab * big..(ab + 1) * big]);
            for l in 0..n {
                let c = gamma[l * n * n + ab];
                for (x, v) in o.iter_mut().zip(&self.df[l * big..(l + 1) * big]) {
                    *x -= c * v;
                }
            }
            let w = self.g_inv[ab];
            for (h, x) in mean.iter_mut().zip(o.iter()) {
                *h += w * x;
            }
        }
    }

    /// Normal projector `I - dF g^-1 dF^T`.
    pub fn normal_projector(&self, out: &mut [f64]) {
        let (n, big) = (self.n, self.big);
        for r in 0..big {
            for c in 0..big {
                let mut s = if r == c { 1.0 } else { 0.0 };
                for a in 0..n {
                    for b in 0..n {
                        s -= self.df[a * big + r] * self.g_inv[a * n + b] * self.df[b * big + c];
                    }
                }
                out[r * big + c] = s;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn invert_small(g: &[f64; 9], n: usize, out: &mut [f64; 9]) {
    match n {
        1 => out[0] = 1.0 / g[0],
        2 => {
            let det = g[0] * g[3] - g[1] * g[2];
            out[0] = g[3] / det;
            out[1] = -g[1] / det;
            out[2] = -g[2] / det;
            out[3] = g[0] / det;
        }
        _ => {
            let m = Matrix3::from_row_slice(&g[..9]);
            let inv = m.try_inverse().unwrap_or_else(|| Matrix3::from_element(f64::NAN));
            for r in 0..3 {
                for c in 0..3 {
                    out[r * 3 + c] = inv[(r, c)];
                }
            }
        }
    }
}

pub(crate) fn min_eig_small(g: &[f64; 9], n: usize) -> f64 {
    match n {
        1 => g[0],
        2 => {
            let tr = g[0] + g[3];
            let det = g[0] * g[3] - g[1] * g[2];
            let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
            let hi = 0.5 * tr + disc;
            if hi > 0.0 {
                det / hi
            } else {
                0.5 * tr - disc
            }
        }
        _ => Matrix3::from_row_slice(&g[..9]).symmetric_eigenvalues().min(),
    }
}

/// First node whose smallest singular value of `dF` is below `tol`.
pub(crate) fn check_nondegenerate(
    grid: &GridImmersion,
    order: DifferenceOrder,
    tol: f64,
) -> std::result::Result<(), (usize, f64)> {
    let st = Stencil::new(&grid.shape, &grid.spacing, order);
    let bad = (0..grid.nodes())
        .into_par_iter()
        .map_init(
            || LocalJet::new(grid.n, grid.ambient),
            |jet, node| {
                jet.load(&st, &grid.positions, node);
                (node, jet.min_sv)
            },
        )
        .filter(|(_, s)| !(*s >= tol))
        .min_by_key(|(node, _)| *node);
    match bad {
        Some(x) => Err(x),
        None => Ok(()),
    }
}

/// Ambient mean curvature vector at every node (`nodes x N`); the fast path used by the flow.
pub fn mean_curvature_field(grid: &GridImmersion, order: DifferenceOrder) -> Result<Vec<f64>> {
    let st = Stencil::new(&grid.shape, &grid.spacing, order);
    let mut out = vec![0.0; grid.positions.len()];
    mean_curvature_into(grid, &st, 1e-8, &mut out)?;
    Ok(out)
}

fn fixed_into<const N: usize, const D: usize, const W: usize, S: Weights<W>>(
    grid: &GridImmersion,
    st: &Stencil,
    tol: f64,
    out: &mut [f64],
) -> Option<(usize, f64)> {
    const BLOCK: usize = 1024;
    out.par_chunks_mut(N * BLOCK)
        .enumerate()
        .filter_map(|(blk, chunk)| {
            for (k, h) in chunk.chunks_exact_mut(N).enumerate() {
                let node = blk * BLOCK + k;
                match st.mean_curvature_fixed::<N, D, W, S>(&grid.positions, node, tol) {
                    Ok(v) => h.copy_from_slice(&v),
                    Err(sv) => return Some((node, sv)),
                }
            }
            None
        })
        .min_by_key(|(node, _)| *node)
}

macro_rules! dispatch_fixed {
    ($grid:expr, $st:expr, $tol:expr, $out:expr; $($nn:literal),*) => {
        match ($grid.ambient, $grid.n, $st.order) {
            $(
                ($nn, 1, DifferenceOrder::Second) => Some(fixed_into::<$nn, 1, 3, Second>($grid, $st, $tol, $out)),
                ($nn, 2, DifferenceOrder::Second) => Some(fixed_into::<$nn, 2, 3, Second>($grid, $st, $tol, $out)),
                ($nn, 3, DifferenceOrder::Second) => Some(fixed_into::<$nn, 3, 3, Second>($grid, $st, $tol, $out)),
                ($nn, 1, DifferenceOrder::Fourth) => Some(fixed_into::<$nn, 1, 5, Fourth>($grid, $st, $tol, $out)),
                ($nn, 2, DifferenceOrder::Fourth) => Some(fixed_into::<$nn, 2, 5, Fourth>($grid, $st, $tol, $out)),
                ($nn, 3, DifferenceOrder::Fourth) => Some(fixed_into::<$nn, 3, 5, Fourth>($grid, $st, $tol, $out)),
            )*
            _ => None,
        }
    };
}

pub(crate) fn mean_curvature_into(grid: &GridImmersion, st: &Stencil, tol: f64, out: &mut [f64]) -> Result<()> {
    if let Some(bad) = dispatch_fixed!(grid, st, tol, out; 2, 3, 4, 5, 6, 7, 8) {
        return match bad {
            Some((node, _)) => Err(PinchError::FlowDegenerate { node }),
            None => Ok(()),
        };
    }
    let (n, big) = (grid.n, grid.ambient);
    let bad = out
        .par_chunks_mut(big)
        .enumerate()
        .map_init(
            || (vec![0.0; n * big], vec![0.0; big]),
            |(df, tmp), (node, h)| {
                for a in 0..n {
                    st.d1(&grid.positions, big, node, a, &mut df[a * big..(a + 1) * big]);
                }
                let mut g = [0.0; 9];
                for a in 0..n {
                    for b in a..n {
                        let v = dot(&df[a * big..(a + 1) * big], &df[b * big..(b + 1) * big]);
                        g[a * n + b] = v;
                        g[b * n + a] = v;
                    }
                }
                let sv = min_eig_small(&g, n).max(0.0).sqrt();
                if !(sv >= tol) {
                    return Some((node, sv));
                }
                let mut gi = [0.0; 9];
                invert_small(&g, n, &mut gi);
                // v = g^ab d2F_ab, then remove its tangential part
                h.iter_mut().for_each(|x| *x = 0.0);
                for a in 0..n {
                    for b in a..n {
                        let w = if a == b { gi[a * n + a] } else { 2.0 * gi[a * n + b] };
                        st.d2(&grid.positions, big, node, a, b, tmp);
                        h.iter_mut().zip(tmp.iter()).for_each(|(x, y)| *x += w * y);
                    }
                }
                let mut c = [0.0; 3];
                for k in 0..n {
                    c[k] = dot(&df[k * big..(k + 1) * big], h);
                }
                for l in 0..n {
                    let coef: f64 = (0..n).map(|k| gi[l * n + k] * c[k]).sum();
                    h.iter_mut().zip(&df[l * big..(l + 1) * big]).for_each(|(x, y)| *x -= coef * y);
                }
                None
            },
        )
        .flatten()
        .min_by_key(|(node, _)| *node);
    match bad {
        Some((node, _)) => Err(PinchError::FlowDegenerate { node }),
        None => Ok(()),
    }
}

/// Deterministic orthonormal basis of the range of the projector `p` (`N x N`), `m` columns.
fn seed_frame(p: &[f64], big: usize, m: usize) -> DMatrix<f64> {
    let mut cols: Vec<(usize, f64)> = (0..big).map(|k| (k, p[k * big + k])).collect();
    cols.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(m);
    for (k, _) in cols {
        if frame.len() == m {
            break;
        }
        let mut v: Vec<f64> = (0..big).map(|r| p[r * big + k]).collect();
        for _ in 0..2 {
            for f in &frame {
                let c = dot(&v, f);
                v.iter_mut().zip(f).for_each(|(x, y)| *x -= c * y);
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-3 {
            v.iter_mut().for_each(|x| *x /= norm);
            frame.push(v);
        }
    }
    DMatrix::from_fn(big, m, |r, c| frame[c][r])
}

/// Orthonormal polar factor `W (W^T W)^{-1/2}` by Newton-Schulz iteration; requires the
/// singular values of `W` to lie in `(0, sqrt 3)`.
fn polar_factor(mut w: DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = w.ncols();
    let eye = DMatrix::<f64>::identity(m, m);
    for _ in 0..60 {
        let s = w.transpose() * &w;
        let err = (&s - &eye).amax();
        if err < 1e-15 {
            return Some(w);
        }
        w = &w * (&eye * 3.0 - s) * 0.5;
    }
    let s = w.transpose() * &w;
    ((&s - &eye).amax() < 1e-12).then_some(w)
}

fn parent(node: usize, shape: &[usize]) -> Option<usize> {
    let mut stride = 1;
    for axis in (0..shape.len()).rev() {
        let c = (node / stride) % shape[axis];
        if c > 0 {
            return Some(node - stride);
        }
        stride *= shape[axis];
    }
    None
}

/// Normal frames continued along a spanning tree by projecting the parent frame and
/// orthonormalizing symmetrically.
fn propagate_frames(proj: &[f64], big: usize, m: usize, shape: &[usize]) -> Result<Vec<DMatrix<f64>>> {
    let nodes: usize = shape.iter().product();
    let mut frames: Vec<DMatrix<f64>> = Vec::with_capacity(nodes);
    for node in 0..nodes {
        let p = DMatrix::from_row_slice(big, big, &proj[node * big * big..(node + 1) * big * big]);
        let f = match parent(node, shape) {
            None => seed_frame(&proj[..big * big], big, m),
            Some(par) => {
                let w = &p * &frames[par];
                let s = w.transpose() * &w;
                if !(s.symmetric_eigenvalues().min() >= 0.25) {
                    return Err(PinchError::FrameIncoherent { node });
                }
                polar_factor(w).ok_or(PinchError::FrameIncoherent { node })?
            }
        };
        frames.push(f);
    }
    Ok(frames)
}

pub fn compute_geometry(grid: &GridImmersion, opts: &GeometryOptions) -> Result<GeometryField> {
    let (n, big) = (grid.n, grid.ambient);
    let m = big - n;
    let nodes = grid.nodes();
    let st = Stencil::new(&grid.shape, &grid.spacing, opts.order);
    let (w_a, w_p, w_g) = (n * n * big, big * big, n * n * n);

    let mut amb_a = vec![0.0; nodes * w_a];
    let mut proj = vec![0.0; nodes * w_p];
    let mut gamma = vec![0.0; nodes * w_g];
    let mut mean = vec![0.0; nodes * big];
    let mut metric = vec![[0.0; 9]; nodes];
    let mut metric_inv = vec![[0.0; 9]; nodes];
    let mut min_sv = vec![0.0; nodes];

    amb_a
        .par_chunks_mut(w_a)
        .zip(proj.par_chunks_mut(w_p))
        .zip(gamma.par_chunks_mut(w_g))
        .zip(mean.par_chunks_mut(big))
        .zip(metric.par_iter_mut().zip(metric_inv.par_iter_mut()).zip(min_sv.par_iter_mut()))
        .enumerate()
        .for_each_init(
            || LocalJet::new(n, big),
            |jet, (node, ((((a, p), gm), h), ((g, gi), sv)))| {
                jet.load(&st, &grid.positions, node);
                jet.christoffel(gm);
                jet.second_form(gm, a, h);
                jet.normal_projector(p);
                *g = jet.g;
                *gi = jet.g_inv;
                *sv = jet.min_sv;
            },
        );
    if let Some((node, &sigma)) = min_sv.iter().enumerate().find(|(_, s)| !(**s >= 1e-8)) {
        return Err(PinchError::ImmersionDegenerate { node, sigma });
    }

    let frames = propagate_frames(&proj, big, m, &grid.shape)?;

    let w_t = n * n * n * big;
    let mut amb_t = vec![0.0; if opts.with_jets { nodes * w_t } else { 0 }];
    if opts.with_jets {
        amb_t.par_chunks_mut(w_t).enumerate().for_each_init(
            || vec![0.0; w_a],
            |da, (node, t)| {
                let p = &proj[node * w_p..(node + 1) * w_p];
                let gm = &gamma[node * w_g..(node + 1) * w_g];
                let a = &amb_a[node * w_a..(node + 1) * w_a];
                for k in 0..n {
                    st.d1(&amb_a, w_a, node, k, da);
                    for i in 0..n {
                        for j in 0..n {
                            let o = &mut t[((k * n + i) * n + j) * big..((k * n + i) * n + j + 1) * big];
                            let src = &da[(i * n + j) * big..(i * n + j + 1) * big];
                            for r in 0..big {
                                o[r] = dot(&p[r * big..(r + 1) * big], src);
                            }
                            for l in 0..n {
                                let c1 = gm[(l * n + k) * n + i];
                                let c2 = gm[(l * n + k) * n + j];
                                for r in 0..big {
                                    o[r] -= c1 * a[(l * n + j) * big + r] + c2 * a[(i * n + l) * big + r];
                                }
                            }
                        }
                    }
                }
            },
        );
    }

    let node_geo: Vec<Result<NodeGeometry>> = (0..nodes)
        .into_par_iter()
        .map(|node| {
            let frame = &frames[node];
            let g = DMatrix::from_row_slice(n, n, &metric[node][..n * n]);
            let g_inv = DMatrix::from_row_slice(n, n, &metric_inv[node][..n * n]);
            let a_amb = &amb_a[node * w_a..(node + 1) * w_a];
            let mut a = Vec::with_capacity(m);
            for al in 0..m {
                let col = frame.column(al);
                let mut mat = DMatrix::from_fn(n, n, |i, j| {
                    (0..big).map(|r| col[r] * a_amb[(i * n + j) * big + r]).sum::<f64>()
                });
                let sym = 0.5 * (&mat + mat.transpose());
                mat = sym;
                a.push(mat);
            }
            let h = &mean[node * big..(node + 1) * big];
            let h2 = dot(h, h);
            let mut a2 = 0.0;
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            let w = g_inv[(i, k)] * g_inv[(j, l)];
                            if w != 0.0 {
                                a2 += w * dot(&a_amb[(i * n + j) * big..(i * n + j + 1) * big], &a_amb[(k * n + l) * big..(k * n + l + 1) * big]);
                            }
                        }
                    }
                }
            }
            let point = CurvaturePoint::new(g.clone(), a)?;
            let decomposed = decompose_curvature(&point).ok();
            let t = opts.with_jets.then(|| {
                let src = &amb_t[node * w_t..(node + 1) * w_t];
                let mut out = vec![0.0; n * n * n * m];
                for idx in 0..n * n * n {
                    for al in 0..m {
                        let col = frame.column(al);
                        out[idx * m + al] = (0..big).map(|r| col[r] * src[idx * big + r]).sum();
                    }
                }
                out
            });
            let gradients = match (&decomposed, &t) {
                (Some(d), Some(t)) => {
                    let mut ts = t.clone();
                    symmetrize(&mut ts, n, m);
                    Some(derive_from_decomposed(d.clone(), &ts)?)
                }
                _ => None,
            };
            Ok(NodeGeometry {
                g,
                g_inv,
                christoffel: gamma[node * w_g..(node + 1) * w_g].to_vec(),
                frame: frame.clone(),
                point,
                mean: h.to_vec(),
                h2,
                a2,
                min_singular: min_sv[node],
                decomposed,
                t,
                gradients,
            })
        })
        .collect();
    let nodes_out = node_geo.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(GeometryField {
        n,
        ambient: big,
        codim: m,
        shape: grid.shape.clone(),
        spacing: grid.spacing.clone(),
        order: opts.order,
        nodes: nodes_out,
        amb_a,
        proj,
        amb_t,
    })
}
