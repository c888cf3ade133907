//! Periodic grid immersions `F: T^n -> R^N` and their discrete geometry.

mod geometry;
mod planarity;
mod snapshot;
mod stencil;
mod structure;

pub use geometry::{compute_geometry, mean_curvature_field, GeometryField, GeometryOptions, NodeGeometry};
pub(crate) use geometry::mean_curvature_into;
pub(crate) use stencil::Stencil;
pub use planarity::{planarity_test, PlanarityReport};
pub use snapshot::{read_snapshot, write_snapshot};
pub use stencil::DifferenceOrder;
pub use structure::{observed_order, structure_residuals, StructureResiduals};

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{PinchError, Result};

/// Node positions on a periodic grid, row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct GridImmersion {
    pub n: usize,
    pub ambient: usize,
    pub shape: Vec<usize>,
    pub spacing: Vec<f64>,
    pub positions: Vec<f64>,
}

impl GridImmersion {
    pub fn new(shape: Vec<usize>, spacing: Vec<f64>, ambient: usize, positions: Vec<f64>) -> Result<Self> {
        let n = shape.len();
        if !(1..=3).contains(&n) || spacing.len() != n {
            return Err(PinchError::InvalidInput("grids have 1 to 3 axes with one spacing each".into()));
        }
        if ambient <= n {
            return Err(PinchError::InvalidInput("ambient dimension must exceed n".into()));
        }
        if shape.iter().any(|&s| s < 5) {
            return Err(PinchError::InvalidInput("every axis needs at least 5 nodes".into()));
        }
        let nodes: usize = shape.iter().product();
        if positions.len() != nodes * ambient {
            return Err(PinchError::InvalidInput("position array has the wrong length".into()));
        }
        Ok(GridImmersion { n, ambient, shape, spacing, positions })
    }

    pub fn nodes(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn position(&self, node: usize) -> &[f64] {
        &self.positions[node * self.ambient..(node + 1) * self.ambient]
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.shape[axis + 1..].iter().product()
    }

    pub fn coord(&self, node: usize, axis: usize) -> usize {
        (node / self.stride(axis)) % self.shape[axis]
    }

    /// Periodic neighbour `offset` steps along `axis`.
    pub fn neighbor(&self, node: usize, axis: usize, offset: isize) -> usize {
        let s = self.shape[axis] as isize;
        let st = self.stride(axis);
        let c = self.coord(node, axis) as isize;
        let c2 = (c + offset).rem_euclid(s);
        (node as isize + (c2 - c) * st as isize) as usize
    }

    /// Apply `x -> R x + b` to every node.
    pub fn transform(&self, rot: &DMatrix<f64>, shift: &[f64]) -> GridImmersion {
        let nn = self.ambient;
        let mut out = self.clone();
        for node in 0..self.nodes() {
            let x = self.position(node);
            for i in 0..nn {
                let mut s = shift.get(i).copied().unwrap_or(0.0);
                for j in 0..nn {
                    s += rot[(i, j)] * x[j];
                }
                out.positions[node * nn + i] = s;
            }
        }
        out
    }
}

/// Parametric test immersions; every chart is `2 pi`-periodic in each parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ImmersionSpec {
    Circle {
        radius: f64,
        nodes: usize,
    },
    /// Product of round circles `S^1(r_1) x ... x S^1(r_n)` in `R^{2n}`. `shear`
    /// reparametrizes each angle by `x_i + shear * sin(x_{i+1})` without changing the image.
    CliffordTorus {
        radii: Vec<f64>,
        nodes: usize,
        #[serde(default)]
        shear: f64,
    },
    /// Round 2-sphere on a latitude-longitude chart run twice around the
    /// meridian; the latitude grid is offset by half a cell so no node sits on a pole.
    RoundSphere {
        radius: f64,
        nodes: usize,
    },
    TorusOfRevolution {
        major: f64,
        minor: f64,
        nodes: [usize; 2],
    },
    /// `base` padded into `R^ambient`, rotated and shifted by a seeded random rigid motion.
    Embedded {
        base: Box<ImmersionSpec>,
        ambient: usize,
        seed: u64,
        #[serde(default)]
        shift: f64,
    },
    /// `base + eps * phi_j(x) e_{N0 + j}` along `extra` new coordinate directions.
    Perturbed {
        base: Box<ImmersionSpec>,
        eps: f64,
        #[serde(default = "one")]
        extra: usize,
    },
}

fn one() -> usize {
    1
}

type ParamFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

struct Chart {
    shape: Vec<usize>,
    offset: Vec<f64>,
    ambient: usize,
    map: ParamFn,
}

fn positive(x: f64, what: &str) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(PinchError::InvalidInput(format!("{what} must be positive")))
    }
}

fn chart(spec: &ImmersionSpec) -> Result<Chart> {
    Ok(match spec {
        ImmersionSpec::Circle { radius, nodes } => {
            positive(*radius, "radius")?;
            let r = *radius;
            Chart {
                shape: vec![*nodes],
                offset: vec![0.0],
                ambient: 2,
                map: Box::new(move |x| vec![r * x[0].cos(), r * x[0].sin()]),
            }
        }
        ImmersionSpec::CliffordTorus { radii, nodes, shear } => {
            let n = radii.len();
            if !(1..=3).contains(&n) {
                return Err(PinchError::InvalidInput("a torus has 1 to 3 factors".into()));
            }
            for r in radii {
                positive(*r, "radius")?;
            }
            if shear.abs() >= 0.5 {
                return Err(PinchError::InvalidInput("shear must lie in (-1/2, 1/2)".into()));
            }
            let radii = radii.clone();
            let shear = if n == 1 { 0.0 } else { *shear };
            Chart {
                shape: vec![*nodes; n],
                offset: vec![0.0; n],
                ambient: 2 * n,
                map: Box::new(move |x| {
                    let mut out = Vec::with_capacity(2 * n);
                    for i in 0..n {
                        let th = x[i] + shear * x[(i + 1) % n].sin();
                        out.push(radii[i] * th.cos());
                        out.push(radii[i] * th.sin());
                    }
                    out
                }),
            }
        }
        ImmersionSpec::RoundSphere { radius, nodes } => {
            positive(*radius, "radius")?;
            let r = *radius;
            Chart {
                shape: vec![*nodes, *nodes],
                offset: vec![0.0, 0.5],
                ambient: 3,
                map: Box::new(move |x| {
                    let (th, ph) = (x[0], x[1]);
                    vec![r * ph.sin() * th.cos(), r * ph.sin() * th.sin(), r * ph.cos()]
                }),
            }
        }
        ImmersionSpec::TorusOfRevolution { major, minor, nodes } => {
            positive(*minor, "minor radius")?;
            if !(*major > *minor) {
                return Err(PinchError::InvalidInput("major radius must exceed minor radius".into()));
            }
            let (big, small) = (*major, *minor);
            Chart {
                shape: nodes.to_vec(),
                offset: vec![0.0, 0.0],
                ambient: 3,
                map: Box::new(move |x| {
                    let rho = big + small * x[1].cos();
                    vec![rho * x[0].cos(), rho * x[0].sin(), small * x[1].sin()]
                }),
            }
        }
        ImmersionSpec::Embedded { base, ambient, seed, shift } => {
            let inner = chart(base)?;
            if *ambient < inner.ambient {
                return Err(PinchError::InvalidInput("ambient dimension below the base ambient dimension".into()));
            }
            let nn = *ambient;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let rot = random_rotation(nn, &mut rng);
            let b: Vec<f64> = (0..nn).map(|_| StandardNormal.sample(&mut rng)).map(|v: f64| v * shift).collect();
            let map = inner.map;
            Chart {
                shape: inner.shape,
                offset: inner.offset,
                ambient: nn,
                map: Box::new(move |x| {
                    let y = map(x);
                    (0..nn)
                        .map(|i| b[i] + y.iter().enumerate().map(|(j, v)| rot[(i, j)] * v).sum::<f64>())
                        .collect()
                }),
            }
        }
        ImmersionSpec::Perturbed { base, eps, extra } => {
            let inner = chart(base)?;
            let n0 = inner.ambient;
            let (eps, extra) = (*eps, *extra);
            let map = inner.map;
            Chart {
                shape: inner.shape,
                offset: inner.offset,
                ambient: n0 + extra,
                map: Box::new(move |x| {
                    let mut y = map(x);
                    for j in 0..extra {
                        let phase = 0.3 * (j + 1) as f64;
                        y.push(eps * x.iter().map(|&xi| (xi + phase).cos()).product::<f64>());
                    }
                    y
                }),
            }
        }
    })
}

/// Haar-random orthogonal matrix.
pub fn random_rotation(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g: DMatrix<f64> = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Sample `spec` on its grid and verify the immersion is non-degenerate.
pub fn build_immersion(spec: &ImmersionSpec) -> Result<GridImmersion> {
    let ch = chart(spec)?;
    let n = ch.shape.len();
    let spacing: Vec<f64> = ch.shape.iter().map(|&s| 2.0 * PI / s as f64).collect();
    let nodes: usize = ch.shape.iter().product();
    let mut positions = Vec::with_capacity(nodes * ch.ambient);
    let mut x = vec![0.0; n];
    for node in 0..nodes {
        let mut rem = node;
        for axis in (0..n).rev() {
            let c = rem % ch.shape[axis];
            rem /= ch.shape[axis];
            x[axis] = (c as f64 + ch.offset[axis]) * spacing[axis];
        }
        positions.extend((ch.map)(&x));
    }
    let grid = GridImmersion::new(ch.shape, spacing, ch.ambient, positions)?;
    geometry::check_nondegenerate(&grid, DifferenceOrder::Second, 1e-8)
        .map_err(|(node, sigma)| PinchError::ImmersionDegenerate { node, sigma })?;
    Ok(grid)
}
