use serde::{Deserialize, Serialize};

/// Accuracy of the central difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifferenceOrder {
    #[default]
    Second,
    Fourth,
}

impl DifferenceOrder {
    pub fn radius(self) -> usize {
        match self {
            DifferenceOrder::Second => 1,
            DifferenceOrder::Fourth => 2,
        }
    }

    pub fn nominal(self) -> f64 {
        match self {
            DifferenceOrder::Second => 2.0,
            DifferenceOrder::Fourth => 4.0,
        }
    }

    fn first(self) -> &'static [f64] {
        match self {
            DifferenceOrder::Second => &[-0.5, 0.0, 0.5],
            DifferenceOrder::Fourth => &[1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
        }
    }

    fn second(self) -> &'static [f64] {
        match self {
            DifferenceOrder::Second => &[1.0, -2.0, 1.0],
            DifferenceOrder::Fourth => &[-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0],
        }
    }
}

/// Precomputed periodic neighbour table for one grid shape.
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    pub nodes: usize,
    pub order: DifferenceOrder,
    inv_h: Vec<f64>,
    r: usize,
    nbr: Vec<u32>,
}

impl Stencil {
    pub fn new(shape: &[usize], spacing: &[f64], order: DifferenceOrder) -> Stencil {
        let n = shape.len();
        let nodes: usize = shape.iter().product();
        let r = order.radius();
        let width = 2 * r + 1;
        let mut nbr = vec![0u32; n * width * nodes];
        for axis in 0..n {
            let stride: usize = shape[axis + 1..].iter().product();
            let s = shape[axis] as isize;
            for node in 0..nodes {
                let c = ((node / stride) % shape[axis]) as isize;
                for o in 0..width {
                    let off = o as isize - r as isize;
                    let c2 = (c + off).rem_euclid(s);
                    let target = node as isize + (c2 - c) * stride as isize;
                    nbr[(axis * width + o) * nodes + node] = target as u32;
                }
            }
        }
        Stencil { nodes, order, inv_h: spacing.iter().map(|h| 1.0 / h).collect(), r, nbr }
    }

    #[inline]
    pub fn neighbor(&self, node: usize, axis: usize, off: isize) -> usize {
        let o = (off + self.r as isize) as usize;
        self.nbr[(axis * (2 * self.r + 1) + o) * self.nodes + node] as usize
    }

    /// `d/dx_axis` of a field with `w` components per node.
    pub fn d1(&self, field: &[f64], w: usize, node: usize, axis: usize, out: &mut [f64]) {
        out[..w].iter_mut().for_each(|x| *x = 0.0);
        let r = self.r as isize;
        for (o, &c) in self.order.first().iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let nb = self.neighbor(node, axis, o as isize - r);
            let f = &field[nb * w..(nb + 1) * w];
            for (x, v) in out.iter_mut().zip(f) {
                *x += c * v;
            }
        }
        let s = self.inv_h[axis];
        out[..w].iter_mut().for_each(|x| *x *= s);
    }

    /// `d^2/dx_a dx_b`; mixed derivatives use the tensor product of first-derivative stencils.
    pub fn d2(&self, field: &[f64], w: usize, node: usize, a: usize, b: usize, out: &mut [f64]) {
        out[..w].iter_mut().for_each(|x| *x = 0.0);
        let r = self.r as isize;
        if a == b {
            for (o, &c) in self.order.second().iter().enumerate() {
                let nb = self.neighbor(node, a, o as isize - r);
                let f = &field[nb * w..(nb + 1) * w];
                for (x, v) in out.iter_mut().zip(f) {
                    *x += c * v;
                }
            }
            let s = self.inv_h[a] * self.inv_h[a];
            out[..w].iter_mut().for_each(|x| *x *= s);
            return;
        }
        let wts = self.order.first();
        for (oa, &ca) in wts.iter().enumerate() {
            if ca == 0.0 {
                continue;
            }
            let na = self.neighbor(node, a, oa as isize - r);
            for (ob, &cb) in wts.iter().enumerate() {
                if cb == 0.0 {
                    continue;
                }
                let nb = self.neighbor(na, b, ob as isize - r);
                let c = ca * cb;
                let f = &field[nb * w..(nb + 1) * w];
                for (x, v) in out.iter_mut().zip(f) {
                    *x += c * v;
                }
            }
        }
        let s = self.inv_h[a] * self.inv_h[b];
        out[..w].iter_mut().for_each(|x| *x *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sample(s: usize) -> (Vec<f64>, f64) {
        let h = 2.0 * PI / s as f64;
        let mut f = Vec::new();
        for i in 0..s {
            for j in 0..s {
                let (x, y) = (i as f64 * h, j as f64 * h);
                f.push((x + 2.0 * y).sin());
            }
        }
        (f, h)
    }

    #[test]
    fn mixed_derivative_orders() {
        for (order, expect) in [(DifferenceOrder::Second, 2.0), (DifferenceOrder::Fourth, 4.0)] {
            let mut errs = Vec::new();
            for s in [32, 64] {
                let (f, h) = sample(s);
                let st = Stencil::new(&[s, s], &[h, h], order);
                let mut worst = 0.0f64;
                for node in 0..s * s {
                    let (x, y) = ((node / s) as f64 * h, (node % s) as f64 * h);
                    let mut out = [0.0];
                    st.d2(&f, 1, node, 0, 1, &mut out);
                    worst = worst.max((out[0] + 2.0 * (x + 2.0 * y).sin()).abs());
                }
                errs.push(worst);
            }
            let p = (errs[0] / errs[1]).log2();
            assert!((p - expect).abs() < 0.1, "{order:?} {p}");
        }
    }
}

const W1_2: [f64; 3] = [-0.5, 0.0, 0.5];
const W1_4: [f64; 5] = [1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0];
const W2_2: [f64; 3] = [1.0, -2.0, 1.0];
const W2_4: [f64; 5] = [-1.0 / 12.0, 16.0 / 12.0, -30.0 / 12.0, 16.0 / 12.0, -1.0 / 12.0];

pub(crate) trait Weights<const W: usize> {
    const FIRST: [f64; W];
    const SECOND: [f64; W];
}
pub(crate) struct Second;
pub(crate) struct Fourth;
impl Weights<3> for Second {
    const FIRST: [f64; 3] = W1_2;
    const SECOND: [f64; 3] = W2_2;
}
impl Weights<5> for Fourth {
    const FIRST: [f64; 5] = W1_4;
    const SECOND: [f64; 5] = W2_4;
}

impl Stencil {
    #[inline(always)]
    fn at<const N: usize>(pos: &[f64], k: usize) -> [f64; N] {
        pos[k * N..k * N + N].try_into().unwrap()
    }

    /// Mean curvature vector at one node for ambient dimension `N`, chart dimension `D`
    /// and stencil width `W`; returns the smallest singular value of `dF` on failure.
    #[inline(always)]
    pub(crate) fn mean_curvature_fixed<const N: usize, const D: usize, const W: usize, S: Weights<W>>(
        &self,
        pos: &[f64],
        node: usize,
        tol: f64,
    ) -> std::result::Result<[f64; N], f64> {
        let r = W / 2;
        let nb = |axis: usize, o: usize, from: usize| self.nbr[(axis * W + o) * self.nodes + from] as usize;
        let mut df = [[0.0; N]; D];
        for a in 0..D {
            for o in 0..W {
                let c = S::FIRST[o];
                if o == r {
                    continue;
                }
                let p = Self::at::<N>(pos, nb(a, o, node));
                for q in 0..N {
                    df[a][q] += c * p[q];
                }
            }
            for q in 0..N {
                df[a][q] *= self.inv_h[a];
            }
        }
        let mut g = [0.0; 9];
        for a in 0..D {
            for b in a..D {
                let mut s = 0.0;
                for q in 0..N {
                    s += df[a][q] * df[b][q];
                }
                g[a * D + b] = s;
                g[b * D + a] = s;
            }
        }
        let sv = super::geometry::min_eig_small(&g, D).max(0.0).sqrt();
        if !(sv >= tol) {
            return Err(sv);
        }
        let mut gi = [0.0; 9];
        super::geometry::invert_small(&g, D, &mut gi);
        let mut h = [0.0; N];
        for a in 0..D {
            let w = gi[a * D + a] * self.inv_h[a] * self.inv_h[a];
            for o in 0..W {
                let c = w * S::SECOND[o];
                let p = Self::at::<N>(pos, nb(a, o, node));
                for q in 0..N {
                    h[q] += c * p[q];
                }
            }
            for b in a + 1..D {
                let w = 2.0 * gi[a * D + b] * self.inv_h[a] * self.inv_h[b];
                for oa in 0..W {
                    if oa == r {
                        continue;
                    }
                    let na = nb(a, oa, node);
                    for ob in 0..W {
                        if ob == r {
                            continue;
                        }
                        let c = w * S::FIRST[oa] * S::FIRST[ob];
                        let p = Self::at::<N>(pos, nb(b, ob, na));
                        for q in 0..N {
                            h[q] += c * p[q];
                        }
                    }
                }
            }
        }
        let mut c = [0.0; 3];
        for k in 0..D {
            for q in 0..N {
                c[k] += df[k][q] * h[q];
            }
        }
        for l in 0..D {
            let mut coef = 0.0;
            for k in 0..D {
                coef += gi[l * D + k] * c[k];
            }
            for q in 0..N {
                h[q] -= coef * df[l][q];
            }
        }
        Ok(h)
    }
}
