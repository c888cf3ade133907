use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{PinchError, Result};
use crate::jet::CurvatureJet;
use crate::tensor::CurvaturePoint;

/// Draws points strictly inside the cone `|A|^2 < c |H|^2`, counting rejections.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub rng: ChaCha8Rng,
    pub attempted: u64,
    pub accepted: u64,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        use rand::SeedableRng;
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed), attempted: 0, accepted: 0 }
    }

    pub fn point(&mut self, n: usize, m: usize, c: f64) -> Result<CurvaturePoint> {
        check_cone(n, c)?;
        loop {
            self.attempted += 1;
            if let Some(p) = draw_point(n, m, c, &mut self.rng) {
                self.accepted += 1;
                return Ok(p);
            }
        }
    }

    pub fn jet(&mut self, n: usize, m: usize, c: f64) -> Result<CurvatureJet> {
        let p = self.point(n, m, c)?;
        let t = draw_symmetric_t(n, m, &mut self.rng);
        Ok(CurvatureJet { point: p, t })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.attempted == 0 {
            1.0
        } else {
            self.accepted as f64 / self.attempted as f64
        }
    }
}

pub fn sample_pinched_point<R: Rng>(n: usize, m: usize, c: f64, rng: &mut R) -> Result<CurvaturePoint> {
    check_cone(n, c)?;
    loop {
        if let Some(p) = draw_point(n, m, c, rng) {
            return Ok(p);
        }
    }
}

pub fn sample_pinched_jet<R: Rng>(n: usize, m: usize, c: f64, rng: &mut R) -> Result<CurvatureJet> {
    let p = sample_pinched_point(n, m, c, rng)?;
    let t = draw_symmetric_t(n, m, rng);
    Ok(CurvatureJet { point: p, t })
}

fn check_cone(n: usize, c: f64) -> Result<()> {
    if n == 0 {
        return Err(PinchError::InvalidInput("dimension must be positive".into()));
    }
    let inv_n = 1.0 / n as f64;
    if !(c > inv_n) {
        return Err(PinchError::ConeTooThin { c, inv_n });
    }
    Ok(())
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn traceless_symmetric<R: Rng>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = if i == j { gauss(rng) } else { gauss(rng) * std::f64::consts::FRAC_1_SQRT_2 };
            x[(i, j)] = v;
            x[(j, i)] = v;
        }
    }
    let tr = x.trace() / n as f64;
    for i in 0..n {
        x[(i, i)] -= tr;
    }
    x
}

fn random_orthogonal<R: Rng>(m: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| gauss(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        if r[(j, j)] < 0.0 {
            for i in 0..m {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// The traceless parts are Gaussian with independently drawn magnitudes, so
/// that both the `h_ring`-dominated and `hat A`-dominated corners are visited;
/// `|H|` then places `|A|^2/|H|^2` uniformly in `(1/n, c)`.
fn draw_point<R: Rng>(n: usize, m: usize, c: f64, rng: &mut R) -> Option<CurvaturePoint> {
    let inv_n = 1.0 / n as f64;
    let mut ring_scale = 10f64.powf(rng.gen_range(-2.0..0.5));
    let mut hat_scale = 10f64.powf(rng.gen_range(-2.0..0.5));
    if m > 1 {
        let u: f64 = rng.gen();
        if u < 0.08 {
            ring_scale = 0.0;
        } else if u < 0.16 {
            hat_scale = 0.0;
        }
    }
    let h_ring = traceless_symmetric(n, rng) * ring_scale;
    let hats: Vec<DMatrix<f64>> = (1..m).map(|_| traceless_symmetric(n, rng) * hat_scale).collect();
    let traceless2 = h_ring.norm_squared() + hats.iter().map(|x| x.norm_squared()).sum::<f64>();
    let r: f64 = rng.gen_range(inv_n..c);
    if traceless2 == 0.0 || r <= inv_n {
        return None;
    }
    let mean_norm = (traceless2 / (r - inv_n)).sqrt();
    let mut a1 = h_ring;
    for i in 0..n {
        a1[(i, i)] += mean_norm * inv_n;
    }
    let mut frame = vec![a1];
    frame.extend(hats);
    let a2: f64 = frame.iter().map(|x| x.norm_squared()).sum();
    let norm = a2.sqrt();
    for x in frame.iter_mut() {
        *x /= norm;
    }
    let rot = random_orthogonal(m, rng);
    let a: Vec<DMatrix<f64>> = (0..m)
        .map(|al| {
            let mut s = DMatrix::zeros(n, n);
            for (be, x) in frame.iter().enumerate() {
                s += x * rot[(al, be)];
            }
            s
        })
        .collect();
    let h2: f64 = a.iter().map(|x| x.trace().powi(2)).sum();
    let a2: f64 = a.iter().map(|x| x.norm_squared()).sum();
    if !(c * h2 - a2 > 0.0) {
        return None;
    }
    CurvaturePoint::orthonormal(a).ok()
}

/// Totally symmetric `T` with a random overall size relative to `|A|^2 = 1`;
/// a quarter of the draws carry an added pure-trace part, the extremal case
/// of the trace estimates.
fn draw_symmetric_t<R: Rng>(n: usize, m: usize, rng: &mut R) -> Vec<f64> {
    let scale = 10f64.powf(rng.gen_range(-1.0..1.0));
    let u: f64 = rng.gen();
    let noise = if u < 0.1 { 0.0 } else { scale };
    let trace_part = if u < 0.35 { scale * rng.gen_range(0.2..2.0) } else { 0.0 };
    // unique entries i <= j <= k, addressed through a dense lookup
    let mut slot = vec![0usize; n * n * n];
    let mut count = 0;
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                slot[(i * n + j) * n + k] = count;
                count += 1;
            }
        }
    }
    let unique: Vec<f64> = (0..count * m).map(|_| gauss(rng) * noise).collect();
    let w: Vec<f64> = if trace_part > 0.0 {
        (0..n * m).map(|_| gauss(rng) * trace_part).collect()
    } else {
        Vec::new()
    };
    let mut t = vec![0.0; n * n * n * m];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut s = [i, j, k];
                s.sort_unstable();
                let u = slot[(s[0] * n + s[1]) * n + s[2]] * m;
                let base = ((i * n + j) * n + k) * m;
                t[base..base + m].copy_from_slice(&unique[u..u + m]);
                if !w.is_empty() {
                    for a in 0..m {
                        let mut v = 0.0;
                        if i == j {
                            v += w[k * m + a];
                        }
                        if j == k {
                            v += w[i * m + a];
                        }
                        if k == i {
                            v += w[j * m + a];
                        }
                        t[base + a] += v;
                    }
                }
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn samples_are_inside_cone() {
        let mut s = Sampler::new(7);
        for _ in 0..200 {
            let p = s.point(6, 3, 0.2).unwrap();
            let h2: f64 = p.a.iter().map(|x| x.trace().powi(2)).sum();
            let a2: f64 = p.a.iter().map(|x| x.norm_squared()).sum();
            assert!(a2 < 0.2 * h2);
            assert!(a2 > h2 / 6.0 * (1.0 - 1e-12));
        }
        assert!(s.acceptance_rate() > 0.9);
    }

    #[test]
    fn thin_cone_rejected() {
        let mut s = Sampler::new(1);
        assert!(matches!(s.point(5, 2, 0.2), Err(PinchError::ConeTooThin { .. })));
    }
}
