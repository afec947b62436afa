//! Ball and whole-manifold quadrature in geodesic polar coordinates.
//!
//! Directions are random (antithetic pairs, one ChaCha stream per pair);
//! along each ray the radial integral is done by adaptive Gauss–Kronrod.
//! Radial structure around the pole is therefore integrated to quadrature
//! accuracy and only the angular dependence is sampled, which keeps peaked
//! weights (bubbles, cusps) cheap when the pole sits on the peak.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::manifold::{BallSpec, Estimate, Interval, Manifold};
use crate::quad::{self, AdaptiveOpts};

const RADIAL_OPTS: AdaptiveOpts = AdaptiveOpts {
    rel_tol: 1e-10,
    abs_tol: 1e-300,
    max_intervals: 400,
};

/// Fraction of rays allowed to produce non-finite values before the whole
/// estimate is rejected.
const MAX_BAD_FRACTION: f64 = 1e-3;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn choose_pole(m: &Manifold, b: &BallSpec, focus: Option<&[f64]>) -> Vec<f64> {
    if let Some(p) = focus {
        let d = m.d0(p, &b.center);
        let ok = match m {
            Manifold::Sphere { .. } => true,
            Manifold::Torus { .. } => b.radius < 0.5 * m.min_extent() || d == 0.0,
            Manifold::Box { extents } => p.iter().zip(extents).all(|(v, [lo, hi])| v >= lo && v <= hi),
        };
        if ok && d <= b.radius {
            return p.to_vec();
        }
    }
    b.center.to_vec()
}

fn radial<G>(m: &Manifold, pole: &[f64], u: &[f64], ivs: &[Interval], k: usize, g: &G, out: &mut [f64])
where
    G: Fn(&[f64], &mut [f64]),
{
    out.iter_mut().for_each(|o| *o = 0.0);
    // Within this distance of the pole, chart points round onto the pole
    // itself; integrable singularities there are dropped (their mass over
    // such a tiny ball is far below quadrature tolerance).
    let unresolved = 1e-10 * pole.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let mut x = vec![0.0; pole.len()];
    let mut canon = vec![0.0; pole.len()];
    for &(lo, hi) in ivs {
        let v = quad::integrate_adaptive(
            |t, buf| {
                m.ray_point(pole, u, t, &mut x);
                canon.copy_from_slice(&x);
                m.canonicalize(&mut canon);
                g(&canon, buf);
                let j = m.polar_jacobian(t);
                for b in buf.iter_mut() {
                    *b = if !b.is_finite() && t <= unresolved { 0.0 } else { *b * j };
                }
            },
            lo,
            hi,
            k,
            RADIAL_OPTS,
        );
        for (o, v) in out.iter_mut().zip(v) {
            *o += v;
        }
    }
}

fn reduce(samples: Vec<Vec<f64>>, k: usize, scale: f64) -> Result<Vec<Estimate>> {
    let total = samples.len();
    let good: Vec<&Vec<f64>> = samples.iter().filter(|s| s.iter().all(|v| v.is_finite())).collect();
    let bad = total - good.len();
    if bad as f64 > MAX_BAD_FRACTION * total as f64 {
        return Err(Error::Integration(format!("{bad} of {total} rays produced non-finite values")));
    }
    let cnt = good.len() as f64;
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let mean = good.iter().map(|s| s[j]).sum::<f64>() / cnt;
        let var = if good.len() > 1 {
            good.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (cnt - 1.0)
        } else {
            0.0
        };
        out.push(Estimate {
            value: scale * mean,
            stderr: scale * (var / cnt).sqrt(),
        });
    }
    Ok(out)
}

fn pair_samples<G, I>(m: &Manifold, pole: &[f64], budget: usize, seed: u64, k: usize, g: &G, intervals: I) -> Vec<Vec<f64>>
where
    G: Fn(&[f64], &mut [f64]) + Sync,
    I: Fn(&[f64], &mut Vec<Interval>) + Sync,
{
    let pairs = (budget / 2).max(1);
    (0..pairs)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let mut u = vec![0.0; pole.len()];
            m.random_direction(pole, &mut rng, &mut u);
            let mut ivs = Vec::new();
            let mut acc = vec![0.0; k];
            let mut tmp = vec![0.0; k];
            for sign in [1.0, -1.0] {
                let dir: Vec<f64> = u.iter().map(|v| sign * v).collect();
                intervals(&dir, &mut ivs);
                radial(m, pole, &dir, &ivs, k, g, &mut tmp);
                for (a, t) in acc.iter_mut().zip(&tmp) {
                    *a += 0.5 * t;
                }
            }
            acc
        })
        .collect()
}

/// `∫_B g dμ₀` for a `k`-vector integrand. `focus` is used as the pole when
/// it lies close to the ball.
pub fn integrate_ball<G>(
    m: &Manifold,
    b: &BallSpec,
    focus: Option<&[f64]>,
    budget: usize,
    seed: u64,
    k: usize,
    g: G,
) -> Result<Vec<Estimate>>
where
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    m.check_point(&b.center)?;
    if !(b.radius > 0.0) {
        return Err(Error::input("ball radius must be positive"));
    }
    let pole = choose_pole(m, b, focus);
    let samples = pair_samples(m, &pole, budget, seed, k, &g, |u, ivs| m.ray_ball_intervals(&pole, u, b, ivs));
    reduce(samples, k, crate::quad::sphere_area(m.dim() - 1))
}

/// Deterministic `∫_B g dμ₀` in dimensions 2 and 3: adaptive in the
/// angle(s) as well as along each ray. The reported error is the angular
/// tolerance.
pub fn integrate_ball_angular<G>(m: &Manifold, b: &BallSpec, focus: Option<&[f64]>, k: usize, g: G) -> Result<Vec<Estimate>>
where
    G: Fn(&[f64], &mut [f64]),
{
    m.check_point(&b.center)?;
    if !(b.radius > 0.0) {
        return Err(Error::input("ball radius must be positive"));
    }
    if !(2..=3).contains(&m.dim()) {
        return Err(Error::Unsupported("deterministic ball quadrature needs dimension 2 or 3".into()));
    }
    let pole = choose_pole(m, b, focus);
    let ivs = |u: &[f64], out: &mut Vec<Interval>| m.ray_ball_intervals(&pole, u, b, out);
    Ok(angular_product(m, &pole, k, &g, ivs, BALL_ANGULAR_OPTS)
        .into_iter()
        .map(|v| Estimate {
            value: v,
            stderr: BALL_ANGULAR_OPTS.rel_tol * v.abs(),
        })
        .collect())
}

const BALL_ANGULAR_OPTS: AdaptiveOpts = AdaptiveOpts {
    rel_tol: 1e-7,
    abs_tol: 1e-300,
    max_intervals: 200,
};

/// `∫_M g dμ₀` by rays from `pole` (default: north pole on the sphere,
/// box centre, torus origin) sweeping the whole manifold. In dimensions 2
/// and 3 the angular integral is adaptive and deterministic; beyond that,
/// directions are sampled.
pub fn integrate_manifold<G>(m: &Manifold, pole: Option<&[f64]>, budget: usize, seed: u64, k: usize, g: G) -> Result<Vec<Estimate>>
where
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    let pole: Vec<f64> = match pole {
        Some(p) => p.to_vec(),
        None => match m {
            Manifold::Sphere { dim, .. } => {
                let mut v = vec![0.0; dim + 1];
                v[*dim] = 1.0;
                v
            }
            Manifold::Box { extents } => extents.iter().map(|[a, b]| 0.5 * (a + b)).collect(),
            Manifold::Torus { periods } => vec![0.0; periods.len()],
        },
    };
    let n = m.dim();
    if n <= 3 {
        let sweep = |u: &[f64], ivs: &mut Vec<Interval>| {
            ivs.clear();
            ivs.push((0.0, m.ray_extent(&pole, u)));
        };
        return Ok(angular_product(m, &pole, k, &g, sweep, ANGULAR_OPTS)
            .into_iter()
            .map(|v| Estimate {
                value: v,
                stderr: ANGULAR_OPTS.rel_tol * v.abs(),
            })
            .collect());
    }
    let samples = pair_samples(m, &pole, budget, seed, k, &g, |u, ivs| {
        ivs.clear();
        ivs.push((0.0, m.ray_extent(&pole, u)));
    });
    reduce(samples, k, crate::quad::sphere_area(n - 1))
}

const ANGULAR_OPTS: AdaptiveOpts = AdaptiveOpts {
    rel_tol: 1e-9,
    abs_tol: 1e-300,
    max_intervals: 600,
};

/// Orthonormal basis of the tangent space at `p`.
pub(crate) fn tangent_basis(m: &Manifold, p: &[f64]) -> Vec<Vec<f64>> {
    let amb = p.len();
    let n = m.dim();
    if m.is_flat() {
        return (0..n)
            .map(|i| {
                let mut e = vec![0.0; amb];
                e[i] = 1.0;
                e
            })
            .collect();
    }
    let mut basis: Vec<Vec<f64>> = vec![p.to_vec()];
    for i in 0..amb {
        let mut v = vec![0.0; amb];
        v[i] = 1.0;
        for b in &basis {
            let c: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r > 1e-6 {
            v.iter_mut().for_each(|x| *x /= r);
            basis.push(v);
        }
        if basis.len() == amb {
            break;
        }
    }
    basis.remove(0);
    basis
}

// Deterministic polar product rule: adaptive in the angle(s), adaptive
// along each ray out to the sweep extent.
fn angular_product<G, I>(m: &Manifold, pole: &[f64], k: usize, g: &G, intervals: I, opts: AdaptiveOpts) -> Vec<f64>
where
    G: Fn(&[f64], &mut [f64]),
    I: Fn(&[f64], &mut Vec<Interval>),
{
    let basis = tangent_basis(m, pole);
    let amb = pole.len();
    let mut ivs = Vec::new();
    let mut ray = |u: &[f64], out: &mut [f64]| {
        intervals(u, &mut ivs);
        radial(m, pole, u, &ivs, k, g, out);
    };
    let dir2 = |a: f64, s: f64, z: f64, u: &mut [f64]| {
        for i in 0..amb {
            u[i] = s * (a.cos() * basis[0][i] + a.sin() * basis[1][i]);
            if basis.len() > 2 {
                u[i] += z * basis[2][i];
            }
        }
    };
    let two_pi = 2.0 * std::f64::consts::PI;
    if m.dim() == 2 {
        let mut u = vec![0.0; amb];
        quad::integrate_adaptive(
            |a, out| {
                dir2(a, 1.0, 0.0, &mut u);
                ray(&u, out);
            },
            0.0,
            two_pi,
            k,
            opts,
        )
    } else {
        let mut u = vec![0.0; amb];
        quad::integrate_adaptive(
            |th, out| {
                let (s, c) = th.sin_cos();
                let inner = quad::integrate_adaptive(
                    |a, buf| {
                        dir2(a, s, c, &mut u);
                        ray(&u, buf);
                    },
                    0.0,
                    two_pi,
                    k,
                    opts,
                );
                for (o, v) in out.iter_mut().zip(inner) {
                    *o = s * v;
                }
            },
            0.0,
            std::f64::consts::PI,
            k,
            opts,
        )
    }
}

/// Periodic midpoint rule over the torus with about `budget` nodes. The
/// error estimate compares against the half-resolution sublattice, floored
/// at `1e-12` relative.
pub fn integrate_torus_lattice<G>(m: &Manifold, budget: usize, k: usize, g: G) -> Result<Vec<Estimate>>
where
    G: Fn(&[f64], &mut [f64]) + Sync,
{
    let Manifold::Torus { periods } = m else {
        return Err(Error::input("lattice quadrature needs a torus"));
    };
    let n = periods.len();
    let mut per_axis = (budget as f64).powf(1.0 / n as f64).ceil() as usize;
    per_axis = per_axis.max(8);
    per_axis += per_axis % 2;
    let total = per_axis.pow(n as u32);
    let steps: Vec<f64> = periods.iter().map(|p| p / per_axis as f64).collect();
    // Fixed blocks summed in order keep the result schedule-independent.
    const BLOCK: usize = 4096;
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..total.div_ceil(BLOCK))
        .into_par_iter()
        .map(|blk| {
            let mut full = vec![0.0; k];
            let mut coarse = vec![0.0; k];
            let mut x = vec![0.0; n];
            let mut buf = vec![0.0; k];
            for idx in blk * BLOCK..((blk + 1) * BLOCK).min(total) {
                let mut c = idx;
                let mut even = true;
                for a in (0..n).rev() {
                    let i = c % per_axis;
                    c /= per_axis;
                    even &= i % 2 == 0;
                    x[a] = (i as f64 + 0.5) * steps[a];
                }
                g(&x, &mut buf);
                for j in 0..k {
                    full[j] += buf[j];
                    if even {
                        coarse[j] += buf[j];
                    }
                }
            }
            (full, coarse)
        })
        .collect();
    let vol = m.volume();
    let mut full = vec![0.0; k];
    let mut coarse = vec![0.0; k];
    for (f, c) in &rows {
        for j in 0..k {
            full[j] += f[j];
            coarse[j] += c[j];
        }
    }
    Ok((0..k)
        .map(|j| {
            let q = vol * full[j] / total as f64;
            let q2 = vol * coarse[j] / (total / 2usize.pow(n as u32)) as f64;
            Estimate {
                value: q,
                stderr: (q - q2).abs().max(1e-12 * q.abs()),
            }
        })
        .collect())
}
