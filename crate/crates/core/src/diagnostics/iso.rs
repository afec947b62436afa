use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{BallSpec, Manifold, Point};
use crate::polar::{stream_rng, tangent_basis};
use crate::quad::{integrate_scalar, sphere_area, AdaptiveOpts};
use crate::weight::WeightField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Domain {
    Ball { center: Point, radius: f64 },
    /// Coordinate box `[lo, hi]` on a torus or box, dimensions ≤ 3.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoRow {
    pub domain: Domain,
    pub perimeter: f64,
    pub mass: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsoReport {
    pub inf: f64,
    pub rows: Vec<IsoRow>,
    pub total_mass: f64,
}

const OPTS: AdaptiveOpts = AdaptiveOpts {
    rel_tol: 1e-9,
    abs_tol: 1e-300,
    max_intervals: 400,
};

const NESTED_OPTS: AdaptiveOpts = AdaptiveOpts {
    rel_tol: 1e-7,
    abs_tol: 1e-300,
    max_intervals: 200,
};

/// `perimeter / μ_f(Ω)^{1−1/n}` per domain, with perimeter
/// `∫_{∂Ω} e^{(n−1)f} dA₀`. Ratios are computed on the field without its
/// constant shift, so they are exactly scale invariant.
pub fn isoperimetric_ratio(
    m: &Manifold,
    field: &WeightField,
    domains: &[Domain],
    budget: usize,
    seed: u64,
) -> Result<IsoReport> {
    field.validate(m)?;
    if domains.is_empty() {
        return Err(Error::input("no domains given"));
    }
    let n = m.dim();
    let nf = n as f64;
    let (base, shift) = field.peel();
    let total = base.total_mass(m, budget, seed)?.value;
    let mut rows = Vec::with_capacity(domains.len());
    for (k, dom) in domains.iter().enumerate() {
        let (perimeter, mass) = match dom {
            Domain::Ball { center, radius } => ball_parts(m, base, center, *radius, budget, crate::metric::edge_seed(seed, k))?,
            Domain::Box { lo, hi } => box_parts(m, base, lo, hi)?,
        };
        if !(perimeter.is_finite() && perimeter > 0.0 && mass.is_finite() && mass > 0.0) {
            return Err(Error::Integration(format!("non-finite boundary or volume quadrature for domain {k}")));
        }
        if mass > 0.5 * total * (1.0 + 1e-9) {
            return Err(Error::input(format!(
                "domain {k} carries {mass:.6} of total mass {total:.6}; at most half is allowed"
            )));
        }
        rows.push(IsoRow {
            domain: dom.clone(),
            perimeter: perimeter * ((nf - 1.0) * shift).exp(),
            mass: mass * (nf * shift).exp(),
            ratio: perimeter / mass.powf(1.0 - 1.0 / nf),
        });
    }
    Ok(IsoReport {
        inf: rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min),
        rows,
        total_mass: total * (nf * shift).exp(),
    })
}

fn ball_parts(m: &Manifold, base: &WeightField, c: &Point, r: f64, budget: usize, seed: u64) -> Result<(f64, f64)> {
    m.check_point(c)?;
    let inside = match m {
        Manifold::Box { extents } => c.iter().zip(extents).all(|(x, [a, b])| x - r >= *a && x + r <= *b),
        _ => r < m.injectivity_radius(),
    };
    if !(r > 0.0) || !inside {
        return Err(Error::input(format!("ball of radius {r} is not an embedded ball inside the manifold")));
    }
    let n = m.dim();
    let basis = tangent_basis(m, c);
    let amb = c.len();
    let jac = m.polar_jacobian(r);
    let weight = |u: &[f64], x: &mut [f64]| {
        m.ray_point(c, u, r, x);
        m.canonicalize(x);
        ((n as f64 - 1.0) * base.f(m, x)).exp()
    };
    let mut u = vec![0.0; amb];
    let mut x = vec![0.0; amb];
    let two_pi = 2.0 * std::f64::consts::PI;
    let angular = match n {
        1 => {
            u[0] = 1.0;
            let a = weight(&u, &mut x);
            u[0] = -1.0;
            a + weight(&u, &mut x)
        }
        2 => integrate_scalar(
            |a| {
                for i in 0..amb {
                    u[i] = a.cos() * basis[0][i] + a.sin() * basis[1][i];
                }
                weight(&u, &mut x)
            },
            0.0,
            two_pi,
            OPTS,
        ),
        3 => integrate_scalar(
            |th| {
                let (s, co) = th.sin_cos();
                s * integrate_scalar(
                    |a| {
                        for i in 0..amb {
                            u[i] = s * (a.cos() * basis[0][i] + a.sin() * basis[1][i]) + co * basis[2][i];
                        }
                        weight(&u, &mut x)
                    },
                    0.0,
                    two_pi,
                    NESTED_OPTS,
                )
            },
            0.0,
            std::f64::consts::PI,
            NESTED_OPTS,
        ),
        _ => {
            let mut rng = stream_rng(seed, u64::MAX);
            let mut sum = 0.0;
            let pairs = (budget / 2).max(1);
            for _ in 0..pairs {
                m.random_direction(c, &mut rng, &mut u);
                sum += weight(&u, &mut x);
                u.iter_mut().for_each(|v| *v = -*v);
                sum += weight(&u, &mut x);
            }
            sphere_area(n - 1) * sum / (2 * pairs) as f64
        }
    };
    let perimeter = angular * jac;
    let mass = base.mu_f_ball(m, &BallSpec::new(c.clone(), r), budget, seed)?.value;
    Ok((perimeter, mass))
}

/// Nested adaptive quadrature of `g` over the free `axes` of `[lo, hi]`;
/// coordinates of other axes are read from `x`.
fn nested(g: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], axes: &[usize], x: &mut Vec<f64>) -> f64 {
    let Some((&a, rest)) = axes.split_first() else {
        return g(x);
    };
    integrate_scalar(
        |t| {
            x[a] = t;
            let mut y = x.clone();
            nested(g, lo, hi, rest, &mut y)
        },
        lo[a],
        hi[a],
        NESTED_OPTS,
    )
}

fn box_parts(m: &Manifold, base: &WeightField, lo: &[f64], hi: &[f64]) -> Result<(f64, f64)> {
    let n = m.dim();
    if n > 3 {
        return Err(Error::Unsupported("box domains beyond dimension 3".into()));
    }
    if lo.len() != n || hi.len() != n || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(Error::input("box domain needs lo < hi in every coordinate"));
    }
    match m {
        Manifold::Torus { periods } => {
            if lo.iter().zip(hi).zip(periods).any(|((a, b), p)| b - a > *p) {
                return Err(Error::input("box domain is longer than a period"));
            }
        }
        Manifold::Box { extents } => {
            if lo.iter().zip(hi).zip(extents).any(|((a, b), [c, d])| a < c || b > d) {
                return Err(Error::input("box domain leaves the manifold"));
            }
        }
        Manifold::Sphere { .. } => return Err(Error::Unsupported("box domains on the sphere".into())),
    }
    let eval = |p: f64| {
        move |x: &[f64]| {
            let mut y = x.to_vec();
            m.canonicalize(&mut y);
            (p * base.f(m, &y)).exp()
        }
    };
    let all: Vec<usize> = (0..n).collect();
    let mut x = lo.to_vec();
    let mass = nested(&eval(n as f64), lo, hi, &all, &mut x);
    let face_w = eval(n as f64 - 1.0);
    let mut perimeter = 0.0;
    for a in 0..n {
        let free: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        for side in [lo[a], hi[a]] {
            let mut x = lo.to_vec();
            x[a] = side;
            perimeter += nested(&face_w, lo, hi, &free, &mut x);
        }
    }
    Ok((perimeter, mass))
}
