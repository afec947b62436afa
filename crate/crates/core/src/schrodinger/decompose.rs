use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{estimate_constants, gs_shift_c0, log_gradient_fixedpoint_with, GridConstants, GridOperator};
use crate::error::{Error, Result};
use crate::manifold::{BallSpec, Manifold, Point};
use crate::weight::GridField;

const SHIFT_TOL: f64 = 1e-10;
const FIXED_TOL: f64 = 1e-10;
const FIXED_ITER: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSolve {
    pub center: Point,
    pub c: f64,
    pub shift_iterations: usize,
    pub fixed_iterations: usize,
    /// `‖dv_i‖_{L^n}` of the local log ground state.
    pub grad_norm: f64,
    pub potential_norm: f64,
    /// `inf ψ_i` over `B(x_i, 3ρ/4)`.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub rho: f64,
    /// `sup_x ‖V‖_{L^{n/2}(B(x, ρ))}` over grid nodes.
    pub local_norm: f64,
    pub grad_f_norm: f64,
    pub laplacian_f_norm: f64,
    pub alpha: f64,
    pub holder_w: f64,
    /// `max |e^{f+w}/φ − 1|`.
    pub reconstruction_error: f64,
    pub constants: GridConstants,
    pub cover_shape: Vec<usize>,
    pub locals: Vec<LocalSolve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub f: Vec<f64>,
    pub w: Vec<f64>,
    pub report: DecompositionReport,
}

/// C² bump: 1 on `[0, ¼]`, 0 from `¾` on, quintic smoothstep between.
fn bump(t: f64) -> f64 {
    let s = ((0.75 - t) / 0.5).clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Lattice of centres whose `ρ/2` balls cover and whose `ρ/4` balls are
/// disjoint.
fn cover(m: &Manifold, rho: f64, h: f64) -> Result<(Vec<usize>, Vec<Point>)> {
    let n = m.dim();
    let axes: Vec<(f64, f64)> = match m {
        Manifold::Torus { periods } => periods.iter().map(|p| (0.0, *p)).collect(),
        Manifold::Box { extents } => extents.iter().map(|[a, b]| (*a, b - a)).collect(),
        Manifold::Sphere { .. } => return Err(Error::Unsupported("ground-state decomposition on the sphere".into())),
    };
    if !(rho > 0.0) || 0.5 * rho < h {
        return Err(Error::input(format!("rho = {rho} is too small for grid step {h:.4}: need ρ/2 ≥ h")));
    }
    if matches!(m, Manifold::Torus { .. }) && rho >= 0.5 * m.min_extent() {
        return Err(Error::input(format!("rho = {rho} is too large: balls of radius ρ must embed")));
    }
    let counts: Vec<usize> = axes.iter().map(|(_, l)| (l * (n as f64).sqrt() / rho).ceil().max(1.0) as usize).collect();
    if axes.iter().zip(&counts).any(|((_, l), k)| l / (*k as f64) < 0.5 * rho * (1.0 - 1e-12)) {
        return Err(Error::input(format!(
            "no cubic cover by B(x_i, ρ/2) with disjoint B(x_i, ρ/4) for rho = {rho}"
        )));
    }
    let total: usize = counts.iter().product();
    let mut centers = Vec::with_capacity(total);
    for k in 0..total {
        let mut rest = k;
        let mut c = vec![0.0; n];
        for a in (0..n).rev() {
            let j = rest % counts[a];
            rest /= counts[a];
            let (lo, l) = axes[a];
            c[a] = lo + (j as f64 + 0.5) * l / counts[a] as f64;
        }
        centers.push(Point::new(c));
    }
    Ok((counts, centers))
}

/// `sup_x ‖V‖_{L^{n/2}(B(x, ρ))}` over nodes, by a fixed offset stencil on
/// the periodic lattice (reflected across box faces, so an upper bound
/// there).
fn local_norm(op: &GridOperator, rho: f64) -> f64 {
    let lat = &*op.lat;
    let n = lat.dim();
    let p = n as f64 / 2.0;
    let reach: Vec<isize> = lat.steps.iter().map(|h| (rho / h).floor() as isize).collect();
    let widths: Vec<usize> = reach.iter().map(|r| (2 * r + 1) as usize).collect();
    let offsets: Vec<Vec<isize>> = (0..widths.iter().product::<usize>())
        .map(|mut c| {
            let mut off = vec![0isize; n];
            for a in (0..n).rev() {
                off[a] = (c % widths[a]) as isize - reach[a];
                c /= widths[a];
            }
            off
        })
        .filter(|off| off.iter().zip(&lat.steps).map(|(i, h)| (*i as f64 * h).powi(2)).sum::<f64>() <= rho * rho)
        .collect();
    let pw: Vec<f64> = op.v.iter().map(|v| v.abs().powf(p)).collect();
    let shape = &lat.shape;
    let mut best: f64 = 0.0;
    let mut base = vec![0usize; n];
    for k in 0..lat.total {
        let mut rest = k;
        for a in (0..n).rev() {
            base[a] = rest % shape[a];
            rest /= shape[a];
        }
        if (0..n).any(|a| lat.reflected[a] && base[a] >= lat.orig[a]) {
            continue;
        }
        let mut s = 0.0;
        for off in &offsets {
            let mut j = 0;
            for a in 0..n {
                j = j * shape[a] + (base[a] as isize + off[a]).rem_euclid(shape[a] as isize) as usize;
            }
            s += pw[j];
        }
        best = best.max(s);
    }
    (best * lat.cell).powf(1.0 / p)
}

fn holder(m: &Manifold, nodes: &crate::manifold::PointSet, w: &[f64], alpha: f64, seed: u64) -> f64 {
    let total = nodes.len();
    let pick: Vec<usize> = if total <= 3000 {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample(&mut rng, total, 3000).into_vec()
    };
    pick.par_iter()
        .enumerate()
        .map(|(a, &i)| {
            let mut b: f64 = 0.0;
            for &j in &pick[a + 1..] {
                let d = m.d0(nodes.get(i), nodes.get(j));
                if d > 0.0 {
                    b = b.max((w[i] - w[j]).abs() / d.powf(alpha));
                }
            }
            b
        })
        .reduce(|| 0.0, f64::max)
}

/// Splits a positive solution `φ` of `Δφ = Vφ` as `φ = e^{f+w}` following
/// the covering construction: on each ball `B(x_i, ρ)` the localized
/// potential `V·1_B − c_i·1_{Bᶜ}` is shifted to ground energy zero, its
/// log ground state `v_i` comes from the fixed point, and the pieces are
/// glued with a bump partition of unity. The identity `e^{f+w} = φ` holds by
/// construction for any positive `φ`.
pub fn decompose_ground_state(potential: &GridField, rho: f64, phi: &[f64], alpha: f64, seed: u64) -> Result<Decomposition> {
    let op = GridOperator::new(potential.clone())?;
    if phi.len() != op.len() || phi.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::input("phi must be positive with one value per grid node"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::input("alpha must lie in (0, 1]"));
    }
    let m = op.manifold().clone();
    let n = m.dim() as f64;
    let h = op.lat.steps.iter().cloned().fold(0.0, f64::max);
    let (cover_shape, centers) = cover(&m, rho, h)?;
    let constants = estimate_constants(&op, seed)?;
    let local = local_norm(&op, rho);
    if local > 0.5 * constants.beta {
        return Err(Error::input(format!(
            "sup_x ‖V‖_(n/2) on B(x, ρ) = {local:.6e} exceeds β/2 = {:.6e}",
            0.5 * constants.beta
        )));
    }
    let nodes = op.nodes()?;
    let log_phi: Vec<f64> = phi.iter().map(|v| v.ln()).collect();
    let v = op.potential();

    // Per ball: sparse (node, bump, f_i − f̄_i, w_i + f̄_i) on B(x_i, 3ρ/4).
    type Piece = Vec<(usize, f64, f64, f64)>;
    let solved: Vec<(LocalSolve, Piece)> = centers
        .par_iter()
        .map(|x| {
            let dist: Vec<f64> = nodes.iter().map(|y| m.d0(y, x)).collect();
            let q: Vec<f64> = v.iter().zip(&dist).map(|(vi, d)| if *d <= rho { -vi } else { 0.0 }).collect();
            let qf = GridField::new(m.clone(), op.shape().to_vec(), q)?;
            let shift = gs_shift_c0(&qf, &BallSpec::new(x.clone(), rho), constants.beta, SHIFT_TOL)?;
            let vi: Vec<f64> = v
                .iter()
                .zip(&dist)
                .map(|(vk, d)| if *d <= rho { *vk } else { -shift.c0 })
                .collect();
            let fp = log_gradient_fixedpoint_with(&op.with_potential(vi)?, constants, FIXED_TOL, FIXED_ITER)?;
            let inner: Vec<usize> = (0..dist.len()).filter(|&k| dist[k] < 0.75 * rho).collect();
            if inner.is_empty() {
                return Err(Error::input("a cover ball of radius 3ρ/4 holds no grid node"));
            }
            // ψ_i = φ/e^{v_i} = δ_i e^{w_i};  f_i = v_i + ln δ_i.
            let ln_delta = inner.iter().map(|&k| log_phi[k] - fp.v[k]).fold(f64::INFINITY, f64::min);
            let f_bar = inner.iter().map(|&k| fp.v[k] + ln_delta).sum::<f64>() / inner.len() as f64;
            let piece = inner
                .iter()
                .map(|&k| {
                    let fi = fp.v[k] + ln_delta;
                    (k, bump(dist[k] / rho), fi - f_bar, log_phi[k] - fi + f_bar)
                })
                .collect();
            Ok((
                LocalSolve {
                    center: x.clone(),
                    c: shift.c0,
                    shift_iterations: shift.iterations,
                    fixed_iterations: fp.iterations,
                    grad_norm: fp.grad_norm,
                    potential_norm: fp.potential_norm,
                    delta: ln_delta.exp(),
                },
                piece,
            ))
        })
        .collect::<Result<_>>()?;

    let total = op.len();
    let mut weight = vec![0.0; total];
    for (_, piece) in &solved {
        for &(k, b, _, _) in piece {
            weight[k] += b;
        }
    }
    if weight.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Construction("partition of unity does not cover every node".into()));
    }
    let mut f = vec![0.0; total];
    let mut w = vec![0.0; total];
    for (_, piece) in &solved {
        for &(k, b, fk, wk) in piece {
            let chi = b / weight[k];
            f[k] += chi * fk;
            w[k] += chi * wk;
        }
    }
    let reconstruction_error = f
        .iter()
        .zip(&w)
        .zip(phi)
        .map(|((a, b), p)| ((a + b).exp() / p - 1.0).abs())
        .fold(0.0, f64::max);
    let grad_f_norm = op.grad_lp_norm(&f, n)?;
    let laplacian_f_norm = op.lp_norm(&op.apply_laplacian(&f)?, n / 2.0)?;
    let holder_w = holder(&m, &nodes, &w, alpha, seed);
    Ok(Decomposition {
        f,
        w,
        report: DecompositionReport {
            rho,
            local_norm: local,
            grad_f_norm,
            laplacian_f_norm,
            alpha,
            holder_w,
            reconstruction_error,
            constants,
            cover_shape,
            locals: solved.into_iter().map(|(l, _)| l).collect(),
        },
    })
}
