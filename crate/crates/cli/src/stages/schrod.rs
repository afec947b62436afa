use std::f64::consts::PI;

use conflab::schrodinger::{
    decompose_ground_state, estimate_constants, gs_shift_c0, log_gradient_fixedpoint, lowest_eigenpair, GridOperator,
};
use conflab::{BallSpec, Error, GridField, Manifold, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use serde_json::json;

use crate::run::{Ctx, Flag, StageOut};
use crate::spec::SchrodingerParams;

const TOL: f64 = 1e-11;
const ITER: usize = 2000;

fn params<'a>(ctx: &'a Ctx) -> Result<(&'a Manifold, &'a SchrodingerParams, f64)> {
    let s = ctx.spec;
    let p = s
        .schrodinger
        .as_ref()
        .ok_or_else(|| Error::Input("the schrodinger preset needs a `schrodinger` block".into()))?;
    match &s.manifold {
        Manifold::Torus { periods } => Ok((&s.manifold, p, periods.iter().cloned().fold(f64::INFINITY, f64::min))),
        _ => Err(Error::Input("the schrodinger preset runs on a torus".into())),
    }
}

/// Dense `Δ − V` of the periodic five-point stencil on an `n × n` grid.
pub fn dense_torus_2d(n: usize, h: f64, v: &[f64]) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n * n, n * n);
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            a[(k, k)] = 4.0 / (h * h) - v[k];
            for (di, dj) in [(1, 0), (n - 1, 0), (0, 1), (0, n - 1)] {
                let l = ((i + di) % n) * n + (j + dj) % n;
                a[(k, l)] -= 1.0 / (h * h);
            }
        }
    }
    a
}

/// λ₀ for zero and constant potentials, and against a dense eigensolve
/// on a coarse 2-d torus.
pub fn eigen(ctx: &Ctx) -> Result<StageOut> {
    let (m, p, _) = params(ctx)?;
    let zero = lowest_eigenpair(&GridOperator::from_fn(m.clone(), p.shape.clone(), |_| 0.0)?, TOL, ITER)?;
    let c = p.amplitude;
    let constant = lowest_eigenpair(&GridOperator::from_fn(m.clone(), p.shape.clone(), |_| c)?, TOL, ITER)?;

    let n = p.dense_shape;
    let period = match m {
        Manifold::Torus { periods } => periods[0],
        _ => unreachable!(),
    };
    let k = 2.0 * PI / period;
    let dense_op = GridOperator::from_fn(Manifold::torus(vec![period; 2])?, vec![n, n], |x| {
        c * ((k * x[0]).cos() + 0.5 * (k * x[1]).sin())
    })?;
    let dense_solve = lowest_eigenpair(&dense_op, TOL, ITER)?;
    let oracle = SymmetricEigen::new(dense_torus_2d(n, period / n as f64, dense_op.potential()))
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(StageOut {
        output: json!({
            "zero": { "lambda0": zero.lambda0, "iterations": zero.iterations },
            "constant": { "c": c, "lambda0": constant.lambda0, "iterations": constant.iterations },
            "dense": { "shape": [n, n], "lambda0": dense_solve.lambda0, "oracle": oracle },
        }),
        flags: vec![
            Flag::near(9, "λ₀(V = 0)", zero.lambda0, 0.0, 1e-10),
            Flag::near(9, format!("λ₀(V = {c}) + {c}"), constant.lambda0 + c, 0.0, 1e-8),
            Flag::near(9, format!("{n}² grid: λ₀ − dense eigensolve"), dense_solve.lambda0 - oracle, 0.0, 1e-8),
        ],
        artifacts: Vec::new(),
    })
}

/// Bump of the given amplitude and radius about `center`.
fn bump(m: &Manifold, shape: &[usize], center: &[f64], r: f64, amp: f64) -> Result<GridField> {
    let mm = m.clone();
    let c = center.to_vec();
    GridField::from_fn(m.clone(), shape.to_vec(), move |x| {
        let d = mm.d0(x, &c);
        if d < r {
            amp * (1.0 - (d / r).powi(2)).powi(2)
        } else {
            0.0
        }
    })
}

/// Shift constant `c₀` for a positive and a negative bump in a ball about
/// the torus centre.
pub fn shift(ctx: &Ctx) -> Result<StageOut> {
    let (m, p, side) = params(ctx)?;
    let op0 = GridOperator::from_fn(m.clone(), p.shape.clone(), |_| 0.0)?;
    let beta = estimate_constants(&op0, ctx.spec.seed)?.beta;
    let center: Vec<f64> = match m {
        Manifold::Torus { periods } => periods.iter().map(|l| 0.5 * l).collect(),
        _ => unreachable!(),
    };
    let (support, radius) = (0.3 * side, 0.35 * side);
    let ball = BallSpec::new(center.clone(), radius);
    let nodes = op0.nodes()?;
    let outside: Vec<bool> = nodes.iter().map(|x| m.d0(x, &center) > radius).collect();
    let mut flags = Vec::new();
    let mut reports = Vec::new();
    for amp in [0.8 * p.amplitude / 0.3, -0.8 * p.amplitude / 0.3] {
        let q = bump(m, &p.shape, &center, support, amp)?;
        let r = gs_shift_c0(&q, &ball, beta, 1e-10)?;
        // Recomputed from scratch at the returned constant.
        let v: Vec<f64> = q.values.iter().zip(&outside).map(|(qi, o)| -qi - if *o { r.c0 } else { 0.0 }).collect();
        let check = lowest_eigenpair(&op0.with_potential(v)?, TOL, ITER)?.lambda0;
        flags.push(Flag::holds(
            9,
            format!("bump {amp:+.3}: c₋ = {:.6e} ≤ c₀ = {:.6e} ≤ c₊ = {:.6e}", r.c_minus, r.c0, r.c_plus),
            r.c_minus <= r.c0 && r.c0 <= r.c_plus,
        ));
        flags.push(Flag::near(9, format!("bump {amp:+.3}: λ₀ at c₀"), check, 0.0, 1e-8));
        reports.push(json!({
            "amplitude": amp,
            "c0": r.c0,
            "c_minus": r.c_minus,
            "c_plus": r.c_plus,
            "lambda0": r.lambda0,
            "lambda0_recomputed": check,
            "iterations": r.iterations,
            "q_norm": r.q_norm,
            "ball_volume": r.ball_volume,
        }));
    }
    Ok(StageOut {
        output: json!({ "beta": beta, "center": center, "support": support, "radius": radius, "runs": reports }),
        flags,
        artifacts: Vec::new(),
    })
}

/// Picard fixed point of the log-gradient map for a small trigonometric
/// potential, checked against the eigensolver.
pub fn fixed_point(ctx: &Ctx) -> Result<StageOut> {
    let (m, p, side) = params(ctx)?;
    let k = 2.0 * PI / side;
    let shape = |x: &[f64]| (k * x[0]).cos() + 0.5 * (k * (x[1] - x[2])).sin();
    let unit = GridOperator::from_fn(m.clone(), p.shape.clone(), shape)?;
    let a_hat = estimate_constants(&unit, ctx.spec.seed)?.a_hat;
    let n = m.dim() as f64;
    // A quarter of the smallness threshold keeps the contraction factor small.
    let unit_norm = unit.lp_norm(unit.potential(), n / 2.0)?;
    let a = p.amplitude.min(0.25 / (8.0 * a_hat * a_hat) / unit_norm);
    let op = unit.with_potential(unit.potential().iter().map(|v| a * v).collect())?;
    let fp = log_gradient_fixedpoint(&op, 1e-10, 500)?;
    let s = lowest_eigenpair(&op, TOL, ITER)?;
    let ratio: Vec<f64> = fp.v.iter().zip(&s.phi).map(|(v, f)| v.exp() / f).collect();
    let (lo, hi) = ratio.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    let ratio_spread = hi / lo - 1.0;
    Ok(StageOut {
        output: json!({
            "amplitude": a,
            "lambda0": s.lambda0,
            "fixed_point": {
                "c": fp.c,
                "residual": fp.residual,
                "equation_residual": fp.equation_residual,
                "iterations": fp.iterations,
                "grad_norm": fp.grad_norm,
                "potential_norm": fp.potential_norm,
                "bound": fp.bound,
                "threshold": fp.threshold,
                "radius": fp.radius,
                "constants": fp.constants,
                "history": fp.history,
            },
            "ratio_spread": ratio_spread,
        }),
        flags: vec![
            Flag::at_most(9, "fixed point ‖v − S(v)‖", fp.residual, 1e-6),
            Flag::at_most(9, "fixed point ‖Δv − |dv|² − V − c‖_(n/2)", fp.equation_residual, 1e-6),
            Flag::at_most(9, "‖dv‖_(L^n) / (2Â‖V‖_(n/2))", fp.grad_norm / fp.bound, 1.0),
            Flag::at_most(9, "e^v / φ spread against the eigensolver", ratio_spread, 1e-6),
        ],
        artifacts: Vec::new(),
    })
}

/// Zero-energy potential and its ground state.
fn zero_energy(m: &Manifold, shape: &[usize], amp: f64, side: f64) -> Result<(GridField, Vec<f64>)> {
    let k = 2.0 * PI / side;
    let raw = GridOperator::from_fn(m.clone(), shape.to_vec(), |x| {
        amp * ((k * x[0]).cos() + (k * x[1]).sin() * (k * x[2]).cos())
    })?;
    let l = lowest_eigenpair(&raw, TOL, ITER)?.lambda0;
    let v: Vec<f64> = raw.potential().iter().map(|x| x + l).collect();
    let g = GridField::new(m.clone(), shape.to_vec(), v)?;
    let phi = lowest_eigenpair(&GridOperator::new(g.clone())?, TOL, ITER)?.phi;
    Ok((g, phi))
}

/// `φ = e^{f+w}` by the covering construction.
pub fn decomposition(ctx: &Ctx) -> Result<StageOut> {
    let (m, p, side) = params(ctx)?;
    let (g, phi) = zero_energy(m, &p.shape, p.amplitude, side)?;
    let d = decompose_ground_state(&g, p.rho, &phi, p.alpha, ctx.spec.seed)?;
    let rows: Vec<Vec<f64>> = d.f.iter().zip(&d.w).zip(&phi).map(|((f, w), ph)| vec![*f, *w, *ph]).collect();
    let artifacts = vec![ctx.write_csv("decomposition.csv", &["f", "w", "phi"], &rows)?];
    Ok(StageOut {
        flags: vec![Flag::at_most(
            9,
            "max |e^(f+w)/φ − 1|",
            d.report.reconstruction_error,
            1e-8,
        )],
        output: serde_json::to_value(&d.report)?,
        artifacts,
    })
}
