use serde::{Deserialize, Serialize};

use super::{GridOperator, SchrodingerSolve};
use crate::error::{Error, Result};
use crate::manifold::BallSpec;
use crate::weight::GridField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub c0: f64,
    /// `λ₀(Δ + q + c₀·1_{Bᶜ})`.
    pub lambda0: f64,
    pub c_minus: f64,
    pub c_plus: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    pub iterations: usize,
    pub beta: f64,
    pub ball_volume: f64,
    pub q_norm: f64,
    /// Ground state at `c₀`.
    pub phi: Vec<f64>,
}

const EIG_TOL: f64 = 1e-9;
const EIG_ITER: usize = 2000;

/// The constant `c₀` making the lowest eigenvalue of `Δ + q + c·1_{Bᶜ}`
/// vanish, found by Illinois regula falsi on the bracket
/// `[−(2/vol)∫|q|, (2/β)‖q‖_{n/2}]`. `λ₀(c)` is concave and nondecreasing
/// in `c`.
pub fn gs_shift_c0(q: &GridField, ball: &BallSpec, beta: f64, tol: f64) -> Result<ShiftReport> {
    if !(beta > 0.0 && beta.is_finite() && tol > 0.0) {
        return Err(Error::input("beta and tol must be positive"));
    }
    let base = GridOperator::new(q.clone())?;
    let m = base.manifold().clone();
    let n = m.dim() as f64;
    let nodes = base.nodes()?;
    let outside: Vec<bool> = nodes.iter().map(|x| m.d0(x, &ball.center) > ball.radius).collect();
    if let Some(k) = (0..nodes.len()).find(|&k| outside[k] && q.values[k] != 0.0) {
        return Err(Error::input(format!(
            "q is nonzero at node {k}, outside the ball of radius {}",
            ball.radius
        )));
    }
    let ball_volume = m.mu0_ball(ball)?.value;
    if ball_volume > (beta / 2.0).powf(n / 2.0) {
        return Err(Error::input(format!(
            "ball volume {ball_volume:.6} exceeds (β/2)^(n/2) = {:.6}",
            (beta / 2.0).powf(n / 2.0)
        )));
    }
    let abs_q: Vec<f64> = q.values.iter().map(|v| v.abs()).collect();
    let q_l1 = base.lp_norm(&abs_q, 1.0)?;
    let q_norm = base.lp_norm(&q.values, n / 2.0)?;
    let c_minus = -2.0 / base.volume() * q_l1;
    let c_plus = 2.0 / beta * q_norm;

    let mut start: Option<Vec<f64>> = None;
    let mut eval = |c: f64| -> Result<SchrodingerSolve> {
        let v = q.values.iter().zip(&outside).map(|(qi, o)| -qi - if *o { c } else { 0.0 }).collect();
        let s = base.with_potential(v)?.eigen_from(start.as_deref(), EIG_TOL, EIG_ITER)?;
        start = Some(s.phi.clone());
        Ok(s)
    };
    let report = |c0: f64, s: SchrodingerSolve, lm: f64, lp: f64, iterations: usize| ShiftReport {
        c0,
        lambda0: s.lambda0,
        c_minus,
        c_plus,
        lambda_minus: lm,
        lambda_plus: lp,
        iterations,
        beta,
        ball_volume,
        q_norm,
        phi: s.phi,
    };
    let sm = eval(c_minus)?;
    let lm = sm.lambda0;
    if lm.abs() <= tol {
        return Ok(report(c_minus, sm, lm, f64::NAN, 1));
    }
    let sp = eval(c_plus)?;
    let lp = sp.lambda0;
    if lp.abs() <= tol {
        return Ok(report(c_plus, sp, lm, lp, 2));
    }
    if lm > 0.0 || lp < 0.0 {
        return Err(Error::numeric(
            format!("bracket [{c_minus:.6e}, {c_plus:.6e}] does not straddle zero: λ₀ = {lm:.6e}, {lp:.6e}"),
            vec![lm, lp],
        ));
    }
    let (mut a, mut fa, mut b, mut fb) = (c_minus, lm, c_plus, lp);
    let mut history = vec![lm, lp];
    for it in 3..=200 {
        let c = if fb != fa { b - fb * (b - a) / (fb - fa) } else { 0.5 * (a + b) };
        let s = eval(c)?;
        let fc = s.lambda0;
        history.push(fc);
        if fc.abs() <= tol {
            return Ok(report(c, s, lm, lp, it));
        }
        if fc.signum() != fb.signum() {
            a = b;
            fa = fb;
        } else {
            fa *= 0.5;
        }
        b = c;
        fb = fc;
    }
    Err(Error::numeric(format!("c₀ search did not reach |λ₀| ≤ {tol:e}"), history))
}
