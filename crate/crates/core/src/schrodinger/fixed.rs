use serde::{Deserialize, Serialize};

use super::{estimate_constants, GridConstants, GridOperator};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    /// Mean-zero solution of `Δv − |dv|² = V + c`.
    pub v: Vec<f64>,
    pub c: f64,
    /// `‖d(v − S(v))‖_{L^n}`.
    pub residual: f64,
    /// `‖Δv − |dv|² − V − c‖_{L^{n/2}}`.
    pub equation_residual: f64,
    pub iterations: usize,
    /// `‖dv‖_{L^n}`.
    pub grad_norm: f64,
    pub potential_norm: f64,
    /// `2Â‖V‖_{n/2}`.
    pub bound: f64,
    /// Smallness threshold `1/(8Â²)` on `‖V‖_{n/2}`.
    pub threshold: f64,
    /// Radius `1/(4Â)` the iterates must stay in.
    pub radius: f64,
    pub constants: GridConstants,
    pub history: Vec<f64>,
}

/// Seed of the constant estimation in [`log_gradient_fixedpoint`].
pub const CONSTANTS_SEED: u64 = 0x5C4D;

pub fn log_gradient_fixedpoint(op: &GridOperator, tol: f64, max_iter: usize) -> Result<FixedPoint> {
    let k = estimate_constants(op, CONSTANTS_SEED)?;
    log_gradient_fixedpoint_with(op, k, tol, max_iter)
}

/// Picard iteration of `S(v) = Δ⁻¹(V + |dv|²)` (mean-zero inverse) from
/// `v = 0`. `|dv|²` is the lattice carré du champ, which makes `e^v` an
/// exact lattice eigenfunction of `Δ − V` with eigenvalue `c`.
pub fn log_gradient_fixedpoint_with(op: &GridOperator, constants: GridConstants, tol: f64, max_iter: usize) -> Result<FixedPoint> {
    if !(tol > 0.0) {
        return Err(Error::input("tolerance must be positive"));
    }
    let lat = &*op.lat;
    let n = lat.dim() as f64;
    let a = constants.a_hat;
    let potential_norm = lat.lp(&op.v, n / 2.0);
    let threshold = 1.0 / (8.0 * a * a);
    if potential_norm >= threshold {
        return Err(Error::input(format!(
            "‖V‖_{{n/2}} = {potential_norm:.6e} is not below the smallness threshold 1/(8Â²) = {threshold:.6e}"
        )));
    }
    let radius = 1.0 / (4.0 * a);
    let s_map = |v: &[f64]| {
        let rhs: Vec<f64> = op.v.iter().zip(lat.carre(v)).map(|(x, q)| x + q).collect();
        (lat.solve(&rhs, 0.0), -lat.mean(&rhs))
    };
    let mut v = vec![0.0; lat.total];
    let mut history = Vec::new();
    for it in 0..=max_iter {
        let (s, c) = s_map(&v);
        let diff: Vec<f64> = v.iter().zip(&s).map(|(a, b)| a - b).collect();
        let residual = lat.lp_field(&lat.grad(&diff), n);
        let equation_residual = lat.lp(&lat.laplacian(&diff), n / 2.0);
        history.push(residual);
        if residual <= tol && equation_residual <= tol {
            let grad_norm = lat.lp_field(&lat.grad(&v), n);
            return Ok(FixedPoint {
                v: lat.restrict(&v),
                c,
                residual,
                equation_residual,
                iterations: it,
                grad_norm,
                potential_norm,
                bound: 2.0 * a * potential_norm,
                threshold,
                radius,
                constants,
                history,
            });
        }
        v = s;
        let norm = lat.lp_field(&lat.grad(&v), n);
        if !(norm <= radius) {
            return Err(Error::numeric(
                format!("fixed-point iterate left the contraction ball: ‖dv‖_n = {norm:.6e} > 1/(4Â) = {radius:.6e}"),
                history,
            ));
        }
    }
    Err(Error::numeric(format!("fixed point did not reach {tol:e} in {max_iter} iterations"), history))
}
