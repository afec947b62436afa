use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lattice::Lattice;
use super::GridOperator;
use crate::error::{Error, Result};

/// Empirical grid constants: `a_hat` for `‖du‖_{L^n} ≤ Â‖Δu‖_{L^{n/2}}`
/// and `beta` for `β‖u‖²_{L^{2n/(n−2)}} ≤ ‖du‖²₂ + ‖u‖²₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConstants {
    /// Largest ratio `‖dΔ⁻¹x‖_n / ‖x‖_{n/2}` reached (a lower estimate).
    pub a_hat: f64,
    /// Smallest Sobolev quotient reached (an upper estimate).
    pub beta: f64,
    pub starts: usize,
    pub iterations: usize,
    pub seed: u64,
}

const ITERS: usize = 60;

/// Randomized power iterations on the grid operators. In dimension 2 both
/// constants are exact lattice quantities (`L¹` and `L^∞` endpoints); from
/// dimension 3 on they come from nonlinear power iterations started at
/// point masses, bubbles, smooth modes and seeded random vectors.
pub fn estimate_constants(op: &GridOperator, seed: u64) -> Result<GridConstants> {
    let lat = &*op.lat;
    let n = lat.dim();
    if n < 2 {
        return Err(Error::Unsupported("grid constants need dimension ≥ 2".into()));
    }
    let starts = starts(lat, seed);
    let (a_hat, beta) = if n == 2 {
        let mut e = vec![0.0; lat.total];
        e[0] = lat.fold / lat.cell;
        let a = lat.lp_field(&lat.grad(&lat.solve(&e, 0.0)), 2.0);
        let g = lat.solve(&e, 1.0);
        (a, 1.0 / lat.inner(&g, &e))
    } else {
        let a = starts.iter().map(|s| a_power(lat, s.clone())).fold(0.0, f64::max);
        let b = starts.iter().map(|s| beta_power(lat, s.clone())).fold(f64::INFINITY, f64::min);
        (a, b)
    };
    if !(a_hat.is_finite() && a_hat > 0.0 && beta.is_finite() && beta > 0.0) {
        return Err(Error::numeric("grid constant estimation failed", vec![a_hat, beta]));
    }
    Ok(GridConstants {
        a_hat,
        beta,
        starts: if n == 2 { 1 } else { starts.len() },
        iterations: if n == 2 { 0 } else { ITERS },
        seed,
    })
}

fn starts(lat: &Lattice, seed: u64) -> Vec<Vec<f64>> {
    let n = lat.dim();
    let r2 = |k: usize| {
        let mut s = 0.0;
        let mut rest = k;
        for a in (0..n).rev() {
            let i = rest % lat.shape[a];
            rest /= lat.shape[a];
            let d = i.min(lat.shape[a] - i) as f64 * lat.steps[a];
            s += d * d;
        }
        s
    };
    let h = lat.steps.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    let mut spike = vec![0.0; lat.total];
    spike[0] = 1.0;
    out.push(spike);
    out.push(vec![1.0; lat.total]);
    for w in [1.0, 2.0, 4.0, 8.0] {
        let e2 = (w * h).powi(2);
        out.push((0..lat.total).map(|k| (1.0 + r2(k) / e2).powf(-0.5 * (n as f64 - 2.0).max(1.0))).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..2 {
        out.push((0..lat.total).map(|_| rng.random::<f64>() - 0.5).collect());
    }
    out
}

fn dual(x: &[f64], p: f64) -> Vec<f64> {
    x.iter().map(|v| v.signum() * v.abs().powf(p - 1.0)).collect()
}

/// Boyd's power method for `‖dΔ⁻¹‖_{L^{n/2} → L^n}`.
fn a_power(lat: &Lattice, mut x: Vec<f64>) -> f64 {
    let n = lat.dim() as f64;
    let (p, q) = (n / 2.0, n);
    let pd = p / (p - 1.0);
    let mut best: f64 = 0.0;
    for _ in 0..ITERS {
        let m = lat.mean(&x);
        x.iter_mut().for_each(|v| *v -= m);
        let norm = lat.lp(&x, p);
        if !(norm > 0.0) {
            break;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        let y = lat.grad(&lat.solve(&x, 0.0));
        best = best.max(lat.lp_field(&y, q));
        let len: Vec<f64> = (0..lat.total).map(|k| y.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt()).collect();
        let z: Vec<Vec<f64>> = y
            .iter()
            .map(|c| c.iter().zip(&len).map(|(v, l)| v * l.powf(q - 2.0)).collect())
            .collect();
        let s = lat.solve(&lat.grad_adjoint(&z), 0.0);
        x = dual(&s, pd);
    }
    best
}

/// Nonlinear inverse iteration `u ← (Δ+1)⁻¹|u|^{p−2}u` for the Sobolev
/// quotient, `p = 2n/(n−2)`.
fn beta_power(lat: &Lattice, mut x: Vec<f64>) -> f64 {
    let n = lat.dim() as f64;
    let p = 2.0 * n / (n - 2.0);
    let mut best = f64::INFINITY;
    for _ in 0..ITERS {
        let norm = lat.lp(&x, p);
        if !(norm > 0.0) {
            break;
        }
        x.iter_mut().for_each(|v| *v /= norm);
        let energy = lat.inner(&lat.laplacian(&x), &x) + lat.inner(&x, &x);
        best = best.min(energy);
        x = lat.solve(&dual(&x, p), 1.0);
    }
    best
}
