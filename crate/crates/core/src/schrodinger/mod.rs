//! Grid Schrödinger operators `H = Δ − V` (geometer's Laplacian, `Δ ≥ 0`)
//! on tori and boxes. The stencil is the second-order
//! `Σ_a (2u_i − u_{i+e_a} − u_{i−e_a})/h_a²`, periodic on a torus and
//! mirror-reflected (Neumann, trapezoid weights) on a box.

mod constants;
mod decompose;
mod fixed;
mod lattice;
mod shift;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{Manifold, PointSet};
use crate::weight::GridField;

pub use constants::{estimate_constants, GridConstants};
pub use decompose::{decompose_ground_state, Decomposition, DecompositionReport, LocalSolve};

pub use fixed::{log_gradient_fixedpoint, log_gradient_fixedpoint_with, FixedPoint};
pub use shift::{gs_shift_c0, ShiftReport};

use lattice::Lattice;

#[derive(Debug, Clone)]
pub struct GridOperator {
    /// Potential `V` sampled on the grid.
    pub grid: GridField,
    lat: Arc<Lattice>,
    v: Vec<f64>,
}

impl GridOperator {
    pub fn new(potential: GridField) -> Result<Self> {
        let lat = Arc::new(Lattice::new(&potential.manifold, &potential.shape)?);
        if potential.values.len() != lat.orig_total() {
            return Err(Error::input("potential must hold one value per grid node"));
        }
        let v = lat.extend(&potential.values);
        Ok(Self { grid: potential, lat, v })
    }

    pub fn from_fn(m: Manifold, shape: Vec<usize>, v: impl Fn(&[f64]) -> f64) -> Result<Self> {
        Self::new(GridField::from_fn(m, shape, v)?)
    }

    /// Same grid, new potential.
    pub fn with_potential(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.lat.orig_total() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("potential must hold one finite value per grid node"));
        }
        let v = self.lat.extend(&values);
        Ok(Self {
            grid: GridField {
                manifold: self.grid.manifold.clone(),
                shape: self.grid.shape.clone(),
                values,
            },
            lat: self.lat.clone(),
            v,
        })
    }

    pub fn manifold(&self) -> &Manifold {
        &self.grid.manifold
    }

    pub fn shape(&self) -> &[usize] {
        &self.grid.shape
    }

    pub fn potential(&self) -> &[f64] {
        &self.grid.values
    }

    pub fn len(&self) -> usize {
        self.grid.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.values.is_empty()
    }

    /// Grid nodes in the storage order of every array.
    pub fn nodes(&self) -> Result<PointSet> {
        self.grid.manifold.grid(&self.grid.shape, usize::MAX)
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::input(format!("array has {} values, grid has {}", u.len(), self.len())));
        }
        Ok(())
    }

    pub fn apply_laplacian(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        Ok(self.lat.restrict(&self.lat.laplacian(&self.lat.extend(u))))
    }

    /// `(Δ − V)u`.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        let mut out = self.apply_laplacian(u)?;
        for ((o, v), x) in out.iter_mut().zip(self.potential()).zip(u) {
            *o -= v * x;
        }
        Ok(out)
    }

    /// Grid inner product: cell sums, trapezoid weights on box faces.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.check_len(a)?;
        self.check_len(b)?;
        Ok(self.lat.inner(&self.lat.extend(a), &self.lat.extend(b)))
    }

    pub fn volume(&self) -> f64 {
        self.lat.volume()
    }

    pub fn lp_norm(&self, u: &[f64], p: f64) -> Result<f64> {
        self.check_len(u)?;
        Ok(self.lat.lp(&self.lat.extend(u), p))
    }

    /// `‖du‖_{L^p}` with forward differences.
    pub fn grad_lp_norm(&self, u: &[f64], p: f64) -> Result<f64> {
        self.check_len(u)?;
        Ok(self.lat.lp_field(&self.lat.grad(&self.lat.extend(u)), p))
    }

    /// Weighted mean over the grid.
    pub fn mean(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        Ok(self.lat.mean(&self.lat.extend(u)))
    }

    fn h_ext(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.lat.laplacian(x);
        for ((o, v), xi) in out.iter_mut().zip(&self.v).zip(x) {
            *o -= v * xi;
        }
        out
    }

    /// Preconditioned CG for `(H − σ)x = b` on the periodic lattice; the
    /// preconditioner is `(Δ + mean(−V) − σ)⁻¹` by FFT.
    fn pcg(&self, sigma: f64, b: &[f64], mut x: Vec<f64>, rtol: f64) -> Vec<f64> {
        let pre_shift = -self.lat.mean(&self.v) - sigma;
        let dot = |a: &[f64], c: &[f64]| a.iter().zip(c).map(|(p, q)| p * q).sum::<f64>();
        let apply = |u: &[f64]| {
            let mut hu = self.h_ext(u);
            for (o, ui) in hu.iter_mut().zip(u) {
                *o -= sigma * ui;
            }
            hu
        };
        let bnorm = dot(b, b).sqrt();
        if bnorm == 0.0 {
            return vec![0.0; b.len()];
        }
        let ax = apply(&x);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let mut z = self.lat.solve(&r, pre_shift);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for _ in 0..2000 {
            if dot(&r, &r).sqrt() <= rtol * bnorm {
                break;
            }
            let ap = apply(&p);
            let alpha = rz / dot(&p, &ap);
            for i in 0..x.len() {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            z = self.lat.solve(&r, pre_shift);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..p.len() {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }

    /// Shifted inverse power iteration on the periodic lattice.
    fn eigen_ext(&self, start: Vec<f64>, tol: f64, max_iter: usize) -> Result<(f64, Vec<f64>, f64, usize, Vec<f64>)> {
        // Δ ≥ 0 gives λ₀ ≥ min(−V), so H − σ ≥ 1.
        let sigma = self.v.iter().map(|v| -v).fold(f64::INFINITY, f64::min) - 1.0;
        let mut x = start;
        let mut history = Vec::new();
        for it in 0..=max_iter {
            let hx = self.h_ext(&x);
            let xx = self.lat.inner(&x, &x);
            let lambda = self.lat.inner(&x, &hx) / xx;
            let res: Vec<f64> = hx.iter().zip(&x).map(|(h, xi)| h - lambda * xi).collect();
            let r = (self.lat.inner(&res, &res) / xx).sqrt();
            history.push(r);
            if r <= tol {
                return Ok((lambda, x, r, it, history));
            }
            if it == max_iter {
                break;
            }
            let guess = x.iter().map(|v| v / (lambda - sigma)).collect();
            x = self.pcg(sigma, &x, guess, 1e-13);
            let top = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(top.is_finite() && top > 0.0) {
                return Err(Error::numeric("inverse iteration lost the positive ground state", history));
            }
            x.iter_mut().for_each(|v| *v /= top);
        }
        Err(Error::numeric(
            format!("lowest eigenpair did not reach residual {tol:e} in {max_iter} iterations"),
            history,
        ))
    }

    pub(crate) fn eigen_from(&self, start: Option<&[f64]>, tol: f64, max_iter: usize) -> Result<SchrodingerSolve> {
        if !(tol > 0.0) {
            return Err(Error::input("tolerance must be positive"));
        }
        let x0 = match start {
            Some(s) => {
                self.check_len(s)?;
                self.lat.extend(s)
            }
            None => vec![1.0; self.lat.total],
        };
        let (lambda0, x, residual, iterations, history) = self.eigen_ext(x0, tol, max_iter)?;
        let mut phi = self.lat.restrict(&x);
        let top = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        phi.iter_mut().for_each(|v| *v /= top);
        if phi.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::numeric("ground state is not positive", history));
        }
        Ok(SchrodingerSolve {
            lambda0,
            phi,
            residual,
            iterations,
            history,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchrodingerSolve {
    pub lambda0: f64,
    /// Ground state, positive, maximum 1.
    pub phi: Vec<f64>,
    /// `‖(Δ − V)φ − λ₀φ‖₂ / ‖φ‖₂`.
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Lowest eigenpair of `Δ − V` by shifted inverse power iteration from the
/// constant vector; `λ₀` is the Rayleigh quotient.
pub fn lowest_eigenpair(op: &GridOperator, tol: f64, max_iter: usize) -> Result<SchrodingerSolve> {
    op.eigen_from(None, tol, max_iter)
}
