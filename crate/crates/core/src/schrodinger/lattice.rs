use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::manifold::Manifold;

/// Periodic lattice carrying every grid computation. A box axis of `N`
/// nodes is evenly reflected into a periodic axis of `2(N−1)` nodes: the
/// periodic stencil then restricts to the mirror (Neumann) stencil, and
/// sums over the extension are `2^k` times trapezoid sums over the box.
pub(crate) struct Lattice {
    /// Shape of the user grid.
    pub orig: Vec<usize>,
    /// Shape of the periodic lattice.
    pub shape: Vec<usize>,
    pub steps: Vec<f64>,
    pub reflected: Vec<bool>,
    /// `2^k` for `k` reflected axes.
    pub fold: f64,
    pub cell: f64,
    pub total: usize,
    strides: Vec<usize>,
    symbol: Vec<f64>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for Lattice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Lattice").field("orig", &self.orig).field("shape", &self.shape).finish()
    }
}

impl Lattice {
    pub fn new(m: &Manifold, orig: &[usize]) -> Result<Self> {
        if orig.len() != m.dim() {
            return Err(Error::input("grid shape length must equal the dimension"));
        }
        if orig.iter().any(|&s| s < 8) {
            return Err(Error::input("Schrödinger grids need at least 8 nodes per axis"));
        }
        let (shape, steps, reflected): (Vec<usize>, Vec<f64>, Vec<bool>) = match m {
            Manifold::Torus { periods } => (
                orig.to_vec(),
                periods.iter().zip(orig).map(|(p, s)| p / *s as f64).collect(),
                vec![false; orig.len()],
            ),
            Manifold::Box { extents } => (
                orig.iter().map(|s| 2 * (s - 1)).collect(),
                extents.iter().zip(orig).map(|([a, b], s)| (b - a) / (*s - 1) as f64).collect(),
                vec![true; orig.len()],
            ),
            Manifold::Sphere { .. } => return Err(Error::Unsupported("Schrödinger grids live on tori and boxes".into())),
        };
        let n = shape.len();
        let total: usize = shape.iter().product();
        let mut strides = vec![1; n];
        for a in (0..n.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * shape[a + 1];
        }
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&s| planner.plan_fft_forward(s)).collect();
        let inverse = shape.iter().map(|&s| planner.plan_fft_inverse(s)).collect();
        let axis_symbol: Vec<Vec<f64>> = shape
            .iter()
            .zip(&steps)
            .map(|(&s, h)| (0..s).map(|k| (2.0 - 2.0 * (2.0 * PI * k as f64 / s as f64).cos()) / (h * h)).collect())
            .collect();
        let symbol = (0..total)
            .map(|k| (0..n).map(|a| axis_symbol[a][(k / strides[a]) % shape[a]]).sum())
            .collect();
        Ok(Self {
            orig: orig.to_vec(),
            fold: 2f64.powi(reflected.iter().filter(|r| **r).count() as i32),
            cell: steps.iter().product(),
            shape,
            steps,
            reflected,
            total,
            strides,
            symbol,
            forward,
            inverse,
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn orig_total(&self) -> usize {
        self.orig.iter().product()
    }

    /// Periodic index → user-grid index.
    pub fn fold_index(&self, k: usize) -> usize {
        let mut j = 0;
        for a in 0..self.dim() {
            let mut i = (k / self.strides[a]) % self.shape[a];
            if self.reflected[a] && i >= self.orig[a] {
                i = self.shape[a] - i;
            }
            j = j * self.orig[a] + i;
        }
        j
    }

    pub fn extend(&self, u: &[f64]) -> Vec<f64> {
        if !self.reflected.iter().any(|r| *r) {
            return u.to_vec();
        }
        (0..self.total).map(|k| u[self.fold_index(k)]).collect()
    }

    /// Restriction of a periodic array to the user grid (the first `N`
    /// nodes of each reflected axis).
    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        if !self.reflected.iter().any(|r| *r) {
            return u.to_vec();
        }
        let mut out = vec![0.0; self.orig_total()];
        for (k, v) in u.iter().enumerate() {
            let inside = (0..self.dim()).all(|a| (k / self.strides[a]) % self.shape[a] < self.orig[a]);
            if inside {
                out[self.fold_index(k)] = *v;
            }
        }
        out
    }

    fn neighbour(&self, k: usize, a: usize, up: bool) -> usize {
        let s = self.strides[a];
        let i = (k / s) % self.shape[a];
        match (up, i) {
            (true, i) if i + 1 == self.shape[a] => k - i * s,
            (true, _) => k + s,
            (false, 0) => k + (self.shape[a] - 1) * s,
            (false, _) => k - s,
        }
    }

    /// Geometer's Laplacian `Σ_a (2u_i − u_{i+e_a} − u_{i−e_a})/h_a²`.
    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.total];
        for a in 0..self.dim() {
            let h2 = self.steps[a] * self.steps[a];
            for (k, o) in out.iter_mut().enumerate() {
                *o += (2.0 * u[k] - u[self.neighbour(k, a, true)] - u[self.neighbour(k, a, false)]) / h2;
            }
        }
        out
    }

    /// Forward differences, one array per axis.
    pub fn grad(&self, u: &[f64]) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|a| (0..self.total).map(|k| (u[self.neighbour(k, a, true)] - u[k]) / self.steps[a]).collect())
            .collect()
    }

    /// Adjoint of [`Lattice::grad`]; `grad_adjoint(grad(u)) = laplacian(u)`.
    pub fn grad_adjoint(&self, y: &[Vec<f64>]) -> Vec<f64> {
        let mut out = vec![0.0; self.total];
        for (a, ya) in y.iter().enumerate() {
            for (k, o) in out.iter_mut().enumerate() {
                *o += (ya[self.neighbour(k, a, false)] - ya[k]) / self.steps[a];
            }
        }
        out
    }

    /// Discrete carré du champ `Σ_a Σ_± (e^δ − 1 − δ)/h_a²` with
    /// `δ = u_{i±e_a} − u_i`, so that `Δe^u = e^u (Δu − Q(u))` holds exactly
    /// on the lattice. It is `|du|² + O(h²)`.
    pub fn carre(&self, u: &[f64]) -> Vec<f64> {
        let g = |d: f64| {
            if d.abs() < 1e-3 {
                d * d * (0.5 + d * (1.0 / 6.0 + d * (1.0 / 24.0 + d / 120.0)))
            } else {
                d.exp_m1() - d
            }
        };
        let mut out = vec![0.0; self.total];
        for a in 0..self.dim() {
            let h2 = self.steps[a] * self.steps[a];
            for (k, o) in out.iter_mut().enumerate() {
                let up = u[self.neighbour(k, a, true)] - u[k];
                let down = u[self.neighbour(k, a, false)] - u[k];
                *o += (g(up) + g(down)) / h2;
            }
        }
        out
    }

    pub fn mean(&self, u: &[f64]) -> f64 {
        u.iter().sum::<f64>() / self.total as f64
    }

    /// Cell-sum inner product, normalized to the user grid.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * self.cell / self.fold
    }

    pub fn volume(&self) -> f64 {
        self.total as f64 * self.cell / self.fold
    }

    pub fn lp(&self, u: &[f64], p: f64) -> f64 {
        let s: f64 = u.iter().map(|v| v.abs().powf(p)).sum();
        (s * self.cell / self.fold).powf(1.0 / p)
    }

    /// `L^p` norm of the pointwise Euclidean length of a vector field.
    pub fn lp_field(&self, y: &[Vec<f64>], p: f64) -> f64 {
        let s: f64 = (0..self.total)
            .map(|k| y.iter().map(|c| c[k] * c[k]).sum::<f64>().sqrt().powf(p))
            .sum();
        (s * self.cell / self.fold).powf(1.0 / p)
    }

    fn transform(&self, buf: &mut [Complex<f64>], plans: &[Arc<dyn Fft<f64>>]) {
        let mut line = Vec::new();
        for (a, plan) in plans.iter().enumerate() {
            let (s, len) = (self.strides[a], self.shape[a]);
            line.resize(len, Complex::new(0.0, 0.0));
            for start in 0..self.total {
                if (start / s) % len != 0 {
                    continue;
                }
                for i in 0..len {
                    line[i] = buf[start + i * s];
                }
                plan.process(&mut line);
                for i in 0..len {
                    buf[start + i * s] = line[i];
                }
            }
        }
    }

    /// `(Δ + shift)⁻¹ f`. With `shift = 0` the zero mode is dropped, giving
    /// the mean-zero solution of `Δu = f − mean f`.
    pub fn solve(&self, f: &[f64], shift: f64) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v, 0.0)).collect();
        self.transform(&mut buf, &self.forward);
        for (b, s) in buf.iter_mut().zip(&self.symbol) {
            let d = s + shift;
            *b = if d == 0.0 { Complex::new(0.0, 0.0) } else { *b / d };
        }
        self.transform(&mut buf, &self.inverse);
        let scale = 1.0 / self.total as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }

}
