//! Log-conformal factors `f`, the weight `w = e^{nf}` and its integrals.

mod grid;
mod io;

use std::f64::consts::{E, PI};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{BallSpec, Estimate, Manifold, Point};
use crate::polar;

pub use grid::{GridField, Interpolation};
pub use io::{read_grid, read_grid_csv, write_grid, write_grid_csv, GridManifest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum WeightField {
    Constant {
        c: f64,
    },
    /// `f = (1/n) ln(1 − ½ cos(ℓ x₁))` on a torus.
    Burago {
        ell: u32,
    },
    /// Radial `√ln(R0/d)` singularity at `x0`, optionally capped at level `cap`.
    LogCusp {
        x0: Point,
        r0: f64,
        cap: Option<f64>,
    },
    /// Conformal dilation by `λ` in the stereographic chart from `pole`.
    SphereBubble {
        lambda: f64,
        pole: Point,
    },
    Grid {
        grid: Arc<GridField>,
        order: Interpolation,
    },
    Scaled {
        base: Box<WeightField>,
        shift: f64,
    },
    Sum {
        parts: Vec<WeightField>,
    },
    /// A torus field read on a box (or torus) by wrapping coordinates into
    /// `torus`; used on periodic covers.
    Periodic {
        base: Box<WeightField>,
        torus: Manifold,
    },
}

/// Value, `g₀`-gradient (ambient vector on the sphere) and geometer's
/// Laplacian `Δf = −Σ∂²f` of `f` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub f: f64,
    pub grad: Vec<f64>,
    pub lap: f64,
}

impl Jet {
    pub fn grad_sq(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum()
    }
}

/// Quintic Hermite blend on `s ∈ [0,1]` from (value, slope, curvature) at
/// 0 to zero data at 1; slopes are per unit `s`.
fn hermite_to_zero(s: f64, y: f64, dy: f64, ddy: f64) -> [f64; 3] {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h0 = [
        1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5,
        -30.0 * s2 + 60.0 * s3 - 30.0 * s4,
        -60.0 * s + 180.0 * s2 - 120.0 * s3,
    ];
    let h1 = [
        s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5,
        1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4,
        -36.0 * s + 96.0 * s2 - 60.0 * s3,
    ];
    let h2 = [
        0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5),
        0.5 * (2.0 * s - 9.0 * s2 + 12.0 * s3 - 5.0 * s4),
        0.5 * (2.0 - 18.0 * s + 36.0 * s2 - 20.0 * s3),
    ];
    [0, 1, 2].map(|k| y * h0[k] + dy * h1[k] + ddy * h2[k])
}

/// Uncapped cusp profile `g(d)` and its first two derivatives in `d`.
pub fn cusp_profile(d: f64, r0: f64) -> [f64; 3] {
    let a = r0 / E;
    let b = 2.0 * r0;
    if d <= 0.0 {
        return [f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY];
    }
    if d <= a {
        let l = (r0 / d).ln();
        let sl = l.sqrt();
        return [sl, -1.0 / (2.0 * d * sl), 1.0 / (2.0 * d * d * sl) - 1.0 / (4.0 * d * d * l * sl)];
    }
    if d >= b {
        return [0.0, 0.0, 0.0];
    }
    let h = b - a;
    let dy = -1.0 / (2.0 * a);
    let ddy = 1.0 / (4.0 * a * a);
    let [p, ps, pss] = hermite_to_zero((d - a) / h, 1.0, dy * h, ddy * h * h);
    [p, ps / h, pss / (h * h)]
}

/// C² saturation at level `k`: identity below `k − ½`, constant `k` above
/// `k + ½`, with slope `1 − smoothstep` in between.
pub fn saturate(t: f64, k: f64) -> [f64; 3] {
    let a = k - 0.5;
    if t <= a {
        return [t, 1.0, 0.0];
    }
    if t >= a + 1.0 {
        return [k, 0.0, 0.0];
    }
    let u = t - a;
    [a + u - u.powi(3) + 0.5 * u.powi(4), 1.0 - 3.0 * u * u + 2.0 * u.powi(3), -6.0 * u + 6.0 * u * u]
}

fn cusp_radial(d: f64, r0: f64, cap: Option<f64>) -> [f64; 3] {
    match cap {
        None => cusp_profile(d, r0),
        Some(k) => {
            if d <= 0.0 {
                return [k, 0.0, 0.0];
            }
            let [g, g1, g2] = cusp_profile(d, r0);
            let [s, s1, s2] = saturate(g, k);
            if s1 == 0.0 {
                return [s, 0.0, 0.0];
            }
            [s, s1 * g1, s2 * g1 * g1 + s1 * g2]
        }
    }
}

// Bubble profile as a function of the angle θ from the pole:
// e^f = λ / (A + B cos θ).
fn bubble_radial(theta: f64, lambda: f64) -> [f64; 3] {
    let a = 0.5 * (1.0 + lambda * lambda);
    let b = 0.5 * (lambda * lambda - 1.0);
    let (s, c) = theta.sin_cos();
    let den = a + b * c;
    [lambda.ln() - den.ln(), b * s / den, (a * b * c + b * b) / (den * den)]
}

impl WeightField {
    pub fn constant(c: f64) -> Self {
        WeightField::Constant { c }
    }

    pub fn burago(ell: u32) -> Self {
        WeightField::Burago { ell }
    }

    pub fn log_cusp(x0: impl Into<Point>, r0: f64, cap: Option<f64>) -> Self {
        WeightField::LogCusp {
            x0: x0.into(),
            r0,
            cap,
        }
    }

    pub fn sphere_bubble(lambda: f64, pole: impl Into<Point>) -> Self {
        WeightField::SphereBubble {
            lambda,
            pole: pole.into(),
        }
    }

    pub fn scaled(self, shift: f64) -> Self {
        WeightField::Scaled {
            base: Box::new(self),
            shift,
        }
    }

    /// Checks the field is defined on `m`.
    pub fn validate(&self, m: &Manifold) -> Result<()> {
        match self {
            WeightField::Constant { c } => {
                if !c.is_finite() {
                    return Err(Error::input("constant field must be finite"));
                }
            }
            WeightField::Burago { ell } => {
                if !matches!(m, Manifold::Torus { .. }) {
                    return Err(Error::input("Burago field is defined only on a torus"));
                }
                if *ell == 0 {
                    return Err(Error::input("Burago frequency must be a positive integer"));
                }
            }
            WeightField::LogCusp { x0, r0, cap } => {
                m.check_point(x0)?;
                if !(r0.is_finite() && *r0 > 0.0) {
                    return Err(Error::input("cusp radius must be positive"));
                }
                if let Some(k) = cap {
                    if !(k.is_finite() && *k > 0.5) {
                        return Err(Error::input("cusp cap must exceed 1/2"));
                    }
                }
            }
            WeightField::SphereBubble { lambda, pole } => {
                if !matches!(m, Manifold::Sphere { .. }) {
                    return Err(Error::input("sphere bubble is defined only on a sphere"));
                }
                if !(lambda.is_finite() && *lambda > 0.0) {
                    return Err(Error::input("bubble λ must be positive"));
                }
                m.check_point(pole)?;
            }
            WeightField::Grid { grid, .. } => {
                if grid.manifold != *m {
                    return Err(Error::input("grid field lives on a different manifold"));
                }
            }
            WeightField::Scaled { base, shift } => {
                if !shift.is_finite() {
                    return Err(Error::input("shift must be finite"));
                }
                base.validate(m)?;
            }
            WeightField::Sum { parts } => {
                for p in parts {
                    p.validate(m)?;
                }
            }
            WeightField::Periodic { base, torus } => {
                if !matches!(torus, Manifold::Torus { .. }) || torus.dim() != m.dim() || !m.is_flat() {
                    return Err(Error::input("periodic lift needs a flat manifold and a torus of equal dimension"));
                }
                base.validate(torus)?;
            }
        }
        Ok(())
    }

    /// Validated evaluation of `f`; `+∞` on the singular set.
    pub fn eval_f(&self, m: &Manifold, x: &[f64]) -> Result<f64> {
        self.validate(m)?;
        m.check_point(x)?;
        Ok(self.f(m, x))
    }

    /// Unchecked evaluation of `f`.
    pub fn f(&self, m: &Manifold, x: &[f64]) -> f64 {
        match self {
            WeightField::Constant { c } => *c,
            WeightField::Burago { ell } => {
                (1.0 - 0.5 * (*ell as f64 * x[0]).cos()).ln() / m.dim() as f64
            }
            WeightField::LogCusp { x0, r0, cap } => cusp_radial(m.d0(x0, x), *r0, *cap)[0],
            WeightField::SphereBubble { lambda, pole } => {
                let theta = m.d0(pole, x) / sphere_radius(m);
                bubble_radial(theta, *lambda)[0]
            }
            WeightField::Grid { grid, order } => grid.interpolate(x, *order),
            WeightField::Scaled { base, shift } => base.f(m, x) + shift,
            WeightField::Sum { parts } => parts.iter().map(|p| p.f(m, x)).sum(),
            WeightField::Periodic { base, torus } => {
                let y = torus.canonical(x);
                base.f(torus, &y)
            }
        }
    }

    /// `w = e^{nf}`.
    pub fn w(&self, m: &Manifold, x: &[f64]) -> f64 {
        (m.dim() as f64 * self.f(m, x)).exp()
    }

    /// `u = e^{(n−2)f/2}`.
    pub fn u(&self, m: &Manifold, x: &[f64]) -> f64 {
        (0.5 * (m.dim() as f64 - 2.0) * self.f(m, x)).exp()
    }

    /// Whether [`WeightField::jet`] is available (otherwise derivatives
    /// come from finite differences).
    pub fn has_exact_derivatives(&self) -> bool {
        match self {
            WeightField::Grid { .. } => false,
            WeightField::Scaled { base, .. } | WeightField::Periodic { base, .. } => base.has_exact_derivatives(),
            WeightField::Sum { parts } => parts.iter().all(|p| p.has_exact_derivatives()),
            _ => true,
        }
    }

    /// Exact value, gradient and Laplacian. `None` for grid fields;
    /// `Err` on the singular set.
    pub fn jet(&self, m: &Manifold, x: &[f64]) -> Option<Result<Jet>> {
        let n = m.dim();
        let amb = m.ambient_dim();
        let out = match self {
            WeightField::Constant { c } => Ok(Jet {
                f: *c,
                grad: vec![0.0; amb],
                lap: 0.0,
            }),
            WeightField::Burago { ell } => {
                let l = *ell as f64;
                let (s, c) = (l * x[0]).sin_cos();
                let den = 1.0 - 0.5 * c;
                let nf = n as f64;
                let mut grad = vec![0.0; amb];
                grad[0] = 0.5 * l * s / (den * nf);
                let f2 = l * l * (2.0 * c - 1.0) / (4.0 * nf * den * den);
                Ok(Jet {
                    f: den.ln() / nf,
                    grad,
                    lap: -f2,
                })
            }
            WeightField::LogCusp { x0, r0, cap } => radial_jet(m, x0, x, |d| cusp_radial(d, *r0, *cap)),
            WeightField::SphereBubble { lambda, pole } => {
                let radius = sphere_radius(m);
                radial_jet(m, pole, x, |d| {
                    let [f, f1, f2] = bubble_radial(d / radius, *lambda);
                    [f, f1 / radius, f2 / (radius * radius)]
                })
            }
            WeightField::Grid { .. } => return None,
            WeightField::Scaled { base, shift } => match base.jet(m, x)? {
                Ok(mut j) => {
                    j.f += shift;
                    Ok(j)
                }
                Err(e) => Err(e),
            },
            WeightField::Sum { parts } => {
                let mut acc = Jet {
                    f: 0.0,
                    grad: vec![0.0; amb],
                    lap: 0.0,
                };
                for p in parts {
                    match p.jet(m, x)? {
                        Ok(j) => {
                            acc.f += j.f;
                            acc.lap += j.lap;
                            for (a, g) in acc.grad.iter_mut().zip(&j.grad) {
                                *a += g;
                            }
                        }
                        Err(e) => return Some(Err(e)),
                    }
                }
                Ok(acc)
            }
            WeightField::Periodic { base, torus } => {
                let y = torus.canonical(x);
                return base.jet(torus, &y);
            }
        };
        Some(out)
    }

    /// Strips outer [`WeightField::Scaled`] layers, returning the base field
    /// and the accumulated shift. Integrals of `e^{pf}` are computed on the
    /// base and rescaled by `e^{p·shift}`, which makes scale invariance of
    /// every ratio exact up to one rounding.
    pub fn peel(&self) -> (&WeightField, f64) {
        let mut field = self;
        let mut shift = 0.0;
        while let WeightField::Scaled { base, shift: c } = field {
            shift += c;
            field = base;
        }
        (field, shift)
    }

    /// Point where the weight concentrates or is singular, used as the pole
    /// of polar quadrature.
    pub fn focus(&self, m: &Manifold) -> Option<Point> {
        match self {
            WeightField::LogCusp { x0, .. } => Some(x0.clone()),
            WeightField::SphereBubble { lambda, pole } => {
                if *lambda >= 1.0 {
                    Some(Point(pole.iter().map(|v| -v).collect()))
                } else {
                    Some(pole.clone())
                }
            }
            WeightField::Scaled { base, .. } => base.focus(m),
            WeightField::Sum { parts } => {
                let foci: Vec<Point> = parts.iter().filter_map(|p| p.focus(m)).collect();
                if foci.len() == 1 {
                    foci.into_iter().next()
                } else {
                    None
                }
            }
            _ => None,
        }
    }

    /// Whether `f` is smooth enough for the periodic midpoint rule over the
    /// whole manifold (no focus, no singularity).
    fn is_smooth_periodic(&self, m: &Manifold) -> bool {
        matches!(m, Manifold::Torus { .. }) && self.focus(m).is_none()
    }

    /// `μ_f(B) = ∫_B e^{nf} dμ₀` with its standard error; `budget` is the
    /// number of random polar directions.
    pub fn mu_f_ball(&self, m: &Manifold, b: &BallSpec, budget: usize, seed: u64) -> Result<Estimate> {
        let n = m.dim() as f64;
        Ok(self.ball_integrals(m, b, &[n], budget, seed)?[0])
    }

    /// `∫_B e^{p f} dμ₀` for each exponent, sharing one set of directions.
    pub fn ball_integrals(
        &self,
        m: &Manifold,
        b: &BallSpec,
        exponents: &[f64],
        budget: usize,
        seed: u64,
    ) -> Result<Vec<Estimate>> {
        self.validate(m)?;
        check_budget(budget)?;
        check_exponents(exponents)?;
        let (base, shift) = self.peel();
        let pole = base.focus(m);
        let raw = polar::integrate_ball(m, b, pole.as_deref(), budget, seed, exponents.len(), |x, out| {
            let f = base.f(m, x);
            for (o, p) in out.iter_mut().zip(exponents) {
                *o = (p * f).exp();
            }
        })?;
        Ok(rescale(raw, exponents, shift))
    }

    /// [`WeightField::ball_integrals`] with deterministic angular
    /// quadrature in dimensions 2 and 3, random directions beyond.
    pub fn ball_integrals_angular(
        &self,
        m: &Manifold,
        b: &BallSpec,
        exponents: &[f64],
        budget: usize,
        seed: u64,
    ) -> Result<Vec<Estimate>> {
        if !(2..=3).contains(&m.dim()) {
            return self.ball_integrals(m, b, exponents, budget, seed);
        }
        self.validate(m)?;
        check_exponents(exponents)?;
        let (base, shift) = self.peel();
        let pole = base.focus(m);
        let raw = polar::integrate_ball_angular(m, b, pole.as_deref(), exponents.len(), |x, out| {
            let f = base.f(m, x);
            for (o, p) in out.iter_mut().zip(exponents) {
                *o = (p * f).exp();
            }
        })?;
        Ok(rescale(raw, exponents, shift))
    }

    /// Generic ball quadrature of any functional of `(x, f(x))`.
    pub fn ball_quadrature<G>(
        &self,
        m: &Manifold,
        b: &BallSpec,
        k: usize,
        budget: usize,
        seed: u64,
        g: G,
    ) -> Result<Vec<Estimate>>
    where
        G: Fn(&[f64], f64, &mut [f64]) + Sync,
    {
        self.validate(m)?;
        check_budget(budget)?;
        let pole = self.focus(m);
        polar::integrate_ball(m, b, pole.as_deref(), budget, seed, k, |x, out| g(x, self.f(m, x), out))
    }

    pub fn total_mass(&self, m: &Manifold, budget: usize, seed: u64) -> Result<Estimate> {
        let n = m.dim() as f64;
        Ok(self.integrability_profile(m, &[n], budget, seed)?[0])
    }

    /// `∫_M e^{p f} dμ₀` for each exponent `p`.
    pub fn integrability_profile(&self, m: &Manifold, exponents: &[f64], budget: usize, seed: u64) -> Result<Vec<Estimate>> {
        self.validate(m)?;
        check_budget(budget)?;
        check_exponents(exponents)?;
        let k = exponents.len();
        let (base, shift) = self.peel();
        let g = |x: &[f64], out: &mut [f64]| {
            let f = base.f(m, x);
            for (o, p) in out.iter_mut().zip(exponents) {
                *o = (p * f).exp();
            }
        };
        let raw = if base.is_smooth_periodic(m) {
            polar::integrate_torus_lattice(m, budget, k, g)?
        } else {
            let pole = base.focus(m);
            polar::integrate_manifold(m, pole.as_deref(), budget, seed, k, g)?
        };
        Ok(rescale(raw, exponents, shift))
    }
}

fn rescale(raw: Vec<Estimate>, exponents: &[f64], shift: f64) -> Vec<Estimate> {
    if shift == 0.0 {
        return raw;
    }
    raw.into_iter()
        .zip(exponents)
        .map(|(e, p)| {
            let s = (p * shift).exp();
            Estimate {
                value: s * e.value,
                stderr: s * e.stderr,
            }
        })
        .collect()
}

fn check_budget(budget: usize) -> Result<()> {
    if budget < 100 {
        return Err(Error::input("quadrature budget must be at least 100"));
    }
    Ok(())
}

fn check_exponents(exponents: &[f64]) -> Result<()> {
    if exponents.iter().any(|p| !p.is_finite()) {
        return Err(Error::input("exponents must be finite"));
    }
    Ok(())
}

fn sphere_radius(m: &Manifold) -> f64 {
    match m {
        Manifold::Sphere { radius, .. } => *radius,
        _ => 1.0,
    }
}

// Jet of a radial function F(d), d = d₀(center, x), given (F, F', F'').
fn radial_jet(m: &Manifold, center: &[f64], x: &[f64], profile: impl Fn(f64) -> [f64; 3]) -> Result<Jet> {
    let n = m.dim() as f64;
    let amb = m.ambient_dim();
    let d = m.d0(center, x);
    let [f, f1, f2] = profile(d);
    if !f.is_finite() {
        return Err(Error::Evaluation("field is singular at this point".into()));
    }
    let mut grad = vec![0.0; amb];
    let lap;
    match m {
        Manifold::Sphere { radius, .. } => {
            let theta = d / radius;
            if theta < 1e-12 || PI - theta < 1e-12 {
                // Smooth radial functions have F'(0) = 0 at the poles; the
                // Laplacian tends to −n F''.
                lap = -n * f2;
            } else {
                let c = theta.cos();
                let s = theta.sin();
                // Unit tangent at x pointing away from the centre.
                for i in 0..amb {
                    grad[i] = f1 * (c * x[i] - center[i]) / s;
                }
                lap = -(f2 + (n - 1.0) * f1 * c / (s * radius));
            }
        }
        _ => {
            if d < 1e-300 {
                lap = -n * f2;
            } else {
                let mut delta = vec![0.0; amb];
                m.displacement(center, x, &mut delta);
                for i in 0..amb {
                    grad[i] = f1 * delta[i] / d;
                }
                lap = -(f2 + (n - 1.0) * f1 / d);
            }
        }
    }
    Ok(Jet { f, grad, lap })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cusp_profile_is_c2_at_the_joins() {
        let r0 = 0.7;
        for d in [r0 / E, 2.0 * r0] {
            let lo = cusp_profile(d * (1.0 - 1e-9), r0);
            let hi = cusp_profile(d * (1.0 + 1e-9), r0);
            for k in 0..3 {
                assert!((lo[k] - hi[k]).abs() < 1e-6 * (1.0 + lo[k].abs()), "{d} {k} {lo:?} {hi:?}");
            }
        }
        assert!((cusp_profile(r0 / E, r0)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cusp_profile_derivatives_match_differences() {
        let r0 = 1.3;
        for d in [0.05, 0.3, 0.6, 1.0, 2.0] {
            let h = 1e-5;
            let p = cusp_profile(d, r0);
            let fp = cusp_profile(d + h, r0);
            let fm = cusp_profile(d - h, r0);
            assert!(((fp[0] - fm[0]) / (2.0 * h) - p[1]).abs() < 1e-6 * (1.0 + p[1].abs()));
            assert!(((fp[1] - fm[1]) / (2.0 * h) - p[2]).abs() < 1e-5 * (1.0 + p[2].abs()));
        }
    }

    #[test]
    fn saturation_is_c2_and_plateaus() {
        for k in [2.0, 4.0] {
            let a = saturate(k - 0.5, k);
            let b = saturate(k + 0.5, k);
            assert_eq!(a, [k - 0.5, 1.0, 0.0]);
            assert!((b[0] - k).abs() < 1e-15 && b[1].abs() < 1e-15 && b[2].abs() < 1e-15);
            assert!(saturate(k + 3.0, k)[0] == k);
        }
    }

    #[test]
    fn bubble_values_at_poles() {
        let m = Manifold::sphere(3, 1.0).unwrap();
        let n = vec![0.0, 0.0, 0.0, 1.0];
        let s = vec![0.0, 0.0, 0.0, -1.0];
        let f = WeightField::sphere_bubble(10.0, n.clone());
        assert!((f.f(&m, &n) + 10f64.ln()).abs() < 1e-14);
        assert!((f.f(&m, &s) - 10f64.ln()).abs() < 1e-14);
        let id = WeightField::sphere_bubble(1.0, n);
        assert_eq!(id.f(&m, &[1.0, 0.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn bubble_matches_stereographic_formula() {
        let m = Manifold::sphere(2, 1.0).unwrap();
        let pole = [0.0, 0.0, 1.0];
        let lambda: f64 = 3.5;
        let f = WeightField::sphere_bubble(lambda, pole.to_vec());
        for th in [0.3f64, 1.0, 2.0, 3.0] {
            let x = [th.sin(), 0.0, th.cos()];
            // Stereographic projection from the pole.
            let sig2 = (x[0] / (1.0 - x[2])).powi(2);
            let expected = (lambda * (1.0 + sig2)).ln() - (1.0 + lambda * lambda * sig2).ln();
            assert!((f.f(&m, &x) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn burago_weight_at_zero() {
        let m = Manifold::flat_torus(2).unwrap();
        let f = WeightField::burago(1);
        assert!((f.w(&m, &[0.0, 1.234]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn validation_rejects_mismatches() {
        let s = Manifold::sphere(2, 1.0).unwrap();
        let t = Manifold::flat_torus(2).unwrap();
        assert!(WeightField::burago(1).eval_f(&s, &[0.0, 0.0, 1.0]).is_err());
        assert!(WeightField::sphere_bubble(2.0, vec![0.0, 0.0, 1.0]).eval_f(&t, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn cusp_singular_point_is_infinite() {
        let t = Manifold::flat_torus(2).unwrap();
        let f = WeightField::log_cusp(vec![1.0, 1.0], 0.5, None);
        assert_eq!(f.eval_f(&t, &[1.0, 1.0]).unwrap(), f64::INFINITY);
        assert!(f.jet(&t, &[1.0, 1.0]).unwrap().is_err());
        let capped = WeightField::log_cusp(vec![1.0, 1.0], 0.5, Some(3.0));
        assert_eq!(capped.eval_f(&t, &[1.0, 1.0]).unwrap(), 3.0);
    }

    fn fd_jet(field: &WeightField, m: &Manifold, x: &[f64], h: f64) -> (Vec<f64>, f64) {
        let n = x.len();
        let f0 = field.f(m, x);
        let mut grad = vec![0.0; n];
        let mut lap = 0.0;
        for i in 0..n {
            let mut p = x.to_vec();
            let mut q = x.to_vec();
            p[i] += h;
            q[i] -= h;
            let fp = field.f(m, &p);
            let fq = field.f(m, &q);
            grad[i] = (fp - fq) / (2.0 * h);
            lap -= (fp - 2.0 * f0 + fq) / (h * h);
        }
        (grad, lap)
    }

    #[test]
    fn flat_jets_match_differences() {
        let t = Manifold::flat_torus(3).unwrap();
        let fields = [
            WeightField::burago(2),
            WeightField::log_cusp(vec![1.0, 2.0, 3.0], 1.5, None),
            WeightField::log_cusp(vec![1.0, 2.0, 3.0], 1.5, Some(1.2)),
            WeightField::Sum {
                parts: vec![WeightField::burago(1), WeightField::constant(0.3)],
            },
        ];
        for field in &fields {
            for x in [[1.2, 2.3, 3.1], [0.4, 2.0, 2.5], [1.05, 1.9, 3.0]] {
                let j = field.jet(&t, &x).unwrap().unwrap();
                let (g, l) = fd_jet(field, &t, &x, 1e-4);
                for i in 0..3 {
                    assert!((g[i] - j.grad[i]).abs() < 1e-6 * (1.0 + g[i].abs()), "{field:?} {x:?}");
                }
                assert!((l - j.lap).abs() < 1e-4 * (1.0 + l.abs()), "{field:?} {x:?}: {l} vs {}", j.lap);
            }
        }
    }

    #[test]
    fn sphere_jets_match_ambient_differences() {
        // Differences of the 0-homogeneous extension F(y/|y|): its flat
        // Laplacian at |y| = 1 equals the spherical one (with our sign).
        let m = Manifold::sphere(3, 1.0).unwrap();
        let field = WeightField::sphere_bubble(2.5, vec![0.0, 0.0, 0.0, 1.0]);
        let ext = |y: &[f64]| {
            let r = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            let u: Vec<f64> = y.iter().map(|v| v / r).collect();
            field.f(&m, &u)
        };
        let x = {
            let v = [0.3, -0.4, 0.5, 0.2f64];
            let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.map(|a| a / r)
        };
        let h = 1e-4;
        let f0 = ext(&x);
        let mut lap = 0.0;
        let mut grad = [0.0; 4];
        for i in 0..4 {
            let mut p = x;
            let mut q = x;
            p[i] += h;
            q[i] -= h;
            grad[i] = (ext(&p) - ext(&q)) / (2.0 * h);
            lap -= (ext(&p) - 2.0 * f0 + ext(&q)) / (h * h);
        }
        let j = field.jet(&m, &x).unwrap().unwrap();
        for i in 0..4 {
            assert!((grad[i] - j.grad[i]).abs() < 1e-6);
        }
        assert!((lap - j.lap).abs() < 1e-4, "{lap} {}", j.lap);
    }
}
