//! Scalar curvature of `g_f = e^{2f} g₀` through the Yamabe identity
//!
//! `scal_f = e^{-2f} (scal₀ + 2(n−1) Δf − (n−1)(n−2) |∇f|²)`,
//!
//! with the geometer's Laplacian `Δ = −Σ∂²`. For `n ≥ 3` this is
//! `e^{-2f}(scal₀ + 4(n−1)/(n−2) · u⁻¹Δu)` with `u = e^{(n−2)f/2}`; for
//! `n = 2` it reduces to the Gauss-curvature formula `e^{-2f}(scal₀ + 2Δf)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{BallSpec, Estimate, Manifold, Point, PointSet};
use crate::quad;
use crate::weight::{Interpolation, Jet, WeightField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DerivativeMethod {
    /// Exact derivatives when the field has them, else central differences
    /// with a default step.
    Auto,
    Exact,
    FiniteDifference { h: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub point: Point,
    pub scal: f64,
    pub method: DerivativeMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PinchingReport {
    pub r0: f64,
    pub centers: usize,
    /// `sup_x (∫_{B(x,R0)} (scal₊)^{n/2} dμ_f)^{2/n}`.
    pub sup_pos: f64,
    /// Same with `|scal|`.
    pub sup_abs: f64,
    /// `α(n,2)`, absent for `n = 2`.
    pub alpha_n2: Option<f64>,
    /// `sup_x ∫_{B(x,R0)} |scal|^{n/2} dμ_f`.
    pub lambda_margin: f64,
    pub lambda0: Option<f64>,
    /// `sup_pos < α(n,2)`.
    pub below_alpha: Option<bool>,
    /// `lambda_margin < Λ₀`.
    pub below_lambda0: Option<bool>,
    pub argmax_pos: usize,
    pub budget: usize,
    pub seed: u64,
}

/// Default central-difference step for analytic fields, near the optimum
/// `ε^{1/4}` for second differences of O(1) functions.
pub const DEFAULT_FD_STEP: f64 = 1e-4;

/// Sharp `L^{n/2}` total scalar curvature of the round unit `Sⁿ`:
/// `n(n−1) vol(Sⁿ)^{2/n}`.
pub fn alpha_n2(n: usize) -> Result<f64> {
    if n < 3 {
        return Err(Error::input("α(n,2) needs n ≥ 3"));
    }
    let nf = n as f64;
    Ok(nf * (nf - 1.0) * quad::sphere_area(n).powf(2.0 / nf))
}

/// `scal_f` from a jet of `f`.
pub fn scal_from_jet(m: &Manifold, jet: &Jet) -> f64 {
    let n = m.dim() as f64;
    (-2.0 * jet.f).exp() * (m.scal0() + 2.0 * (n - 1.0) * jet.lap - (n - 1.0) * (n - 2.0) * jet.grad_sq())
}

/// Jet of `f` by central differences. On the sphere the differences act on
/// the 0-homogeneous extension `F(y/|y|)`, whose flat gradient and
/// Laplacian at `|y| = 1` are the intrinsic ones (scaled by `1/R`, `1/R²`).
pub fn fd_jet(m: &Manifold, field: &WeightField, x: &[f64], h: f64) -> Result<Jet> {
    let amb = m.ambient_dim();
    let eval = |y: &[f64]| -> f64 {
        let mut v = y.to_vec();
        m.canonicalize(&mut v);
        field.f(m, &v)
    };
    let f0 = eval(x);
    let mut grad = vec![0.0; amb];
    let mut lap = 0.0;
    let mut p = x.to_vec();
    for i in 0..amb {
        p[i] = x[i] + h;
        let fp = eval(&p);
        p[i] = x[i] - h;
        let fm = eval(&p);
        p[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
        lap -= (fp - 2.0 * f0 + fm) / (h * h);
    }
    if let Manifold::Sphere { radius, .. } = m {
        grad.iter_mut().for_each(|g| *g /= radius);
        lap /= radius * radius;
    }
    if !(f0.is_finite() && lap.is_finite() && grad.iter().all(|g| g.is_finite())) {
        return Err(Error::Evaluation("non-finite finite-difference stencil (singular point?)".into()));
    }
    Ok(Jet { f: f0, grad, lap })
}

// Grid fields are differenced through cubic interpolation.
fn for_differences(field: &WeightField) -> std::borrow::Cow<'_, WeightField> {
    match field {
        WeightField::Grid { grid, order } if *order != Interpolation::Tricubic => {
            std::borrow::Cow::Owned(WeightField::Grid {
                grid: grid.clone(),
                order: Interpolation::Tricubic,
            })
        }
        _ => std::borrow::Cow::Borrowed(field),
    }
}

fn default_step(field: &WeightField) -> f64 {
    match field.peel().0 {
        WeightField::Grid { grid, .. } => grid.steps().into_iter().fold(f64::INFINITY, f64::min),
        _ => DEFAULT_FD_STEP,
    }
}

fn jet_at(m: &Manifold, field: &WeightField, x: &[f64], method: DerivativeMethod) -> Result<(Jet, DerivativeMethod)> {
    match method {
        DerivativeMethod::Exact | DerivativeMethod::Auto => match field.jet(m, x) {
            Some(j) => Ok((j?, DerivativeMethod::Exact)),
            None if method == DerivativeMethod::Auto => {
                let h = default_step(field);
                let f = for_differences(field);
                Ok((fd_jet(m, &f, x, h)?, DerivativeMethod::FiniteDifference { h }))
            }
            None => Err(Error::Unsupported("field has no exact derivatives".into())),
        },
        DerivativeMethod::FiniteDifference { h } => {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::input("finite-difference step must be positive"));
            }
            let f = for_differences(field);
            Ok((fd_jet(m, &f, x, h)?, method))
        }
    }
}

pub fn scalar_curvature(m: &Manifold, field: &WeightField, x: &[f64], method: DerivativeMethod) -> Result<CurvatureSample> {
    field.validate(m)?;
    m.check_point(x)?;
    let (jet, used) = jet_at(m, field, x, method)?;
    let scal = scal_from_jet(m, &jet);
    if !scal.is_finite() {
        return Err(Error::Evaluation("scalar curvature is not finite here".into()));
    }
    Ok(CurvatureSample {
        point: Point(x.to_vec()),
        scal,
        method: used,
    })
}

/// `(∫_B |scal|^p dμ_f)^{1/p}` and the positive-part variant, sharing one
/// set of directions. Returned as `[abs, pos]`.
pub fn lp_scal_norms(
    m: &Manifold,
    field: &WeightField,
    b: &BallSpec,
    p: f64,
    budget: usize,
    seed: u64,
) -> Result<[Estimate; 2]> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::input("p must be at least 1"));
    }
    let raw = raw_scal_integrals(m, field, b, p, budget, seed)?;
    Ok(raw.map(|e| root(e, p)))
}

pub fn lp_scal_norm(
    m: &Manifold,
    field: &WeightField,
    b: &BallSpec,
    p: f64,
    positive_part: bool,
    budget: usize,
    seed: u64,
) -> Result<Estimate> {
    let [abs, pos] = lp_scal_norms(m, field, b, p, budget, seed)?;
    Ok(if positive_part { pos } else { abs })
}

fn root(e: Estimate, p: f64) -> Estimate {
    let v = e.value.max(0.0).powf(1.0 / p);
    let d = if e.value > 0.0 { v / (p * e.value) } else { 0.0 };
    Estimate {
        value: v,
        stderr: d * e.stderr,
    }
}

// ∫_B |scal|^p dμ_f and ∫_B (scal₊)^p dμ_f. Outer Scaled shifts are peeled:
// scal scales by e^{-2c} and μ_f by e^{nc}.
fn raw_scal_integrals(m: &Manifold, field: &WeightField, b: &BallSpec, p: f64, budget: usize, seed: u64) -> Result<[Estimate; 2]> {
    field.validate(m)?;
    let (base, shift) = field.peel();
    let n = m.dim() as f64;
    let est = base.ball_quadrature(m, b, 2, budget, seed, |x, f, out| {
        match jet_at(m, base, x, DerivativeMethod::Auto) {
            Ok((jet, _)) => {
                let s = scal_from_jet(m, &jet);
                let w = (n * f).exp();
                out[0] = s.abs().powf(p) * w;
                out[1] = s.max(0.0).powf(p) * w;
            }
            // Counted by the quadrature as a non-finite ray.
            Err(_) => out.iter_mut().for_each(|o| *o = f64::NAN),
        }
    })?;
    let factor = ((n - 2.0 * p) * shift).exp();
    let scale = |e: Estimate| Estimate {
        value: factor * e.value,
        stderr: factor * e.stderr,
    };
    Ok([scale(est[0]), scale(est[1])])
}

pub fn pinching_profile(
    m: &Manifold,
    field: &WeightField,
    r0: f64,
    centers: &PointSet,
    lambda0: Option<f64>,
    budget: usize,
    seed: u64,
) -> Result<PinchingReport> {
    if !(r0 > 0.0) {
        return Err(Error::input("R0 must be positive"));
    }
    if centers.is_empty() {
        return Err(Error::input("pinching profile needs at least one center"));
    }
    let n = m.dim();
    let p = 0.5 * n as f64;
    let rows: Vec<Result<[Estimate; 2]>> = (0..centers.len())
        .into_par_iter()
        .map(|i| {
            let b = BallSpec::new(centers.point(i), r0);
            raw_scal_integrals(m, field, &b, p, budget, seed ^ i as u64)
        })
        .collect();
    let mut sup_abs_raw: f64 = 0.0;
    let mut sup_pos_raw: f64 = 0.0;
    let mut argmax_pos = 0;
    for (i, r) in rows.into_iter().enumerate() {
        let [abs, pos] = r?;
        sup_abs_raw = sup_abs_raw.max(abs.value);
        if pos.value > sup_pos_raw {
            sup_pos_raw = pos.value;
            argmax_pos = i;
        }
    }
    let alpha = alpha_n2(n).ok();
    let sup_pos = sup_pos_raw.max(0.0).powf(1.0 / p);
    Ok(PinchingReport {
        r0,
        centers: centers.len(),
        sup_pos,
        sup_abs: sup_abs_raw.max(0.0).powf(1.0 / p),
        alpha_n2: alpha,
        lambda_margin: sup_abs_raw,
        lambda0,
        below_alpha: alpha.map(|a| sup_pos < a),
        below_lambda0: lambda0.map(|l| sup_abs_raw < l),
        argmax_pos,
        budget,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn alpha_values() {
        assert!((alpha_n2(3).unwrap() - 6.0 * (2.0 * PI * PI).powf(2.0 / 3.0)).abs() < 1e-12);
        assert!((alpha_n2(4).unwrap() - 12.0 * (8.0 * PI * PI / 3.0).sqrt()).abs() < 1e-12);
        assert!(alpha_n2(2).is_err());
    }

    #[test]
    fn flat_and_round_backgrounds() {
        let t = Manifold::flat_torus(3).unwrap();
        let s = scalar_curvature(&t, &WeightField::constant(0.0), &[1.0, 2.0, 3.0], DerivativeMethod::Auto).unwrap();
        assert_eq!(s.scal, 0.0);
        let s3 = Manifold::sphere(3, 1.0).unwrap();
        let s = scalar_curvature(&s3, &WeightField::constant(0.0), &[0.0, 0.0, 0.0, 1.0], DerivativeMethod::Auto).unwrap();
        assert!((s.scal - 6.0).abs() < 1e-14);
    }

    #[test]
    fn exact_request_on_grid_is_unsupported() {
        let t = Manifold::flat_torus(2).unwrap();
        let g = crate::weight::GridField::from_fn(t.clone(), vec![8, 8], |x| x[0].sin()).unwrap();
        let f = WeightField::Grid {
            grid: std::sync::Arc::new(g),
            order: Interpolation::Multilinear,
        };
        assert!(matches!(
            scalar_curvature(&t, &f, &[0.1, 0.2], DerivativeMethod::Exact),
            Err(Error::Unsupported(_))
        ));
        assert!(scalar_curvature(&t, &f, &[0.1, 0.2], DerivativeMethod::Auto).is_ok());
    }
}
