use conflab::metric::DistanceMatrix;
use conflab::polar::{integrate_manifold, integrate_torus_lattice};
use conflab::{Error, Manifold, Point, Result, WeightField};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    /// `sup |d_k − d_{k+1}|` per consecutive pair.
    pub sup_diffs: Vec<f64>,
    /// `sup_diffs[k+1] / sup_diffs[k]`.
    pub ratios: Vec<f64>,
    /// `sup |d_k − d_last|` for every entry before the last.
    pub to_last: Vec<f64>,
    /// Least-squares geometric factor per step, when every difference is
    /// positive.
    pub geometric_rate: Option<f64>,
    /// Exponent `s` of `sup_diffs ≈ C·t_k^{−s}` against the sweep
    /// parameters, when given.
    pub power_exponent: Option<f64>,
}

fn sup_diff(a: &DistanceMatrix, b: &DistanceMatrix) -> f64 {
    (0..a.sources.len())
        .flat_map(|r| (0..a.targets.len()).map(move |c| (r, c)))
        .map(|(r, c)| (a.metric(r, c) - b.metric(r, c)).abs())
        .fold(0.0, f64::max)
}

fn slope(xy: &[(f64, f64)]) -> f64 {
    let k = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / k;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = xy.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xy.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Uniform Cauchy table of an ordered list of distance matrices over one
/// index set. `params` (one per matrix, e.g. ℓ) enables the power fit.
pub fn converge_compare(matrices: &[DistanceMatrix], params: Option<&[f64]>) -> Result<ConvergenceTable> {
    if matrices.len() < 2 {
        return Err(Error::Input("need at least two distance matrices".into()));
    }
    let first = &matrices[0];
    if let Some(k) = matrices
        .iter()
        .position(|m| m.sources != first.sources || m.targets != first.targets || m.values.len() != first.values.len())
    {
        return Err(Error::Input(format!("distance matrix {k} is not aligned with matrix 0")));
    }
    if let Some(p) = params {
        if p.len() != matrices.len() || p.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::Input("need one positive parameter per matrix".into()));
        }
    }
    let sup_diffs: Vec<f64> = matrices.windows(2).map(|w| sup_diff(&w[0], &w[1])).collect();
    let last = matrices.last().expect("nonempty");
    let to_last = matrices[..matrices.len() - 1].iter().map(|m| sup_diff(m, last)).collect();
    let ratios = sup_diffs.windows(2).map(|w| w[1] / w[0]).collect();
    let positive = sup_diffs.len() >= 2 && sup_diffs.iter().all(|d| *d > 0.0);
    let geometric_rate = positive.then(|| {
        let xy: Vec<(f64, f64)> = sup_diffs.iter().enumerate().map(|(k, d)| (k as f64, d.ln())).collect();
        slope(&xy).exp()
    });
    let power_exponent = match params {
        Some(p) if positive => {
            let xy: Vec<(f64, f64)> = sup_diffs.iter().zip(p).map(|(d, t)| (t.ln(), d.ln())).collect();
            Some(-slope(&xy))
        }
        _ => None,
    };
    Ok(ConvergenceTable {
        sup_diffs,
        ratios,
        to_last,
        geometric_rate,
        power_exponent,
    })
}

/// Built-in test functions for weak-* integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TestFn {
    One,
    /// `cos(k·x)` in the chart (ambient) coordinates.
    Cos { k: Vec<f64> },
    /// `exp(1 − 1/(1 − (d₀/r)²))` on `B(x0, r)`, 1 at the centre.
    Bump { x0: Point, r: f64 },
}

impl TestFn {
    pub fn eval(&self, m: &Manifold, x: &[f64]) -> f64 {
        match self {
            TestFn::One => 1.0,
            TestFn::Cos { k } => k.iter().zip(x).map(|(a, b)| a * b).sum::<f64>().cos(),
            TestFn::Bump { x0, r } => {
                let s = m.d0(x, x0) / r;
                if s < 1.0 {
                    (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self, m: &Manifold) -> Result<()> {
        match self {
            TestFn::One => Ok(()),
            TestFn::Cos { k } if k.len() == m.ambient_dim() && k.iter().all(|v| v.is_finite()) => Ok(()),
            TestFn::Cos { .. } => Err(Error::Input("cos test function needs one finite wave number per coordinate".into())),
            TestFn::Bump { x0, r } => {
                m.check_point(x0)?;
                if *r > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Input("bump radius must be positive".into()))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakStarRow {
    pub field: usize,
    pub test: TestFn,
    /// `∫ φ e^{nf} dμ₀`.
    pub value: f64,
    /// Quadrature uncertainty, floored at `1e-12 ∫|φ| e^{nf}`.
    pub sigma: f64,
}

/// `∫ φ e^{nf} dμ₀` for every field and test function. Smooth periodic
/// fields use the periodic midpoint rule; fields with a focus use polar
/// quadrature around it.
pub fn weak_star_test(m: &Manifold, fields: &[WeightField], tests: &[TestFn], budget: usize, seed: u64) -> Result<Vec<WeakStarRow>> {
    let mut rows = Vec::with_capacity(fields.len() * tests.len());
    let n = m.dim() as f64;
    for (i, f) in fields.iter().enumerate() {
        f.validate(m)?;
        for t in tests {
            t.validate(m)?;
            let g = |x: &[f64], out: &mut [f64]| {
                let w = (n * f.f(m, x)).exp();
                let v = t.eval(m, x) * w;
                out[0] = if v.is_finite() { v } else { 0.0 };
                out[1] = out[0].abs();
            };
            let focus = f.focus(m);
            let est = match (m, &focus) {
                (Manifold::Torus { .. }, None) => integrate_torus_lattice(m, budget * budget, 2, g)?,
                _ => integrate_manifold(m, focus.as_ref().map(|p| p.coords()), budget, seed, 2, g)?,
            };
            rows.push(WeakStarRow {
                field: i,
                test: t.clone(),
                value: est[0].value,
                sigma: est[0].stderr.max(1e-12 * est[1].value),
            });
        }
    }
    Ok(rows)
}
