use serde::{Deserialize, Serialize};

use super::graph::{build_graph, Estimator};
use super::paths::dijkstra;
use super::refine::snap;
use crate::error::{Error, Result};
use crate::manifold::{Manifold, DEFAULT_POINT_BUDGET};
use crate::weight::WeightField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StableNormOptions {
    pub spacing: f64,
    /// ε/spacing.
    pub ratio: f64,
    /// Half-width of the strip around the segment; defaults to the largest
    /// period.
    pub corridor: Option<f64>,
    pub quadrature: usize,
    pub point_budget: usize,
    /// Also solve with half the corridor and report the change.
    pub check_corridor: bool,
}

impl Default for StableNormOptions {
    fn default() -> Self {
        Self {
            spacing: 0.05,
            ratio: 3.0,
            corridor: None,
            quadrature: 4,
            point_budget: DEFAULT_POINT_BUDGET,
            check_corridor: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableNormReport {
    pub direction: Vec<f64>,
    /// `(t, d̄(0, t v)/t)` per requested `t`.
    pub rows: Vec<(f64, f64)>,
    pub extrapolated: f64,
    /// Coefficient `b` of the `a + b/t` fit.
    pub slope: f64,
    pub corridor: f64,
    /// Largest relative change when the corridor is halved.
    pub corridor_delta: Option<f64>,
    pub nodes: usize,
}

fn strip_ratios(
    torus: &Manifold,
    field: &WeightField,
    v: &[f64],
    t_list: &[f64],
    width: f64,
    opts: &StableNormOptions,
) -> Result<(Vec<f64>, usize)> {
    // Steps dividing each period, so period vectors land on nodes.
    let Manifold::Torus { periods } = torus else { unreachable!() };
    let steps: Vec<f64> = periods.iter().map(|p| p / (p / opts.spacing).round().max(1.0)).collect();
    let t_max = *t_list.last().expect("nonempty");
    let extents: Vec<[f64; 2]> = v
        .iter()
        .zip(&steps)
        .map(|(&c, &h)| {
            let lo = (0f64.min(t_max * c) - width) / h;
            let hi = (0f64.max(t_max * c) + width) / h;
            [lo.floor() * h, hi.ceil() * h]
        })
        .collect();
    let strip = Manifold::boxed(extents.clone())?;
    let shape: Vec<usize> = extents
        .iter()
        .zip(&steps)
        .map(|([a, b], h)| ((b - a) / h).round() as usize + 1)
        .collect();
    let points = strip.grid(&shape, opts.point_budget)?;
    let cover = WeightField::Periodic {
        base: Box::new(field.clone()),
        torus: torus.clone(),
    };
    let g = build_graph(
        &strip,
        &points,
        opts.ratio * points.spacing,
        &cover,
        Estimator::RiemannLine { k: opts.quadrature },
        0,
        0,
    )?;
    let origin = snap(&strip, &points, &vec![0.0; v.len()])?;
    let targets: Vec<usize> = t_list
        .iter()
        .map(|t| {
            let y: Vec<f64> = v.iter().map(|c| t * c).collect();
            snap(&strip, &points, &y)
        })
        .collect::<Result<_>>()?;
    let d = dijkstra(&g, origin, &targets);
    Ok((t_list.iter().zip(&targets).map(|(t, &j)| d[j] / t).collect(), points.len()))
}

/// `d̄(0, t v)/t` on a periodic-cover strip for each `t`, and the
/// extrapolated stable norm `‖v‖*`.
pub fn stable_norm(
    torus: &Manifold,
    field: &WeightField,
    v: &[f64],
    t_list: &[f64],
    opts: &StableNormOptions,
) -> Result<StableNormReport> {
    let Manifold::Torus { periods } = torus else {
        return Err(Error::input("the stable norm needs a periodic field on a torus"));
    };
    field.validate(torus)?;
    if v.len() != periods.len() || v.iter().all(|c| *c == 0.0) || v.iter().any(|c| !c.is_finite()) {
        return Err(Error::input("direction must be a nonzero vector of the torus dimension"));
    }
    if t_list.is_empty() || t_list.windows(2).any(|w| !(w[1] > w[0])) || !(t_list[0] > 0.0) {
        return Err(Error::input("t_list must be positive and increasing"));
    }
    if !(opts.spacing > 0.0 && opts.ratio >= 3.0) {
        return Err(Error::input("spacing must be positive and ratio ≥ 3"));
    }
    let width = opts.corridor.unwrap_or_else(|| periods.iter().cloned().fold(0.0, f64::max));
    let (ratios, nodes) = strip_ratios(torus, field, v, t_list, width, opts)?;
    let corridor_delta = if opts.check_corridor {
        let (narrow, _) = strip_ratios(torus, field, v, t_list, 0.5 * width, opts)?;
        Some(
            narrow
                .iter()
                .zip(&ratios)
                .map(|(a, b)| ((a - b) / b).abs())
                .fold(0.0, f64::max),
        )
    } else {
        None
    };
    // Monotone correction: a longer run never does worse per unit length
    // than the best shorter one it could repeat, so use the running minimum.
    let mut corrected = ratios.clone();
    for i in 1..corrected.len() {
        corrected[i] = corrected[i].min(corrected[i - 1]);
    }
    let (extrapolated, slope) = fit_inverse(t_list, &corrected);
    Ok(StableNormReport {
        direction: v.to_vec(),
        rows: t_list.iter().cloned().zip(ratios).collect(),
        extrapolated,
        slope,
        corridor: width,
        corridor_delta,
        nodes,
    })
}

/// Least-squares `y ≈ a + b/t`; a single point gives `(y, 0)`. A negative
/// `b` (values rising with `t`) keeps the last value instead.
fn fit_inverse(t: &[f64], y: &[f64]) -> (f64, f64) {
    let k = t.len();
    if k == 1 {
        return (y[0], 0.0);
    }
    let xs: Vec<f64> = t.iter().map(|t| 1.0 / t).collect();
    let mx = xs.iter().sum::<f64>() / k as f64;
    let my = y.iter().sum::<f64>() / k as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    if b <= 0.0 {
        return (y[k - 1], 0.0);
    }
    (my - b * mx, b)
}
