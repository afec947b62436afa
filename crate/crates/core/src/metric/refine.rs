use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::{build_graph, Estimator};
use super::paths::shortest_paths_to;
use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, PointSet, DEFAULT_POINT_BUDGET};
use crate::weight::WeightField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefineOptions {
    pub estimator: Estimator,
    /// ε/spacing at the coarsest entry.
    pub ratio: f64,
    /// Factor by which ε/spacing grows each time ε halves. With 1 the graph
    /// anisotropy is scale free and cannot be extrapolated away.
    pub ratio_growth: f64,
    pub budget: usize,
    pub seed: u64,
    pub point_budget: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            estimator: Estimator::DEFAULT_LINE,
            ratio: 3.0,
            ratio_growth: 1.5,
            budget: 100,
            seed: 0,
            point_budget: DEFAULT_POINT_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelInfo {
    pub eps: f64,
    pub spacing: f64,
    pub nodes: usize,
    pub edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRefinement {
    pub d0: f64,
    /// Calibrated distance per schedule entry.
    pub distances: Vec<f64>,
    pub extrapolated: f64,
    /// Fitted exponent of `a + b·eps^q`; `None` when not fitted.
    pub q: Option<f64>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub levels: Vec<LevelInfo>,
    pub pairs: Vec<PairRefinement>,
}

/// Node nearest to `x`: rounded lattice index when there is a layout.
pub fn snap(m: &Manifold, points: &PointSet, x: &[f64]) -> Result<usize> {
    m.check_point(x)?;
    if let Some(layout) = &points.layout {
        let mut idx = Vec::with_capacity(layout.shape.len());
        for a in 0..layout.shape.len() {
            let s = layout.shape[a] as i64;
            let k = ((x[a] - layout.origin[a]) / layout.steps[a]).round() as i64;
            idx.push(if layout.periodic { k.rem_euclid(s) } else { k.clamp(0, s - 1) } as usize);
        }
        return Ok(layout.index_of(&idx));
    }
    points.nearest(m, x).ok_or_else(|| Error::input("empty point set"))
}

/// Lattices for the schedule. Axis grids are nested: every level refines
/// the coarsest one by an integer factor, so lattice points persist.
fn level_points(m: &Manifold, schedule: &[f64], opts: &RefineOptions) -> Result<Vec<PointSet>> {
    let ratio_at = |k: usize| opts.ratio * opts.ratio_growth.powf((schedule[0] / schedule[k]).log2());
    match m {
        Manifold::Sphere { .. } => (0..schedule.len())
            .map(|k| m.lattice(schedule[k] / ratio_at(k), opts.point_budget))
            .collect(),
        _ => {
            // Even cell counts keep half-period and mid-box points on the
            // lattice.
            let base = m.lattice(schedule[0] / opts.ratio, opts.point_budget)?;
            let layout = base.layout.clone().expect("axis lattice");
            let cells: Vec<usize> = layout
                .shape
                .iter()
                .map(|s| if layout.periodic { *s } else { s - 1 })
                .map(|c| c + c % 2)
                .collect();
            let coarse_step = match m {
                Manifold::Torus { periods } => periods.iter().zip(&cells).map(|(p, c)| p / *c as f64).fold(0.0, f64::max),
                Manifold::Box { extents } => extents
                    .iter()
                    .zip(&cells)
                    .map(|([a, b], c)| (b - a) / *c as f64)
                    .fold(0.0, f64::max),
                Manifold::Sphere { .. } => unreachable!(),
            };
            let mut factor = 1usize;
            let mut out = Vec::new();
            for k in 0..schedule.len() {
                let target = schedule[k] / ratio_at(k);
                let need = (coarse_step / target * (1.0 - 1e-9)).ceil().max(1.0) as usize;
                factor = factor.max(need);
                let shape: Vec<usize> = cells
                    .iter()
                    .map(|c| if layout.periodic { c * factor } else { c * factor + 1 })
                    .collect();
                out.push(m.grid(&shape, opts.point_budget)?);
            }
            Ok(out)
        }
    }
}

/// Graph distances for each pair over a decreasing ε schedule, with an
/// `a + b·eps^q` extrapolation per pair.
pub fn refine_distance(
    m: &Manifold,
    field: &WeightField,
    pairs: &[(Point, Point)],
    eps_schedule: &[f64],
    opts: &RefineOptions,
) -> Result<RefineReport> {
    if eps_schedule.is_empty() {
        return Err(Error::input("empty eps schedule"));
    }
    if eps_schedule.windows(2).any(|w| !(w[1] < w[0])) || eps_schedule.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::input("eps schedule must be positive and strictly decreasing"));
    }
    if !(opts.ratio >= 3.0 && opts.ratio_growth >= 1.0) {
        return Err(Error::input("ratio must be ≥ 3 and ratio_growth ≥ 1"));
    }
    let lattices = level_points(m, eps_schedule, opts)?;
    let mut levels = Vec::new();
    let mut table = vec![Vec::with_capacity(eps_schedule.len()); pairs.len()];
    for (eps, points) in eps_schedule.iter().zip(&lattices) {
        let g = build_graph(m, points, *eps, field, opts.estimator, opts.budget, opts.seed)?;
        let mut by_source: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
        for (p, (x, y)) in pairs.iter().enumerate() {
            let s = snap(m, points, x)?;
            let t = snap(m, points, y)?;
            by_source.entry(s).or_default().push((p, t));
        }
        let sources: Vec<usize> = by_source.keys().cloned().collect();
        let mut targets: Vec<usize> = by_source.values().flatten().map(|(_, t)| *t).collect();
        targets.sort_unstable();
        targets.dedup();
        let dm = shortest_paths_to(&g, &sources, &targets)?;
        for (row, s) in sources.iter().enumerate() {
            for &(p, t) in &by_source[s] {
                let col = targets.binary_search(&t).expect("target listed");
                table[p].push(dm.metric(row, col));
            }
        }
        levels.push(LevelInfo {
            eps: *eps,
            spacing: points.spacing,
            nodes: points.len(),
            edges: g.edge_count(),
        });
    }
    let pairs = pairs
        .iter()
        .zip(table)
        .map(|((x, y), distances)| {
            let (extrapolated, q, warning) = extrapolate(eps_schedule, &distances);
            PairRefinement {
                d0: m.d0(x, y),
                distances,
                extrapolated,
                q,
                warning,
            }
        })
        .collect();
    Ok(RefineReport { levels, pairs })
}

/// Fits `d(ε) = a + b·ε^q` through the last three entries and returns
/// `(a, q, warning)`. Falls back to the finest value, with a warning, when
/// the differences do not contract at least at first order; graph
/// anisotropy makes per-pair errors erratic, and slow contraction is where
/// a three-point fit overshoots.
pub fn extrapolate(eps: &[f64], d: &[f64]) -> (f64, Option<f64>, Option<String>) {
    let k = d.len();
    let last = d[k - 1];
    if k < 3 {
        return (last, None, Some("fewer than three schedule entries; finest value reported".into()));
    }
    let (e1, e2, e3) = (eps[k - 3], eps[k - 2], eps[k - 1]);
    let (d1, d2, d3) = (d[k - 3], d[k - 2], d[k - 1]);
    let noise = 1e-12 * d1.abs().max(d3.abs()).max(1e-300);
    let (a, b) = (d1 - d2, d2 - d3);
    if b.abs() <= noise {
        // Already converged at the last two entries.
        return (last, None, None);
    }
    if a.abs() <= noise || a.signum() != b.signum() {
        return (last, None, Some("non-monotone convergence; finest value reported".into()));
    }
    let target = a / b;
    let ratio = |q: f64| (e1.powf(q) - e2.powf(q)) / (e2.powf(q) - e3.powf(q));
    let (mut lo, mut hi) = (1e-3, 12.0);
    if !(target > ratio(lo) && target < ratio(hi)) {
        return (last, None, Some(format!("difference ratio {target:.3} outside the fit range; finest value reported")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = 0.5 * (lo + hi);
    if q < 1.0 {
        // The correction would exceed the last refinement step.
        return (last, Some(q), Some(format!("contraction slower than first order (q = {q:.2}); finest value reported")));
    }
    let slope = b / (e2.powf(q) - e3.powf(q));
    (d3 - slope * e3.powf(q), Some(q), None)
}
