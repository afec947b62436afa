use conflab::metric::{build_graph, refine_distance, shortest_paths_to, RefineOptions};
use conflab::{Error, Manifold, Point, Result, WeightField};
use rand::Rng;
use serde_json::json;

use super::stream;
use crate::run::{Ctx, Flag, StageOut};

fn shift_of(ctx: &Ctx) -> Result<(WeightField, f64)> {
    match ctx.spec.fields().first() {
        Some(f @ WeightField::Constant { c }) => Ok((f.clone(), *c)),
        _ => Err(Error::Input("flat-identity needs a Constant weight".into())),
    }
}

/// Graph distances between random node pairs against `e^c d₀`.
pub fn distances(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let (field, c) = shift_of(ctx)?;
    let pts = m.lattice(s.graph.spacing, s.budgets.points)?;
    let g = build_graph(m, &pts, s.graph.eps, &field, s.graph.estimator, s.budgets.quadrature, s.seed)?;
    let mut rng = stream(s.seed, 1);
    let pairs: Vec<(usize, usize)> = (0..s.budgets.samples)
        .map(|_| loop {
            let a = rng.random_range(0..pts.len());
            let b = rng.random_range(0..pts.len());
            if a != b {
                break (a, b);
            }
        })
        .collect();
    let mut sources: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let mut targets: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    sources.sort_unstable();
    sources.dedup();
    targets.sort_unstable();
    targets.dedup();
    let dm = shortest_paths_to(&g, &sources, &targets)?;
    let rows: Vec<Vec<f64>> = pairs
        .iter()
        .map(|&(a, b)| {
            let d0 = m.d0(pts.get(a), pts.get(b));
            let df = dm.metric(dm.row_of(a).expect("source"), dm.col_of(b).expect("target"));
            let want = c.exp() * d0;
            vec![a as f64, b as f64, d0, df, (df - want).abs() / want]
        })
        .collect();
    let max_rel = rows.iter().map(|r| r[4]).fold(0.0, f64::max);
    let mean_rel = rows.iter().map(|r| r[4]).sum::<f64>() / rows.len() as f64;
    let mut artifacts = ctx.write_matrix("identity-distances", &dm)?;
    artifacts.push(ctx.write_csv("identity-pairs.csv", &["source", "target", "d0", "d_f", "rel_err"], &rows)?);
    Ok(StageOut {
        output: json!({
            "nodes": pts.len(),
            "edges": g.edge_count(),
            "spacing": pts.spacing,
            "eps": s.graph.eps,
            "pairs": rows.len(),
            "max_rel_err": max_rel,
            "mean_rel_err": mean_rel,
        }),
        flags: vec![Flag::at_most(
            1,
            format!("max |d_f − d₀|/d₀ over {} random pairs at eps {}", rows.len(), s.graph.eps),
            max_rel,
            0.03,
        )],
        artifacts,
    })
}

/// Points of the coarsest refinement lattice; they persist at every level.
fn coarse_points(m: &Manifold, spacing: f64, count: usize, seed: u64) -> Result<Vec<Point>> {
    let axes: Vec<(f64, f64, usize)> = match m {
        Manifold::Torus { periods } => periods
            .iter()
            .map(|p| {
                let c = ((p / spacing).round() as usize).max(1);
                (0.0, *p, c + c % 2)
            })
            .collect(),
        Manifold::Box { extents } => extents
            .iter()
            .map(|[a, b]| {
                let c = (((b - a) / spacing) - 1e-9).ceil().max(1.0) as usize;
                (*a, b - a, c + c % 2)
            })
            .collect(),
        Manifold::Sphere { .. } => return Err(Error::Input("refinement pairs need a torus or a box".into())),
    };
    let periodic = matches!(m, Manifold::Torus { .. });
    let mut rng = stream(seed, 2);
    Ok((0..count)
        .map(|_| {
            Point(
                axes.iter()
                    .map(|(lo, len, c)| {
                        let top = if periodic { *c } else { c + 1 };
                        lo + rng.random_range(0..top) as f64 * len / *c as f64
                    })
                    .collect(),
            )
        })
        .collect())
}

/// Distances over the eps schedule and their extrapolation.
pub fn refinement(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let (field, c) = shift_of(ctx)?;
    let sched = &s.graph.eps_schedule;
    let pts = coarse_points(m, sched[0] / s.graph.refine_ratio, 2 * s.budgets.samples, s.seed)?;
    let pairs: Vec<(Point, Point)> = pts
        .chunks(2)
        .filter(|p| m.d0(&p[0], &p[1]) > 0.0)
        .map(|p| (p[0].clone(), p[1].clone()))
        .collect();
    let opts = RefineOptions {
        estimator: s.graph.estimator,
        ratio: s.graph.refine_ratio,
        ratio_growth: s.graph.ratio_growth,
        budget: s.budgets.quadrature,
        seed: s.seed,
        point_budget: s.budgets.points,
    };
    let rep = refine_distance(m, &field, &pairs, sched, &opts)?;
    let rel = |d: f64, d0: f64| (d - c.exp() * d0).abs() / (c.exp() * d0);
    let rows: Vec<Vec<f64>> = rep
        .pairs
        .iter()
        .map(|p| {
            let mut r = vec![p.d0];
            r.extend(&p.distances);
            r.push(p.extrapolated);
            r.push(rel(p.extrapolated, p.d0));
            r
        })
        .collect();
    let mut header = vec!["d0".to_string()];
    header.extend(sched.iter().map(|e| format!("d_eps_{e}")));
    header.extend(["extrapolated".to_string(), "rel_err".to_string()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let max_rel = rows.iter().map(|r| *r.last().expect("row")).fold(0.0, f64::max);
    let per_level: Vec<f64> = (0..sched.len())
        .map(|k| rep.pairs.iter().map(|p| rel(p.distances[k], p.d0)).fold(0.0, f64::max))
        .collect();
    let artifacts = vec![
        ctx.write_csv("refinement.csv", &header, &rows)?,
        ctx.write_json("refinement.json", &rep)?,
    ];
    Ok(StageOut {
        output: json!({
            "levels": rep.levels,
            "max_rel_err_per_level": per_level,
            "max_rel_err_extrapolated": max_rel,
            "warnings": rep.pairs.iter().filter(|p| p.warning.is_some()).count(),
        }),
        flags: vec![Flag::at_most(
            1,
            format!("max extrapolated |d_f − d₀|/d₀ over {} pairs, eps {:?}", rows.len(), sched),
            max_rel,
            0.005,
        )],
        artifacts,
    })
}
