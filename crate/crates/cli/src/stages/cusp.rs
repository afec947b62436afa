use conflab::diagnostics::{biholder_fit, d0_matrix};
use conflab::metric::{build_graph, read_distance_matrix, shortest_paths_to, snap};
use conflab::{Error, Result, WeightField};
use serde_json::json;

use super::random_nodes;
use crate::compare::converge_compare;
use crate::run::{Ctx, Flag, StageOut};

fn cap(f: &WeightField) -> Option<f64> {
    match f {
        WeightField::LogCusp { cap, .. } => *cap,
        _ => None,
    }
}

fn label(f: &WeightField) -> String {
    cap(f).map_or("inf".into(), |k| format!("{k}"))
}

/// Nodes on rings of radius `R0·{0.05, 0.15, 0.25, 0.35}` around the cusp,
/// and random targets.
fn nodes(ctx: &Ctx, pts: &conflab::PointSet) -> Result<(Vec<usize>, Vec<usize>)> {
    let s = ctx.spec;
    let m = &s.manifold;
    let Some(WeightField::LogCusp { x0, r0, .. }) = s.fields().last().cloned() else {
        return Err(Error::Input("log-cusp sweep must end with a LogCusp weight".into()));
    };
    let k = s.budgets.samples;
    let mut sources: Vec<usize> = (0..k)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / k as f64;
            let r = r0 * (0.05 + 0.1 * (i % 4) as f64);
            snap(m, pts, &m.canonical(&[x0[0] + r * a.cos(), x0[1] + r * a.sin()]))
        })
        .collect::<Result<_>>()?;
    sources.sort_unstable();
    sources.dedup();
    let targets = random_nodes(pts.len(), 512.min(pts.len()), s.seed, 4)?;
    Ok((sources, targets))
}

/// Distances for every cap and the limit, and their uniform convergence.
pub fn distances(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    if m.dim() != 2 {
        return Err(Error::Input("the log-cusp experiment runs on 2-dimensional tori and boxes".into()));
    }
    let pts = m.lattice(s.graph.spacing, s.budgets.points)?;
    let (sources, targets) = nodes(ctx, &pts)?;
    let fields = s.fields();
    let mut matrices = Vec::new();
    let mut artifacts = Vec::new();
    for f in &fields {
        let g = build_graph(m, &pts, s.graph.eps, f, s.graph.estimator, s.budgets.quadrature, s.seed)?;
        let dm = shortest_paths_to(&g, &sources, &targets)?;
        artifacts.extend(ctx.write_matrix(&format!("cusp-cap-{}", label(f)), &dm)?);
        matrices.push(dm);
    }
    let table = converge_compare(&matrices, None)?;
    let diam = m.diameter();
    let mut flags = Vec::new();
    let monotone = table.to_last.windows(2).all(|w| w[1] <= w[0]);
    flags.push(Flag::holds(8, "sup |d_k − d_∞| non-increasing in k", monotone));
    let last = *table.to_last.last().expect("two or more fields");
    flags.push(Flag::at_most(8, "final sup |d_k − d_∞| / flat diameter", last / diam, 0.02));
    let rows: Vec<Vec<f64>> = fields[..fields.len() - 1]
        .iter()
        .zip(&table.to_last)
        .map(|(f, d)| vec![cap(f).unwrap_or(f64::INFINITY), *d, d / diam])
        .collect();
    artifacts.push(ctx.write_csv("cusp-convergence.csv", &["cap", "sup_diff_to_limit", "relative_to_diameter"], &rows)?);
    artifacts.push(ctx.write_json("cusp-convergence.json", &table)?);
    Ok(StageOut {
        output: json!({
            "nodes": pts.len(),
            "eps": s.graph.eps,
            "sources": sources.len(),
            "targets": targets.len(),
            "diameter": diam,
            "table": table,
        }),
        flags,
        artifacts,
    })
}

/// Bi-Hölder fit of each distance matrix against `d₀`.
pub fn biholder(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let pts = m.lattice(s.graph.spacing, s.budgets.points)?;
    let mut fits = Vec::new();
    let mut flags = Vec::new();
    for f in s.fields() {
        let dm = read_distance_matrix(&ctx.path(&format!("cusp-cap-{}.json", label(&f))))?;
        let d0 = d0_matrix(m, &pts, &dm.sources, &dm.targets)?;
        let mass = f.total_mass(m, s.budgets.quadrature, s.seed)?.value;
        let fit = biholder_fit(&dm, &d0, mass, m.dim())?;
        flags.push(Flag::at_least(8, format!("cap {}: biholder alpha_low", label(&f)), fit.alpha_low, 0.5));
        fits.push(json!({ "cap": cap(&f), "mass": mass, "fit": fit }));
    }
    let artifacts = vec![ctx.write_json("cusp-biholder.json", &fits)?];
    Ok(StageOut {
        output: json!({ "fits": fits }),
        flags,
        artifacts,
    })
}
