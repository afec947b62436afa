use conflab::diagnostics::{ainfty_report, BallSampler};
use conflab::metric::{build_graph, shortest_paths};
use conflab::Result;
use serde_json::json;

use super::random_nodes;
use crate::run::{Ctx, StageOut};

/// Graph distances from random sources to every node, per field.
pub fn distances(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let pts = m.lattice(s.graph.spacing, s.budgets.points)?;
    let sources = random_nodes(pts.len(), s.budgets.samples.min(pts.len()), s.seed, 7)?;
    let mut artifacts = Vec::new();
    let mut rows = Vec::new();
    for (i, f) in s.fields().iter().enumerate() {
        let g = build_graph(m, &pts, s.graph.eps, f, s.graph.estimator, s.budgets.quadrature, s.seed)?;
        let dm = shortest_paths(&g, &sources)?;
        artifacts.extend(ctx.write_matrix(&format!("distances-{i}"), &dm)?);
        let max = dm.values.iter().cloned().filter(|v| v.is_finite()).fold(0.0, f64::max);
        rows.push(json!({ "field": i, "edges": g.edge_count(), "max_distance": max }));
    }
    Ok(StageOut {
        output: json!({ "nodes": pts.len(), "sources": sources, "fields": rows }),
        flags: Vec::new(),
        artifacts,
    })
}

/// A∞ report on random balls, per field.
pub fn ainfty(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let d = &s.diagnostics;
    let sampler = BallSampler::random(m, s.budgets.samples, vec![0.2, 0.5, 1.0], d.eta.unwrap_or(1.0), s.seed)?;
    let reports = s
        .fields()
        .iter()
        .map(|f| ainfty_report(m, f, d.q, d.p, &sampler, 8, s.budgets.quadrature, 500))
        .collect::<Result<Vec<_>>>()?;
    let artifacts = vec![ctx.write_json("ainfty.json", &reports)?];
    Ok(StageOut {
        output: json!({ "reports": reports }),
        flags: Vec::new(),
        artifacts,
    })
}
