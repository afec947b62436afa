use std::f64::consts::PI;

use conflab::diagnostics::{
    ainfty_report, ap_product, isoperimetric_ratio, reverse_holder, strong_ratio, BallSampler, Domain,
};
use conflab::metric::{
    build_graph, shortest_paths, shortest_paths_to, snap, stable_norm, Estimator, StableNormOptions,
};
use conflab::{Manifold, Point, PointSet, Result, WeightField};
use serde_json::json;

use super::{random_nodes, spread};
use crate::compare::{converge_compare, weak_star_test, TestFn};
use crate::run::{Ctx, Flag, StageOut};

fn ell(f: &WeightField) -> u32 {
    match f {
        WeightField::Burago { ell } => *ell,
        _ => 0,
    }
}

/// Sweep entries with the given frequencies, in the given order.
fn pick(ctx: &Ctx, ells: &[u32]) -> Vec<WeightField> {
    let fields = ctx.spec.fields();
    ells.iter()
        .filter_map(|l| fields.iter().find(|f| ell(f) == *l).cloned())
        .collect()
}

/// `(1/2π)∮√(1 − ½cos t) dt` by the trapezoid rule, exact to rounding for
/// this periodic analytic integrand.
pub fn e1_oracle() -> f64 {
    let k = 4096;
    (0..k).map(|i| (1.0 - 0.5 * (2.0 * PI * i as f64 / k as f64).cos()).sqrt()).sum::<f64>() / k as f64
}

/// Stable norms of `e₁` and `e₂` for ℓ ∈ {1, 2, 4, 8} in the sweep.
pub fn stable_norms(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let opts = StableNormOptions {
        spacing: s.graph.spacing,
        ratio: s.graph.refine_ratio,
        quadrature: match s.graph.estimator {
            Estimator::RiemannLine { k } => k,
            Estimator::ChainBall => 4,
        },
        point_budget: s.budgets.points,
        ..StableNormOptions::default()
    };
    let t = [2.0 * PI, 4.0 * PI];
    let oracle = e1_oracle();
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    let mut reports = Vec::new();
    for f in pick(ctx, &[1, 2, 4, 8]) {
        let e2 = stable_norm(m, &f, &[0.0, 1.0], &t, &opts)?;
        let e1 = stable_norm(m, &f, &[1.0, 0.0], &t, &opts)?;
        let l = ell(&f);
        // Along the valley x₁ = 0 the weight is ½ for every ℓ.
        flags.push(Flag::near(
            5,
            format!("ℓ = {l}: ‖e₂‖* / 2^(−1/2)"),
            e2.extrapolated * 2f64.sqrt(),
            1.0,
            0.01,
        ));
        if l == 1 {
            flags.push(Flag::near(5, "ℓ = 1: ‖e₁‖* / (1/2π)∮√(1−½cos)", e1.extrapolated / oracle, 1.0, 0.01));
        }
        rows.push(vec![l as f64, e1.extrapolated, e2.extrapolated]);
        reports.push(json!({ "ell": l, "e1": e1, "e2": e2 }));
    }
    let artifacts = vec![
        ctx.write_csv("stable-norm.csv", &["ell", "e1", "e2"], &rows)?,
        ctx.write_json("stable-norm.json", &reports)?,
    ];
    Ok(StageOut {
        output: json!({ "e1_oracle": oracle, "e2_oracle": 0.5f64.sqrt(), "rows": rows }),
        flags,
        artifacts,
    })
}

/// Uniform convergence of `d_ℓ` from random sources to every node, for
/// ℓ ∈ {2, 4, 8}.
pub fn convergence(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let fields = pick(ctx, &[2, 4, 8]);
    if fields.len() < 3 {
        return Ok(StageOut {
            output: json!({ "skipped": "sweep lacks ℓ ∈ {2, 4, 8}" }),
            ..StageOut::default()
        });
    }
    let pts = m.lattice(s.graph.spacing, s.budgets.points)?;
    let sources = random_nodes(pts.len(), s.budgets.samples, s.seed, 5)?;
    let mut matrices = Vec::new();
    let mut artifacts = Vec::new();
    for f in &fields {
        let g = build_graph(m, &pts, s.graph.eps, f, s.graph.estimator, s.budgets.quadrature, s.seed)?;
        let dm = shortest_paths(&g, &sources)?;
        artifacts.extend(ctx.write_matrix(&format!("burago-ell-{}", ell(f)), &dm)?);
        matrices.push(dm);
    }
    let params: Vec<f64> = fields.iter().map(|f| ell(f) as f64).collect();
    let table = converge_compare(&matrices, Some(&params))?;
    let ratio = table.ratios[0];
    artifacts.push(ctx.write_json("burago-convergence.json", &table)?);
    Ok(StageOut {
        output: json!({
            "nodes": pts.len(),
            "eps": s.graph.eps,
            "sources": sources.len(),
            "ells": params,
            "table": table,
        }),
        flags: vec![Flag::at_most(
            6,
            "sup|d_4 − d_8| / sup|d_2 − d_4|",
            ratio,
            0.65,
        )],
        artifacts,
    })
}

/// `∫ φ e^{2f_ℓ}` for φ ∈ {1, cos x₁} against the mean-one and
/// frequency-orthogonality values.
pub fn weak_star(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let fields = s.fields();
    let tests = [TestFn::One, TestFn::Cos { k: vec![1.0, 0.0] }];
    let rows = weak_star_test(m, &fields, &tests, s.budgets.quadrature, s.seed)?;
    let vol = m.volume();
    let mut flags = Vec::new();
    for r in &rows {
        let l = ell(&fields[r.field]);
        let (want, what) = match (&r.test, l) {
            (TestFn::One, _) => (vol, "∫ e^{2f}"),
            (_, 1) => (-0.25 * vol, "∫ cos(x₁) e^{2f}"),
            _ => (0.0, "∫ cos(x₁) e^{2f}"),
        };
        flags.push(Flag::near(6, format!("ℓ = {l}: {what} within 3σ of {want:.6}"), r.value, want, 3.0 * r.sigma));
    }
    let table: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| vec![ell(&fields[r.field]) as f64, matches!(r.test, TestFn::One) as u8 as f64, r.value, r.sigma])
        .collect();
    let artifacts = vec![ctx.write_csv("weak-star.csv", &["ell", "is_one", "integral", "sigma"], &table)?];
    Ok(StageOut {
        output: json!({ "rows": rows }),
        flags,
        artifacts,
    })
}

/// Dyadic ball family: centres along `x₂ = 0` and radii `3·2^{−j/4}`; for
/// power-of-two ℓ it is the rescaled family of ℓ = 1.
fn dyadic_sampler(m: &Manifold, seed: u64) -> Result<BallSampler> {
    let centers: Vec<Point> = (0..64).map(|k| Point(vec![k as f64 * PI / 32.0, 0.0])).collect();
    let radii: Vec<f64> = (0..=24).map(|j| 3.0 * 2f64.powf(-j as f64 / 4.0)).collect();
    BallSampler::new(m, PointSet::from_points(&centers, PI / 32.0)?, radii, 3.0, seed)
}

fn whole_torus(m: &Manifold, seed: u64) -> Result<BallSampler> {
    let c = PointSet::from_points(&[Point(vec![PI, PI])], 1.0)?;
    BallSampler::new(m, c, vec![PI * 2f64.sqrt()], PI * 2f64.sqrt(), seed)
}

/// Offset pairs: sources along `x₂ = 0`, targets at distances `d` in eight
/// directions.
fn offset_pairs(m: &Manifold, pts: &PointSet, lengths: &[f64]) -> Result<(Vec<usize>, Vec<usize>, Vec<(usize, usize)>)> {
    let mut sources = Vec::new();
    let mut targets = Vec::new();
    let mut pairs = Vec::new();
    for k in 0..4 {
        let x = [k as f64 * PI / 2.0, 0.0];
        let s = snap(m, pts, &x)?;
        sources.push(s);
        for &d in lengths {
            for a in 0..8 {
                let th = a as f64 * PI / 4.0;
                let t = snap(m, pts, &m.canonical(&[x[0] + d * th.cos(), x[1] + d * th.sin()]))?;
                targets.push(t);
                pairs.push((s, t));
            }
        }
    }
    targets.sort_unstable();
    targets.dedup();
    Ok((sources, targets, pairs))
}

/// Uniform A∞ quantities across the family and the closed-form
/// whole-torus oracles.
pub fn ainfty(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let q = s.budgets.quadrature;
    let mut flags = Vec::new();

    let dyadic = dyadic_sampler(m, s.seed)?;
    let ap_fields = pick(ctx, &[1, 2, 4, 8]);
    let mut ap_rows = Vec::new();
    for f in &ap_fields {
        ap_rows.push(vec![ell(f) as f64, ap_product(m, f, s.diagnostics.p, &dyadic, q)?.value]);
    }
    if ap_fields.len() == 4 {
        let sp = spread(&ap_rows.iter().map(|r| r[1]).collect::<Vec<_>>());
        flags.push(Flag::at_most(7, format!("C_ap(p = {}) spread across ℓ ∈ {{1,2,4,8}}", s.diagnostics.p), sp, 0.05));
    }

    let eta = PI;
    let pts = m.lattice(s.graph.spacing, s.budgets.points)?;
    let lengths = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, PI];
    let (sources, targets, pairs) = offset_pairs(m, &pts, &lengths)?;
    let mut strong_rows = Vec::new();
    let fields = s.fields();
    for f in &fields {
        let g = build_graph(m, &pts, s.graph.eps, f, s.graph.estimator, q, s.seed)?;
        let dm = shortest_paths_to(&g, &sources, &targets)?;
        let r = strong_ratio(m, f, &pts, &dm, &pairs, eta, q, s.seed)?;
        strong_rows.push(vec![ell(f) as f64, r.theta, r.theta_centered, r.rho_min, r.rho_max]);
    }
    let thetas: Vec<f64> = strong_rows.iter().map(|r| r[1]).collect();
    let all_ells: Vec<u32> = fields.iter().map(ell).collect();
    if (1..=16).all(|l| all_ells.contains(&l)) {
        flags.push(Flag::at_most(7, "θ_strong spread max/min − 1 across ℓ ∈ {1,…,16}", spread(&thetas), 0.10));
    }

    // Whole-torus oracles: ⨍(1 − ½cos)² = 9/8 and ⨍(1 − ½cos)·⨍(1 − ½cos)⁻¹ = 2/√3.
    let whole = whole_torus(m, s.seed)?;
    let mut oracle = serde_json::Map::new();
    if let Some(b1) = pick(ctx, &[1]).pop() {
        let rh = reverse_holder(m, &b1, 2.0, &whole, q)?.value;
        let ap = ap_product(m, &b1, 2.0, &whole, q)?.value;
        flags.push(Flag::near(11, "ℓ = 1 whole torus: C_rh(q = 2) / √(9/8)", rh / 1.125f64.sqrt(), 1.0, 0.02));
        flags.push(Flag::near(11, "ℓ = 1 whole torus: C_ap(p = 2) / (2/√3)", ap / (2.0 / 3f64.sqrt()), 1.0, 0.02));
        oracle.insert("burago_rh".into(), json!(rh));
        oracle.insert("burago_ap".into(), json!(ap));
    }
    let small = BallSampler::random(m, 12, vec![0.2, 0.5, 1.0], 1.0, s.seed)?;
    let c = WeightField::constant(0.0);
    let rh_c = reverse_holder(m, &c, s.diagnostics.q, &small, q)?.value;
    let ap_c = ap_product(m, &c, s.diagnostics.p, &small, q)?.value;
    flags.push(Flag::near(11, format!("constant weight: C_rh(q = {})", s.diagnostics.q), rh_c, 1.0, 0.02));
    flags.push(Flag::near(11, format!("constant weight: C_ap(p = {})", s.diagnostics.p), ap_c, 1.0, 0.02));
    oracle.insert("constant_rh".into(), json!(rh_c));
    oracle.insert("constant_ap".into(), json!(ap_c));

    let report = match fields.first() {
        Some(f) => {
            let sampler = BallSampler::random(m, 12, vec![0.2, 0.5, 1.0], s.diagnostics.eta.unwrap_or(1.0), s.seed)?;
            Some(ainfty_report(m, f, s.diagnostics.q, s.diagnostics.p, &sampler, 8, q, 500)?)
        }
        None => None,
    };
    let artifacts = vec![
        ctx.write_csv("ap-dyadic.csv", &["ell", "C_ap"], &ap_rows)?,
        ctx.write_csv(
            "strong-ratio.csv",
            &["ell", "theta", "theta_centered", "rho_min", "rho_max"],
            &strong_rows,
        )?,
    ];
    Ok(StageOut {
        output: json!({
            "ap_dyadic": ap_rows,
            "strong": strong_rows,
            "strong_eta": eta,
            "whole_torus": oracle,
            "report": report,
        }),
        flags,
        artifacts,
    })
}

fn disc(x: f64, y: f64, r: f64) -> Domain {
    Domain::Ball {
        center: Point(vec![x, y]),
        radius: r,
    }
}

/// Discs along `x₂ = 0` at three radii and a unit square.
fn domains() -> Vec<Domain> {
    let mut d = Vec::new();
    for k in 0..8 {
        for r in [0.3, 0.8, 1.5] {
            d.push(disc(k as f64 * PI / 4.0, 0.0, r));
        }
    }
    d.push(Domain::Box {
        lo: vec![0.5, 0.5],
        hi: vec![1.5, 1.5],
    });
    d
}

/// Isoperimetric ratios: flat discs, the envelope bound for ℓ = 1, and the
/// half-flat floor across the family.
pub fn isoperimetry(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let q = s.budgets.quadrature;
    let flat_value = 2.0 * PI.sqrt();
    let discs: Vec<Domain> = domains().into_iter().filter(|d| matches!(d, Domain::Ball { .. })).collect();
    let flat = isoperimetric_ratio(m, &WeightField::constant(0.0), &discs, q, s.seed)?;
    let worst_flat = flat.rows.iter().map(|r| (r.ratio / flat_value - 1.0).abs()).fold(0.0, f64::max);
    let mut flags = vec![Flag::at_most(10, "flat discs: max |ratio/(2√π) − 1|", worst_flat, 0.02)];
    // e^{f} ranges over [√½, √(3/2)]: perimeter ≥ √½·P₀ and mass ≤ (3/2)·A₀.
    let bound = flat_value * 0.5f64.sqrt() / 1.5f64.sqrt();
    let mut rows = Vec::new();
    for f in s.fields() {
        let rep = isoperimetric_ratio(m, &f, &domains(), q, s.seed)?;
        let l = ell(&f);
        if l == 1 {
            flags.push(Flag::at_least(10, "ℓ = 1: inf ratio above the envelope bound 2√π·√(1/3)", rep.inf, bound));
        }
        flags.push(Flag::at_least(10, format!("ℓ = {l}: inf ratio / (2√π)"), rep.inf / flat_value, 0.5));
        for (k, r) in rep.rows.iter().enumerate() {
            rows.push(vec![l as f64, k as f64, r.perimeter, r.mass, r.ratio]);
        }
    }
    let artifacts = vec![ctx.write_csv("isoperimetry.csv", &["ell", "domain", "perimeter", "mass", "ratio"], &rows)?];
    Ok(StageOut {
        output: json!({ "flat": flat, "envelope_bound": bound, "flat_value": flat_value }),
        flags,
        artifacts,
    })
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// `Scaled(f, c)` against `f` with shared seeds: distances scale by `e^c`
/// and every diagnostic is unchanged.
pub fn scaling(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let q = s.budgets.quadrature;
    let Some(base) = s.fields().first().cloned() else {
        return Ok(StageOut::default());
    };
    let c = 0.7;
    let scaled = base.clone().scaled(c);
    let mut flags = Vec::new();
    let mut out = serde_json::Map::new();

    let pts = m.lattice(2.0 * s.graph.spacing, s.budgets.points)?;
    let eps = 3.0 * pts.spacing;
    let sources = random_nodes(pts.len(), 8.min(pts.len()), s.seed, 6)?;
    for est in [Estimator::DEFAULT_LINE, Estimator::ChainBall] {
        let g0 = build_graph(m, &pts, eps, &base, est, q, s.seed)?;
        let g1 = build_graph(m, &pts, eps, &scaled, est, q, s.seed)?;
        let d0 = shortest_paths(&g0, &sources)?;
        let d1 = shortest_paths(&g1, &sources)?;
        let worst = d0
            .values
            .iter()
            .zip(&d1.values)
            .filter(|(a, _)| **a > 0.0)
            .map(|(a, b)| rel(c.exp() * a, *b))
            .fold(0.0, f64::max);
        let name = match est {
            Estimator::ChainBall => "chain-ball",
            Estimator::RiemannLine { .. } => "riemann-line",
        };
        flags.push(Flag::at_most(2, format!("{name}: max |d_(f+c) / (e^c d_f) − 1|"), worst, 1e-10));
        out.insert(format!("{name}_distance_rel"), json!(worst));
    }

    let sampler = BallSampler::random(m, 12, vec![0.2, 0.5, 1.0], 1.0, s.seed)?;
    let a = ainfty_report(m, &base, s.diagnostics.q, s.diagnostics.p, &sampler, 8, q, 500)?;
    let b = ainfty_report(m, &scaled, s.diagnostics.q, s.diagnostics.p, &sampler, 8, q, 500)?;
    for (name, x, y) in [
        ("C_rh", a.c_rh, b.c_rh),
        ("C_ap", a.c_ap, b.c_ap),
        ("θ doubling", a.theta_doubling, b.theta_doubling),
        ("alpha_iv", a.alpha_iv, b.alpha_iv),
    ] {
        flags.push(Flag::at_most(2, format!("{name}: relative change under the shift"), rel(x, y), 1e-10));
    }

    let gpts = m.lattice(s.graph.spacing, s.budgets.points)?;
    let (src, tgt, pairs) = offset_pairs(m, &gpts, &[0.5, 1.0])?;
    let theta = |f: &WeightField| -> Result<f64> {
        let g = build_graph(m, &gpts, s.graph.eps, f, s.graph.estimator, q, s.seed)?;
        let dm = shortest_paths_to(&g, &src, &tgt)?;
        Ok(strong_ratio(m, f, &gpts, &dm, &pairs, 1.0, q, s.seed)?.theta)
    };
    let (t0, t1) = (theta(&base)?, theta(&scaled)?);
    flags.push(Flag::at_most(2, "θ_strong: relative change under the shift", rel(t0, t1), 1e-10));

    let doms = domains();
    let i0 = isoperimetric_ratio(m, &base, &doms, q, s.seed)?;
    let i1 = isoperimetric_ratio(m, &scaled, &doms, q, s.seed)?;
    let iso = i0.rows.iter().zip(&i1.rows).map(|(x, y)| rel(x.ratio, y.ratio)).fold(0.0, f64::max);
    flags.push(Flag::at_most(2, "isoperimetric ratios: max relative change under the shift", iso, 1e-10));
    out.insert("shift".into(), json!(c));
    out.insert("ainfty".into(), json!([a, b]));
    out.insert("theta_strong".into(), json!([t0, t1]));
    out.insert("iso_max_rel".into(), json!(iso));
    Ok(StageOut {
        output: serde_json::Value::Object(out),
        flags,
        artifacts: Vec::new(),
    })
}
