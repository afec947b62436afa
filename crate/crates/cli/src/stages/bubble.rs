use conflab::curvature::{alpha_n2, pinching_profile, scalar_curvature, DerivativeMethod};
use conflab::{Error, Manifold, Point, PointSet, Result, WeightField};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use super::{spread, stream};
use crate::run::{Ctx, Flag, StageOut};

fn lambda(f: &WeightField) -> f64 {
    match f {
        WeightField::SphereBubble { lambda, .. } => *lambda,
        _ => f64::NAN,
    }
}

fn sphere(ctx: &Ctx) -> Result<(usize, f64)> {
    match ctx.spec.manifold {
        Manifold::Sphere { dim, radius } => Ok((dim, radius)),
        _ => Err(Error::Input("sphere-bubble needs a sphere".into())),
    }
}

/// Exact-derivative scalar curvature at random points against the round
/// value `n(n−1)/R²`, which every bubble keeps.
pub fn curvature(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let (n, radius) = sphere(ctx)?;
    let round = (n * (n - 1)) as f64 / (radius * radius);
    let mut rng = stream(s.seed, 3);
    let points: Vec<Vec<f64>> = (0..s.budgets.samples)
        .map(|_| {
            let v: Vec<f64> = (0..=n).map(|_| rng.sample(StandardNormal)).collect();
            let r = v.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| radius * x / r).collect()
        })
        .collect();
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for f in s.fields() {
        let mut worst: f64 = 0.0;
        for x in &points {
            let scal = scalar_curvature(m, &f, x, DerivativeMethod::Exact)?.scal;
            worst = worst.max((scal - round).abs() / round);
        }
        flags.push(Flag::at_most(
            3,
            format!("λ = {}: max |scal − {round}|/{round} over {} points", lambda(&f), points.len()),
            worst,
            1e-6,
        ));
        rows.push(vec![lambda(&f), worst]);
    }
    let artifacts = vec![ctx.write_csv("curvature.csv", &["lambda", "max_rel_err"], &rows)?];
    Ok(StageOut {
        output: json!({ "round_scal": round, "points": points.len(), "rows": rows }),
        flags,
        artifacts,
    })
}

/// Total mass per bubble; conformal dilations preserve it.
pub fn mass(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let mut rows = Vec::new();
    for f in s.fields() {
        let e = f.total_mass(m, s.budgets.quadrature, s.seed)?;
        rows.push(vec![lambda(&f), e.value, e.stderr]);
    }
    let masses: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let sp = spread(&masses);
    let artifacts = vec![ctx.write_csv("mass.csv", &["lambda", "mass", "stderr"], &rows)?];
    Ok(StageOut {
        output: json!({ "volume": m.volume(), "rows": rows, "spread": sp }),
        flags: vec![Flag::at_most(3, "total mass spread max/min − 1 across λ", sp, 0.01)],
        artifacts,
    })
}

/// Focus, its antipode and a ring of six points at angle `acos 0.8`
/// around the focus.
fn centers(radius: f64, focus: &[f64]) -> Result<PointSet> {
    let amb = focus.len();
    let p: Vec<f64> = focus.iter().map(|v| v / radius).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for a in 0..amb {
        let mut e = vec![0.0; amb];
        e[a] = 1.0;
        for b in std::iter::once(&p).chain(basis.iter()) {
            let d: f64 = e.iter().zip(b).map(|(x, y)| x * y).sum();
            e.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let norm = e.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(e.iter().map(|x| x / norm).collect());
        }
        if basis.len() == 2 {
            break;
        }
    }
    let (c, sn) = (0.8, 0.6);
    let mut pts = vec![Point(focus.to_vec()), Point(focus.iter().map(|v| -v).collect())];
    for k in 0..6 {
        let a = k as f64 * std::f64::consts::PI / 3.0;
        pts.push(Point(
            (0..amb)
                .map(|i| radius * (c * p[i] + sn * (a.cos() * basis[0][i] + a.sin() * basis[1][i])))
                .collect(),
        ));
    }
    PointSet::from_points(&pts, 0.5 * radius)
}

/// Pinching profile per λ: the positive part concentrates and tends to
/// `α(n,2)` as λ grows.
pub fn pinching(ctx: &Ctx) -> Result<StageOut> {
    let s = ctx.spec;
    let m = &s.manifold;
    let (n, radius) = sphere(ctx)?;
    let fields = s.fields();
    let focus = fields
        .last()
        .and_then(|f| f.focus(m))
        .ok_or_else(|| Error::Input("bubble without a focus".into()))?;
    let cs = centers(radius, focus.coords())?;
    let alpha = alpha_n2(n)?;
    let mut reports = Vec::new();
    for f in &fields {
        reports.push(pinching_profile(m, f, s.diagnostics.r0, &cs, s.diagnostics.lambda0, s.budgets.quadrature, s.seed)?);
    }
    let sups: Vec<f64> = reports.iter().map(|r| r.sup_pos).collect();
    let rows: Vec<Vec<f64>> = fields.iter().zip(&reports).map(|(f, r)| vec![lambda(f), r.sup_pos, r.sup_abs]).collect();
    let mut flags = Vec::new();
    let last = *sups.last().expect("fields");
    flags.push(Flag::range(
        4,
        format!("sup_pos / α({n},2) at λ = {}, R0 = {}", lambda(fields.last().expect("fields")), s.diagnostics.r0),
        last / alpha,
        Some(0.95),
        Some(1.01),
    ));
    let order: Vec<f64> = fields.iter().map(lambda).collect();
    let sorted = order.windows(2).all(|w| w[0] < w[1]);
    let increasing = sups.windows(2).all(|w| w[1] > w[0]);
    flags.push(Flag::holds(4, "sup_pos strictly increasing over increasing λ", sorted && increasing));
    let artifacts = vec![
        ctx.write_csv("pinching.csv", &["lambda", "sup_pos", "sup_abs"], &rows)?,
        ctx.write_json("pinching.json", &reports)?,
    ];
    Ok(StageOut {
        output: json!({ "alpha_n2": alpha, "reports": reports }),
        flags,
        artifacts,
    })
}
