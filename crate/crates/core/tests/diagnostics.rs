use std::f64::consts::PI;
use std::sync::Arc;

use conflab::diagnostics::*;
use conflab::metric::*;
use conflab::{GridField, Interpolation, Manifold, Point, PointSet, WeightField};
use proptest::prelude::*;

fn torus2() -> Manifold {
    Manifold::flat_torus(2).unwrap()
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs()
}

/// One ball covering the whole square torus.
fn whole_torus(m: &Manifold) -> BallSampler {
    let c = PointSet::from_points(&[Point(vec![PI, PI])], 1.0).unwrap();
    BallSampler::new(m, c, vec![PI * 2f64.sqrt()], 5.0, 1).unwrap()
}

/// Periodic trapezoid average of `g` over one period.
fn period_mean(g: impl Fn(f64) -> f64) -> f64 {
    let k = 4096;
    (0..k).map(|i| g(2.0 * PI * i as f64 / k as f64)).sum::<f64>() / k as f64
}

fn small_balls(m: &Manifold, seed: u64) -> BallSampler {
    BallSampler::random(m, 12, vec![0.2, 0.5, 1.0], 1.0, seed).unwrap()
}

#[test]
fn default_eta_is_a_quarter_period_capped_at_one() {
    assert_eq!(default_eta(&torus2()), 1.0);
    assert_eq!(default_eta(&Manifold::torus(vec![2.0, 3.0]).unwrap()), 0.5);
    let m = torus2();
    let c = PointSet::from_points(&[Point(vec![0.0, 0.0])], 1.0).unwrap();
    assert!(BallSampler::new(&m, c.clone(), vec![1.5], 1.0, 0).is_err());
    assert!(BallSampler::new(&m, c, vec![0.0], 1.0, 0).is_err());
}

#[test]
fn reverse_holder_and_ap_on_the_whole_torus() {
    let m = torus2();
    let s = whole_torus(&m);
    let b = WeightField::burago(1);
    let w = |t: f64| 1.0 - 0.5 * t.cos();
    let rh_oracle = period_mean(|t| w(t).powi(2)).sqrt() / period_mean(w);
    let ap_oracle = period_mean(w) * period_mean(|t| 1.0 / w(t));
    assert!(close(rh_oracle, 1.125f64.sqrt(), 1e-12));
    assert!(close(ap_oracle, 2.0 / 3f64.sqrt(), 1e-12));
    let rh = reverse_holder(&m, &b, 2.0, &s, 2000).unwrap();
    let ap = ap_product(&m, &b, 2.0, &s, 2000).unwrap();
    assert!(close(rh.value, rh_oracle, 0.02), "{rh:?}");
    assert!(close(ap.value, ap_oracle, 0.02), "{ap:?}");
    for c in [-1.0, 0.0, 2.5] {
        let f = WeightField::constant(c);
        let sm = small_balls(&m, 4);
        assert!(close(reverse_holder(&m, &f, 3.0, &sm, 100).unwrap().value, 1.0, 0.02));
        assert!(close(ap_product(&m, &f, 1.5, &sm, 100).unwrap().value, 1.0, 0.02));
    }
    assert!(reverse_holder(&m, &b, 1.0, &s, 100).is_err());
    assert!(ap_product(&m, &b, 0.5, &s, 100).is_err());
}

#[test]
fn reverse_holder_of_a_two_level_step() {
    // w = 1 on one half of the torus and 10 on the other; n = 2, f = ln(w)/2.
    let m = torus2();
    let hi = 10f64.ln() / 2.0;
    let grid = GridField::from_fn(m.clone(), vec![512, 4], |x| if x[0] < PI { 0.0 } else { hi }).unwrap();
    let f = WeightField::Grid {
        grid: Arc::new(grid),
        order: Interpolation::Multilinear,
    };
    let oracle = ((1.0f64 + 100.0) / 2.0).sqrt() / ((1.0 + 10.0) / 2.0);
    assert!(close(oracle, 1.2919, 1e-3));
    let rh = reverse_holder(&m, &f, 2.0, &whole_torus(&m), 2000).unwrap();
    assert!(close(rh.value, oracle, 0.02), "{rh:?} {oracle}");
}

#[test]
fn ap_sup_is_nearly_independent_of_frequency() {
    // Dyadic radii and centres: the ball set for ℓ is the rescaled ball set
    // for ℓ = 1, so only quadrature separates the suprema.
    let m = torus2();
    let centers: Vec<Point> = (0..32).map(|k| Point(vec![k as f64 * PI / 16.0, 0.0])).collect();
    let radii: Vec<f64> = (0..=16).map(|j| 3.0 * 2f64.powf(-j as f64 / 4.0)).collect();
    let s = BallSampler::new(&m, PointSet::from_points(&centers, 0.1).unwrap(), radii, 3.0, 5).unwrap();
    let sups: Vec<f64> = [1u32, 4]
        .iter()
        .map(|&l| ap_product(&m, &WeightField::burago(l), 2.0, &s, 200).unwrap().value)
        .collect();
    assert!(sups[0] >= 2.0 / 3f64.sqrt() * 0.98, "{sups:?}");
    assert!(close(sups[1], sups[0], 0.05), "{sups:?}");
}

#[test]
fn doubling_constants() {
    let m = torus2();
    let s = BallSampler::random(&m, 20, vec![0.1, 0.3, 0.5], 1.0, 2).unwrap();
    let flat = doubling_constant(&m, &WeightField::constant(0.3), &s, 100).unwrap();
    assert!(close(flat.value, 4.0, 0.03), "{flat:?}");
    let b8 = doubling_constant(&m, &WeightField::burago(8), &s, 200).unwrap();
    assert!(b8.value >= 1.0 && b8.value <= 12.0 * 1.03, "{b8:?}");
    let t3 = Manifold::flat_torus(3).unwrap();
    let s3 = BallSampler::random(&t3, 8, vec![0.2, 0.4], 1.0, 2).unwrap();
    let cube = doubling_constant(&t3, &WeightField::constant(0.0), &s3, 100).unwrap();
    assert!(close(cube.value, 8.0, 0.03), "{cube:?}");
    let wide = BallSampler::random(&m, 2, vec![0.8], 1.0, 2).unwrap();
    assert!(doubling_constant(&m, &WeightField::burago(1), &wide, 100).is_err());
}

#[test]
fn subset_exponents() {
    let m = torus2();
    let s = small_balls(&m, 9);
    let flat = subset_ratio_exponent(&m, &WeightField::constant(-0.4), &s, 8, 2000).unwrap();
    assert!((flat.slope - 1.0).abs() < 0.05, "{flat:?}");
    let b = subset_ratio_exponent(&m, &WeightField::burago(1), &s, 8, 2000).unwrap();
    assert!(b.alpha_iv <= 1.5 && b.alpha_iv >= 1.0, "{b:?}");
    assert!(b.slope_min >= 1.0 / b.alpha_iv - 1e-12 && b.slope_max <= b.alpha_iv + 1e-12);
    assert!(subset_ratio_exponent(&m, &WeightField::burago(1), &s, 7, 2000).is_err());
    // Few samples and fine sub-balls: empty subsets are counted, not fitted.
    let sparse = subset_ratio_exponent(&m, &WeightField::burago(1), &s, 32, 100).unwrap();
    assert!(sparse.degenerate > 0);
    assert_eq!(sparse.pairs + sparse.degenerate, s.len() * (2 * 32 - 1));
}

#[test]
fn ball_constants_are_exactly_scale_invariant() {
    let m = torus2();
    let s = small_balls(&m, 3);
    let half = BallSampler::new(&m, s.centers.clone(), vec![0.1, 0.25, 0.5], 1.0, 3).unwrap();
    let base = WeightField::burago(3);
    let shifted = base.clone().scaled(1.7);
    let a = ainfty_report(&m, &base, 2.0, 2.0, &s, 8, 100, 500).unwrap();
    let b = ainfty_report(&m, &shifted, 2.0, 2.0, &s, 8, 100, 500).unwrap();
    for (x, y) in [
        (a.c_rh, b.c_rh),
        (a.c_ap, b.c_ap),
        (a.theta_doubling, b.theta_doubling),
        (a.alpha_iv, b.alpha_iv),
        (a.subset_constant, b.subset_constant),
    ] {
        assert!(close(y, x, 1e-10), "{a:?} {b:?}");
    }
    let d1 = doubling_constant(&m, &base, &half, 100).unwrap().value;
    let d2 = doubling_constant(&m, &shifted, &half, 100).unwrap().value;
    assert!(close(d2, d1, 1e-10));
    assert!(a.c_rh >= 1.0 && a.c_ap >= 1.0 && a.theta_doubling >= 1.0);
    let json = serde_json::to_value(&a).unwrap();
    assert!(json.get("C_rh").is_some() && json.get("C_ap").is_some());
}

fn flat_graph(m: &Manifold, field: &WeightField) -> (PointSet, EpsGraph) {
    let pts = m.grid(&[96, 96], 1 << 20).unwrap();
    let g = build_graph(m, &pts, 5.0 * pts.spacing, field, Estimator::DEFAULT_LINE, 100, 0).unwrap();
    (pts, g)
}

/// Pairs from a few sources to axis and diagonal offsets.
fn offset_pairs(m: &Manifold, pts: &PointSet, lengths: &[f64]) -> (Vec<usize>, Vec<usize>, Vec<(usize, usize)>) {
    let mut sources = Vec::new();
    let mut targets = Vec::new();
    let mut pairs = Vec::new();
    for k in 0..4 {
        let x = vec![k as f64 * PI / 2.0, 0.0];
        let s = snap(m, pts, &x).unwrap();
        sources.push(s);
        for &d in lengths {
            for a in 0..8 {
                let th = a as f64 * PI / 4.0;
                let t = snap(m, pts, &m.canonical(&[x[0] + d * th.cos(), x[1] + d * th.sin()])).unwrap();
                targets.push(t);
                pairs.push((s, t));
            }
        }
    }
    targets.sort_unstable();
    targets.dedup();
    (sources, targets, pairs)
}

#[test]
fn strong_ratio_on_the_flat_torus() {
    let m = torus2();
    let f0 = WeightField::constant(0.0);
    let (pts, g) = flat_graph(&m, &f0);
    let (sources, targets, pairs) = offset_pairs(&m, &pts, &[0.4, 0.8]);
    let dm = shortest_paths_to(&g, &sources, &targets).unwrap();
    let r = strong_ratio(&m, &f0, &pts, &dm, &pairs, 1.0, 100, 3).unwrap();
    // Axis pairs are exact on the lattice; ρ = d₀/√(π d₀²).
    assert!(close(r.theta, PI.sqrt(), 0.03), "{r:?}");
    assert!(r.theta >= 1.0 && r.theta_centered >= 1.0);
    assert!(close(r.theta_centered, 2.0 / PI.sqrt(), 0.03), "{r:?}");
    let c = 0.9;
    let fc = WeightField::constant(c);
    let gc = build_graph(&m, &pts, g.eps, &fc, Estimator::DEFAULT_LINE, 100, 0).unwrap();
    let dc = shortest_paths_to(&gc, &sources, &targets).unwrap();
    let rc = strong_ratio(&m, &fc, &pts, &dc, &pairs, 1.0, 100, 3).unwrap();
    assert!(close(rc.theta, r.theta, 1e-10) && close(rc.theta_centered, r.theta_centered, 1e-10));
    // Everything beyond eta is skipped; pairs outside the matrix are errors.
    let none = strong_ratio(&m, &f0, &pts, &dm, &pairs, 0.1, 100, 3);
    assert!(none.is_err());
    assert!(strong_ratio(&m, &f0, &pts, &dm, &[(targets[0], sources[0])], 1.0, 100, 3).is_err());
}

#[test]
fn biholder_fit_of_the_flat_metric() {
    let m = torus2();
    let pts = m.lattice(0.3, 10_000).unwrap();
    let nodes: Vec<usize> = (0..pts.len()).step_by(7).collect();
    let d0 = d0_matrix(&m, &pts, &nodes, &nodes).unwrap();
    let fit = biholder_fit(&d0, &d0, m.volume(), 2).unwrap();
    assert!((fit.slope - 1.0).abs() < 0.02, "{fit:?}");
    assert_eq!(fit.alpha_low, 1.0);
    let c = 0.6f64;
    let mut scaled = d0.clone();
    scaled.values.iter_mut().for_each(|v| *v *= c.exp());
    let fs = biholder_fit(&scaled, &d0, m.volume() * (2.0 * c).exp(), 2).unwrap();
    assert!(close(fs.slope, fit.slope, 1e-10) && close(fs.constant, fit.constant, 1e-10));
    let few = d0_matrix(&m, &pts, &nodes[..3], &nodes[..3]).unwrap();
    assert!(matches!(biholder_fit(&few, &few, 1.0, 2), Err(conflab::Error::Sampling(_))));
}

#[test]
fn holder_seminorms() {
    let m = torus2();
    let pts = m.grid(&[64, 64], 1 << 20).unwrap();
    let nodes: Vec<usize> = (0..pts.len()).step_by(97).collect();
    let d0 = d0_matrix(&m, &pts, &nodes, &nodes).unwrap();
    let s = holder_seminorm(&d0, &d0, 1.0).unwrap();
    assert!(s <= 1.0 + 1e-12 && s >= 0.99, "{s}");
    assert_eq!(holder_seminorm_diff(&d0, &d0, &d0, 0.5).unwrap(), 0.0);
    // Lipschitz envelope: d_ℓ ≤ max e^f · d₀ with max e^f = √(3/2).
    let envelope = 1.5f64.sqrt();
    for ell in [1u32, 2, 4] {
        let f = WeightField::burago(ell);
        let g = build_graph(&m, &pts, 5.0 * pts.spacing, &f, Estimator::DEFAULT_LINE, 100, 0).unwrap();
        let d = shortest_paths_to(&g, &nodes, &nodes).unwrap();
        let s = holder_seminorm(&d, &d0, 1.0).unwrap();
        assert!(s <= envelope * 1.03, "ℓ = {ell}: {s}");
    }
}

#[test]
fn isoperimetric_ratios() {
    let m = torus2();
    let disc = |x: f64, y: f64, r: f64| Domain::Ball {
        center: Point(vec![x, y]),
        radius: r,
    };
    let domains = vec![disc(1.0, 1.0, 0.5), disc(3.0, 2.0, 1.5)];
    let flat = isoperimetric_ratio(&m, &WeightField::constant(0.0), &domains, 200, 1).unwrap();
    for row in &flat.rows {
        assert!(close(row.ratio, 2.0 * PI.sqrt(), 0.02), "{row:?}");
    }
    let square = Domain::Box {
        lo: vec![0.5, 0.5],
        hi: vec![1.5, 1.5],
    };
    let sq = isoperimetric_ratio(&m, &WeightField::constant(0.0), &[square.clone()], 200, 1).unwrap();
    assert!(close(sq.inf, 4.0, 1e-6), "{sq:?}");
    let shifted = isoperimetric_ratio(&m, &WeightField::constant(1.3), &domains, 200, 1).unwrap();
    for (a, b) in flat.rows.iter().zip(&shifted.rows) {
        assert!(close(b.ratio, a.ratio, 1e-10));
    }
    let bound = 2.0 * PI.sqrt() * 0.5f64.sqrt() / 1.5f64.sqrt();
    let mut discs = Vec::new();
    for k in 0..8 {
        for r in [0.3, 0.8, 1.5] {
            discs.push(disc(k as f64 * PI / 4.0, 0.0, r));
        }
    }
    discs.push(square);
    let b = isoperimetric_ratio(&m, &WeightField::burago(1), &discs, 400, 2).unwrap();
    assert!(b.inf > bound, "{} vs {bound}", b.inf);
    assert!(b.rows.iter().all(|r| r.ratio > 0.5 * 2.0 * PI.sqrt()));
    let too_big = Domain::Box {
        lo: vec![0.0, 0.0],
        hi: vec![2.0 * PI, 4.0],
    };
    assert!(isoperimetric_ratio(&m, &WeightField::constant(0.0), &[too_big], 200, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn constants_are_monotone_in_their_exponent(
        q1 in 1.1f64..3.0, dq in 0.1f64..3.0, p1 in 1.1f64..3.0, dp in 0.1f64..3.0, seed in 0u64..1000,
    ) {
        let m = torus2();
        let s = BallSampler::random(&m, 3, vec![0.3, 0.9], 1.0, seed).unwrap();
        let f = WeightField::burago(2);
        let rh = reverse_holder_profile(&m, &f, &[q1, q1 + dq], &s, 100).unwrap();
        let ap = ap_profile(&m, &f, &[p1, p1 + dp], &s, 100).unwrap();
        prop_assert!(rh[1].value >= rh[0].value * (1.0 - 1e-12));
        prop_assert!(ap[1].value <= ap[0].value * (1.0 + 1e-12));
        prop_assert!(rh[0].value >= 1.0 && ap[1].value >= 1.0);
    }
}
