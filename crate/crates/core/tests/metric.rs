use std::f64::consts::PI;

use conflab::metric::*;
use conflab::{Manifold, Point, PointSet, WeightField};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn torus2() -> Manifold {
    Manifold::flat_torus(2).unwrap()
}

fn two_nodes(m: &Manifold, a: Vec<f64>, b: Vec<f64>) -> PointSet {
    let d = m.d0(&a, &b);
    PointSet::from_points(&[Point(a), Point(b)], d / 3.0).unwrap()
}

#[test]
fn flat_edge_weights_have_closed_forms() {
    let m = torus2();
    let pts = two_nodes(&m, vec![1.0, 1.0], vec![1.3, 1.4]);
    let f = WeightField::constant(0.0);
    let chain = build_graph(&m, &pts, 0.5, &f, Estimator::ChainBall, 100, 3).unwrap();
    let line = build_graph(&m, &pts, 0.5, &f, Estimator::DEFAULT_LINE, 100, 3).unwrap();
    let (_, _, d0, wc) = chain.edges()[0];
    let (_, _, _, wl) = line.edges()[0];
    assert!((d0 - 0.5).abs() < 1e-15);
    assert!((wc - 0.25).abs() < 1e-12, "{wc}");
    assert!((wl - 0.5).abs() < 1e-14, "{wl}");
    // Single edge: distance is the edge weight; chain sums are half the
    // line sums, and the calibrated metrics agree.
    let dc = shortest_paths(&chain, &[0]).unwrap();
    let dl = shortest_paths(&line, &[0]).unwrap();
    assert_eq!(dc.get(0, 1), wc);
    assert_eq!(dl.get(0, 1), wl);
    assert!((2.0 * dc.get(0, 1) - dl.get(0, 1)).abs() < 1e-12);
    assert!((dc.metric(0, 1) - dl.metric(0, 1)).abs() < 1e-12);
}

#[test]
fn constant_shift_scales_weights() {
    let m = torus2();
    let pts = m.lattice(0.2, 10_000).unwrap();
    for est in [Estimator::ChainBall, Estimator::DEFAULT_LINE] {
        let g0 = build_graph(&m, &pts, 0.6, &WeightField::burago(1), est, 100, 11).unwrap();
        let c = 0.7;
        let g1 = build_graph(&m, &pts, 0.6, &WeightField::burago(1).scaled(c), est, 100, 11).unwrap();
        for ((_, _, _, a), (_, _, _, b)) in g0.edges().iter().zip(g1.edges()).take(500) {
            assert!((b / a - c.exp()).abs() < 1e-12 * c.exp());
        }
        let d0 = shortest_paths(&g0, &[0, 17]).unwrap();
        let d1 = shortest_paths(&g1, &[0, 17]).unwrap();
        for (a, b) in d0.values.iter().zip(&d1.values) {
            assert!((b - c.exp() * a).abs() <= 1e-10 * b.abs().max(1e-300));
        }
    }
}

#[test]
fn flat_lattice_distance_overshoots_by_little() {
    let m = torus2();
    let pts = m.lattice(0.05, 100_000).unwrap();
    let g = build_graph(&m, &pts, 0.15, &WeightField::constant(0.0), Estimator::DEFAULT_LINE, 100, 0).unwrap();
    let s = snap(&m, &pts, &[0.0, 0.0]).unwrap();
    let t = snap(&m, &pts, &[1.0, 0.0]).unwrap();
    let d = dijkstra(&g, s, &[t])[t];
    let d0 = m.d0(pts.get(s), pts.get(t));
    assert!((d - 1.0).abs() < 0.03 && d >= d0 - 1e-12, "{d} {d0}");
}

#[test]
fn graph_construction_rejects_sparse_eps_and_reports_components() {
    let m = torus2();
    let pts = m.lattice(0.1, 100_000).unwrap();
    let err = build_graph(&m, &pts, 0.2, &WeightField::constant(0.0), Estimator::DEFAULT_LINE, 100, 0).unwrap_err();
    assert!(err.to_string().contains("3 × spacing"), "{err}");
    let far = PointSet::from_points(&[Point(vec![0.0, 0.0]), Point(vec![0.1, 0.0]), Point(vec![3.0, 3.0])], 0.05).unwrap();
    let err = build_graph(&m, &far, 0.15, &WeightField::constant(0.0), Estimator::DEFAULT_LINE, 100, 0).unwrap_err();
    assert!(err.to_string().contains("2 components"), "{err}");
}

#[test]
fn refined_distances_extrapolate() {
    let m = torus2();
    let opts = RefineOptions::default();
    let pairs = vec![
        (Point(vec![0.0, 0.0]), Point(vec![PI / 2.0, PI / 4.0])),
        (Point(vec![1.0, 2.0]), Point(vec![1.0 + PI / 4.0, 2.0 - 3.0 * PI / 8.0])),
    ];
    for c in [0.0, 0.5] {
        let rep = refine_distance(&m, &WeightField::constant(c), &pairs, &[0.4, 0.2, 0.1], &opts).unwrap();
        for p in &rep.pairs {
            let want = c.exp() * p.d0;
            assert!((p.extrapolated / want - 1.0).abs() < 5e-3, "{p:?}");
        }
    }
    // The valley x₁ = 0 costs (1/2)^{1/2} per unit length.
    let valley = vec![(Point(vec![0.0, 0.0]), Point(vec![0.0, PI]))];
    let rep = refine_distance(&m, &WeightField::burago(1), &valley, &[0.3, 0.15, 0.075], &opts).unwrap();
    let want = PI / 2f64.sqrt();
    assert!((rep.pairs[0].extrapolated / want - 1.0).abs() < 0.01, "{rep:?}");
}

#[test]
fn extrapolation_recovers_power_law() {
    let eps = [0.4, 0.2, 0.1];
    let d: Vec<f64> = eps.iter().map(|e: &f64| 2.0 + 0.3 * e.powf(1.7)).collect();
    let (a, q, w) = extrapolate(&eps, &d);
    assert!((a - 2.0).abs() < 1e-10 && (q.unwrap() - 1.7).abs() < 1e-8 && w.is_none());
    let (a, _, w) = extrapolate(&eps, &[2.1, 2.0, 2.05]);
    assert_eq!(a, 2.05);
    assert!(w.is_some());
}

#[test]
fn chain_and_line_metrics_agree_for_smooth_fields() {
    let m = torus2();
    let opts = RefineOptions {
        ratio_growth: 1.0,
        ..RefineOptions::default()
    };
    let pairs = vec![
        (Point(vec![0.0, 0.0]), Point(vec![PI / 2.0, PI / 2.0])),
        (Point(vec![PI, 0.0]), Point(vec![PI, 1.5 * PI])),
        (Point(vec![0.5 * PI, PI]), Point(vec![1.5 * PI, 1.25 * PI])),
    ];
    let schedule = [0.8, 0.4, 0.2];
    let f = WeightField::burago(1);
    let line = refine_distance(&m, &f, &pairs, &schedule, &opts).unwrap();
    let chain = refine_distance(
        &m,
        &f,
        &pairs,
        &schedule,
        &RefineOptions {
            estimator: Estimator::ChainBall,
            ..opts
        },
    )
    .unwrap();
    for (a, b) in line.pairs.iter().zip(&chain.pairs) {
        assert!((a.extrapolated / b.extrapolated - 1.0).abs() < 0.03, "{a:?} {b:?}");
    }
}

#[test]
fn f_balls_on_the_flat_torus() {
    let m = torus2();
    let pts = m.lattice(0.05, 100_000).unwrap();
    let f = WeightField::constant(0.0);
    let g = build_graph(&m, &pts, 0.15, &f, Estimator::DEFAULT_LINE, 100, 0).unwrap();
    let center = snap(&m, &pts, &[PI, PI]).unwrap();
    let dm = shortest_paths(&g, &[center]).unwrap();
    // Within one edge, graph and d₀ balls coincide.
    let small = f_ball(&m, &f, &g, &dm, center, 0.14).unwrap();
    let mut by_d0: Vec<usize> = (0..pts.len()).filter(|&i| m.d0(pts.get(i), pts.get(center)) <= 0.14).collect();
    by_d0.sort_unstable();
    assert_eq!(small.members, by_d0);
    for r in [0.3, 0.5, 0.75, 1.0] {
        let b = f_ball(&m, &f, &g, &dm, center, r).unwrap();
        let ratio = b.mass / (r * r);
        assert!((ratio / PI - 1.0).abs() < 0.1, "r={r}: {ratio}");
        assert!(!b.coverage_warning);
    }
    let all = f_ball(&m, &f, &g, &dm, center, 100.0).unwrap();
    assert!(all.coverage_warning);
    assert_eq!(all.members.len(), pts.len());

    let b = WeightField::burago(3);
    let gb = build_graph(&m, &pts, 0.15, &b, Estimator::DEFAULT_LINE, 100, 0).unwrap();
    let db = shortest_paths(&gb, &[center]).unwrap();
    let total = f_ball(&m, &b, &gb, &db, center, 100.0).unwrap().mass;
    let exact = b.total_mass(&m, 1000, 0).unwrap().value;
    assert!((total / exact - 1.0).abs() < 0.02, "{total} {exact}");
}

#[test]
fn stable_norms() {
    let m = torus2();
    let opts = StableNormOptions {
        spacing: 0.1,
        ..StableNormOptions::default()
    };
    let t = [2.0 * PI, 4.0 * PI];
    let flat = stable_norm(&m, &WeightField::constant(0.0), &[1.0, 0.0], &t, &opts).unwrap();
    assert!((flat.extrapolated - 1.0).abs() < 0.01, "{flat:?}");
    let b = WeightField::burago(1);
    let e2 = stable_norm(&m, &b, &[0.0, 1.0], &t, &opts).unwrap();
    assert!((e2.extrapolated / 0.5f64.sqrt() - 1.0).abs() < 0.01, "{e2:?}");
    assert!(e2.corridor_delta.unwrap() < 1e-9);
    let e1 = stable_norm(&m, &b, &[1.0, 0.0], &t, &opts).unwrap();
    // (1/2π)∮√(1 − ½cos t) dt by the trapezoid rule, exact for periodic
    // analytic integrands.
    let oracle = (0..4096)
        .map(|i| (1.0 - 0.5 * (2.0 * PI * i as f64 / 4096.0).cos()).sqrt())
        .sum::<f64>()
        / 4096.0;
    assert!((e1.extrapolated / oracle - 1.0).abs() < 0.01, "{e1:?} {oracle}");
    let diag = stable_norm(&m, &b, &[1.0, 1.0], &t, &StableNormOptions { check_corridor: false, ..opts }).unwrap();
    assert!(diag.extrapolated <= e1.extrapolated + e2.extrapolated + 0.02);
}

#[test]
fn distance_matrix_files_round_trip() {
    let m = torus2();
    let pts = m.lattice(0.3, 10_000).unwrap();
    let g = build_graph(&m, &pts, 0.9, &WeightField::burago(2), Estimator::DEFAULT_LINE, 100, 5).unwrap();
    let dm = shortest_paths_to(&g, &[0, 3, 9], &[1, 2, 3, 4]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    write_distance_matrix(&dm, &path).unwrap();
    assert_eq!(read_distance_matrix(&path).unwrap(), dm);
    let csv = dir.path().join("d.csv");
    write_distance_csv(&dm, &csv).unwrap();
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("source,1,2,3,4\n"));
    assert_eq!(text.lines().count(), 4);
    std::fs::write(dir.path().join("d.f64le"), [0u8; 5]).unwrap();
    assert!(read_distance_matrix(&path).is_err());
}

fn cloud(seed: u64, count: usize) -> PointSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Point> = (0..count)
        .map(|_| Point(vec![rng.random::<f64>() * 2.0 * PI, rng.random::<f64>() * 2.0 * PI]))
        .collect();
    PointSet::from_points(&pts, 0.3).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn graph_distances_form_a_metric(seed in 0u64..1000, ell in 1u32..5) {
        let m = torus2();
        let pts = cloud(seed, 150);
        let f = WeightField::burago(ell);
        let g = match build_graph(&m, &pts, 1.2, &f, Estimator::DEFAULT_LINE, 100, seed) {
            Ok(g) => g,
            Err(_) => return Ok(()),
        };
        let all: Vec<usize> = (0..pts.len()).collect();
        let dm = shortest_paths(&g, &all).unwrap();
        let (asym, tri) = dm.metric_defects();
        prop_assert!(asym <= 1e-12 && tri <= 1e-12, "{asym} {tri}");
        prop_assert!(dm.values.iter().all(|v| *v >= 0.0));
        prop_assert!((0..pts.len()).all(|i| dm.get(i, i) == 0.0));
        // More edges never lengthen a line-integral path.
        let wide = build_graph(&m, &pts, 1.6, &f, Estimator::DEFAULT_LINE, 100, seed).unwrap();
        let dw = shortest_paths(&wide, &all).unwrap();
        prop_assert!(dw.values.iter().zip(&dm.values).all(|(a, b)| *a <= *b + 1e-12));
    }
}
