use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{BallSpec, LatticeLayout, Manifold, PointSet};
use crate::quad::{gauss_legendre_unit, unit_ball_volume};
use crate::weight::WeightField;

/// Lattices in more dimensions than this use the explicit edge list.
const MAX_STENCIL_DIM: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Estimator {
    /// `δ_f(x, y) = (μ_f(B_xy)/ω_n)^{1/n}` over the ball on the segment.
    ChainBall,
    /// `∫ e^f` along the `d₀`-segment with a `k`-point Gauss rule.
    RiemannLine { k: usize },
}

impl Estimator {
    pub const DEFAULT_LINE: Estimator = Estimator::RiemannLine { k: 4 };

    /// Factor turning graph sums into `d_f`. A chain-ball edge over a flat
    /// segment of length `L` weighs `L/2`, so chain sums are half the
    /// Riemannian length.
    pub fn calibration(&self) -> f64 {
        match self {
            Estimator::ChainBall => 2.0,
            Estimator::RiemannLine { .. } => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
enum Topology {
    /// Lattice neighbours by half-stencil offset; edge `i·H + k` joins node
    /// `i` to `i + offsets[k]`.
    Stencil {
        shape: Vec<usize>,
        strides: Vec<usize>,
        periodic: bool,
        offsets: Vec<Vec<isize>>,
        lengths: Vec<f64>,
        /// Flat index change per offset, valid away from the boundary.
        deltas: Vec<isize>,
        reach: Vec<isize>,
    },
    List {
        start: Vec<usize>,
        adj: Vec<(u32, u32)>,
        pairs: Vec<(u32, u32)>,
        lengths: Vec<f64>,
    },
}

/// ε-proximity graph with estimator edge weights. Immutable once built.
#[derive(Debug, Clone)]
pub struct EpsGraph {
    pub manifold: Manifold,
    pub points: PointSet,
    pub eps: f64,
    pub estimator: Estimator,
    pub seed: u64,
    topology: Topology,
    /// Per edge id; NaN marks stencil slots that fall off a box.
    weights: Vec<f64>,
}

impl EpsGraph {
    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    pub fn edge_count(&self) -> usize {
        self.weights.iter().filter(|w| !w.is_nan()).count()
    }

    pub fn is_stencil(&self) -> bool {
        matches!(self.topology, Topology::Stencil { .. })
    }

    /// All edges as `(i, j, d0_ij, weight)` with `i < j` for list graphs
    /// and `j = i + offset` for lattices.
    pub fn edges(&self) -> Vec<(usize, usize, f64, f64)> {
        let mut out = Vec::new();
        match &self.topology {
            Topology::Stencil { lengths, .. } => {
                let h = lengths.len();
                for (id, &w) in self.weights.iter().enumerate() {
                    if w.is_nan() {
                        continue;
                    }
                    let (i, k) = (id / h, id % h);
                    let j = self.stencil_target(i, k, 1).expect("edge slot is valid");
                    out.push((i, j, lengths[k], w));
                }
            }
            Topology::List { pairs, lengths, .. } => {
                for (id, &(i, j)) in pairs.iter().enumerate() {
                    out.push((i as usize, j as usize, lengths[id], self.weights[id]));
                }
            }
        }
        out
    }

    fn stencil_target(&self, i: usize, k: usize, sign: isize) -> Option<usize> {
        let Topology::Stencil {
            shape,
            strides,
            periodic,
            offsets,
            ..
        } = &self.topology
        else {
            return None;
        };
        let mut j = 0usize;
        let mut rest = i;
        for a in 0..shape.len() {
            let ia = (rest / strides[a]) as isize;
            rest %= strides[a];
            let s = shape[a] as isize;
            let mut ja = ia + sign * offsets[k][a];
            if *periodic {
                ja = ja.rem_euclid(s);
            } else if ja < 0 || ja >= s {
                return None;
            }
            j += ja as usize * strides[a];
        }
        Some(j)
    }

    /// Calls `visit(j, w)` for every neighbour `j` of node `i`.
    #[inline]
    pub fn for_each_neighbor(&self, i: usize, mut visit: impl FnMut(usize, f64)) {
        match &self.topology {
            Topology::Stencil {
                shape,
                strides,
                periodic,
                offsets,
                lengths,
                deltas,
                reach,
            } => {
                let n = shape.len();
                let h = lengths.len();
                let mut idx = [0isize; MAX_STENCIL_DIM];
                let mut rest = i;
                let mut interior = true;
                for a in 0..n {
                    idx[a] = (rest / strides[a]) as isize;
                    rest %= strides[a];
                    interior &= idx[a] >= reach[a] && idx[a] + reach[a] < shape[a] as isize;
                }
                if interior {
                    let base = i as isize;
                    for (k, &d) in deltas.iter().enumerate() {
                        visit((base + d) as usize, self.weights[i * h + k]);
                        let j = (base - d) as usize;
                        visit(j, self.weights[j * h + k]);
                    }
                    return;
                }
                for (k, o) in offsets.iter().enumerate() {
                    for sign in [1isize, -1] {
                        let mut j = 0usize;
                        let mut ok = true;
                        for a in 0..n {
                            let s = shape[a] as isize;
                            let mut ja = idx[a] + sign * o[a];
                            if ja < 0 || ja >= s {
                                if *periodic {
                                    ja = ja.rem_euclid(s);
                                } else {
                                    ok = false;
                                    break;
                                }
                            }
                            j += ja as usize * strides[a];
                        }
                        if !ok {
                            continue;
                        }
                        let id = if sign > 0 { i * h + k } else { j * h + k };
                        visit(j, self.weights[id]);
                    }
                }
            }
            Topology::List { start, adj, .. } => {
                for &(j, id) in &adj[start[i]..start[i + 1]] {
                    visit(j as usize, self.weights[id as usize]);
                }
            }
        }
    }
}

/// Builds the ε-graph on `points` with edges `d₀ ≤ eps` and estimator
/// weights. Lattice point sets use a stencil; others a bucketed search.
pub fn build_graph(
    m: &Manifold,
    points: &PointSet,
    eps: f64,
    field: &WeightField,
    estimator: Estimator,
    budget: usize,
    seed: u64,
) -> Result<EpsGraph> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::input("eps must be positive"));
    }
    if points.len() < 2 {
        return Err(Error::input("a graph needs at least two points"));
    }
    if eps < 3.0 * points.spacing * (1.0 - 1e-9) {
        return Err(Error::input(format!(
            "eps {eps} is below 3 × spacing {} needed for connectivity",
            points.spacing
        )));
    }
    if let Estimator::RiemannLine { k } = estimator {
        if k == 0 {
            return Err(Error::input("RiemannLine needs at least one quadrature point"));
        }
    }
    field.validate(m)?;
    for p in points.iter() {
        m.check_point(p)?;
    }
    let topology = match &points.layout {
        Some(layout) if layout.shape.len() <= MAX_STENCIL_DIM => stencil(layout, eps)?,
        _ => edge_list(m, points, eps),
    };
    let mut g = EpsGraph {
        manifold: m.clone(),
        points: points.clone(),
        eps,
        estimator,
        seed,
        topology,
        weights: Vec::new(),
    };
    g.weights = edge_weights(&g, field, budget)?;
    check_connected(&g)?;
    Ok(g)
}

fn stencil(layout: &LatticeLayout, eps: f64) -> Result<Topology> {
    let n = layout.shape.len();
    let reach: Vec<isize> = layout.steps.iter().map(|s| (eps / s * (1.0 + 1e-12)).floor() as isize).collect();
    let mut offsets = Vec::new();
    let mut lengths = Vec::new();
    let widths: Vec<usize> = reach.iter().map(|r| 2 * *r as usize + 1).collect();
    let count: usize = widths.iter().product();
    let mut o = vec![0isize; n];
    for code in 0..count {
        let mut rest = code;
        for a in (0..n).rev() {
            o[a] = (rest % widths[a]) as isize - reach[a];
            rest /= widths[a];
        }
        if !o.iter().find(|v| **v != 0).is_some_and(|v| *v > 0) {
            continue;
        }
        let len = o
            .iter()
            .zip(&layout.steps)
            .map(|(v, s)| (*v as f64 * s).powi(2))
            .sum::<f64>()
            .sqrt();
        if len <= eps * (1.0 + 1e-12) {
            offsets.push(o.clone());
            lengths.push(len);
        }
    }
    if layout.periodic {
        for (a, (&r, &s)) in reach.iter().zip(&layout.shape).enumerate() {
            if 2 * r as usize >= s {
                return Err(Error::input(format!(
                    "eps {eps} reaches half way round axis {a}; refine the lattice or shrink eps"
                )));
            }
        }
    }
    let mut strides = vec![1usize; n];
    for a in (0..n.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * layout.shape[a + 1];
    }
    let deltas = offsets
        .iter()
        .map(|o| o.iter().zip(&strides).map(|(v, s)| v * *s as isize).sum())
        .collect();
    Ok(Topology::Stencil {
        shape: layout.shape.clone(),
        strides,
        periodic: layout.periodic,
        offsets,
        lengths,
        deltas,
        reach,
    })
}

fn edge_list(m: &Manifold, points: &PointSet, eps: f64) -> Topology {
    let candidates = neighbor_pairs(m, points, eps);
    let n = points.len();
    let mut degree = vec![0usize; n + 1];
    for &(i, j, _) in &candidates {
        degree[i as usize] += 1;
        degree[j as usize] += 1;
    }
    let mut start = vec![0usize; n + 1];
    for i in 0..n {
        start[i + 1] = start[i] + degree[i];
    }
    let mut fill = start.clone();
    let mut adj = vec![(0u32, 0u32); start[n]];
    let mut pairs = Vec::with_capacity(candidates.len());
    let mut lengths = Vec::with_capacity(candidates.len());
    for (id, &(i, j, d)) in candidates.iter().enumerate() {
        adj[fill[i as usize]] = (j, id as u32);
        fill[i as usize] += 1;
        adj[fill[j as usize]] = (i, id as u32);
        fill[j as usize] += 1;
        pairs.push((i, j));
        lengths.push(d);
    }
    Topology::List {
        start,
        adj,
        pairs,
        lengths,
    }
}

/// All pairs `i < j` with `d₀ ≤ eps`, found through a cell hash.
fn neighbor_pairs(m: &Manifold, points: &PointSet, eps: f64) -> Vec<(u32, u32, f64)> {
    let n = points.len();
    let mut out = Vec::new();
    let keep = |i: usize, j: usize, out: &mut Vec<(u32, u32, f64)>| {
        let d = m.d0(points.get(i), points.get(j));
        if d <= eps * (1.0 + 1e-12) {
            out.push((i as u32, j as u32, d));
        }
    };
    let cells_ok = match m {
        Manifold::Torus { periods } => periods.iter().all(|p| (p / eps).floor() >= 3.0),
        _ => true,
    };
    if !cells_ok || n <= 2000 {
        for i in 0..n {
            for j in i + 1..n {
                keep(i, j, &mut out);
            }
        }
        return out;
    }
    // Torus: cells in the chart with wrap; box and sphere: ambient cells
    // (chords never exceed arcs).
    let (counts, size): (Option<Vec<i64>>, Vec<f64>) = match m {
        Manifold::Torus { periods } => {
            let c: Vec<i64> = periods.iter().map(|p| (p / eps).floor() as i64).collect();
            let s = periods.iter().zip(&c).map(|(p, c)| p / *c as f64).collect();
            (Some(c), s)
        }
        _ => (None, vec![eps; points.ambient_dim()]),
    };
    let key = |x: &[f64]| -> Vec<i64> {
        x.iter()
            .zip(&size)
            .enumerate()
            .map(|(a, (v, s))| {
                let k = (v / s).floor() as i64;
                match &counts {
                    Some(c) => k.rem_euclid(c[a]),
                    None => k,
                }
            })
            .collect()
    };
    let mut cells: HashMap<Vec<i64>, Vec<u32>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        cells.entry(key(p)).or_default().push(i as u32);
    }
    let dim = size.len();
    let mut shifts = vec![vec![]];
    for _ in 0..dim {
        shifts = shifts
            .into_iter()
            .flat_map(|s: Vec<i64>| {
                [-1i64, 0, 1].into_iter().map(move |d| {
                    let mut t = s.clone();
                    t.push(d);
                    t
                })
            })
            .collect();
    }
    for (i, p) in points.iter().enumerate() {
        let base = key(p);
        for s in &shifts {
            let mut k: Vec<i64> = base.iter().zip(s).map(|(b, d)| b + d).collect();
            if let Some(c) = &counts {
                for (v, c) in k.iter_mut().zip(c) {
                    *v = v.rem_euclid(*c);
                }
            }
            if let Some(list) = cells.get(&k) {
                for &j in list {
                    if (j as usize) > i {
                        keep(i, j as usize, &mut out);
                    }
                }
            }
        }
    }
    out.sort_unstable_by_key(|&(i, j, _)| (i, j));
    out.dedup_by_key(|e| (e.0, e.1));
    out
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the chain-ball quadrature for edge `id`.
pub fn edge_seed(seed: u64, id: usize) -> u64 {
    splitmix(seed ^ splitmix(id as u64))
}

fn edge_weights(g: &EpsGraph, field: &WeightField, budget: usize) -> Result<Vec<f64>> {
    let m = &g.manifold;
    let n = m.dim();
    let total = match &g.topology {
        Topology::Stencil { lengths, .. } => g.points.len() * lengths.len(),
        Topology::List { pairs, .. } => pairs.len(),
    };
    let endpoints = |id: usize| -> Option<(usize, usize, f64)> {
        match &g.topology {
            Topology::Stencil { lengths, .. } => {
                let h = lengths.len();
                g.stencil_target(id / h, id % h, 1).map(|j| (id / h, j, lengths[id % h]))
            }
            Topology::List { pairs, lengths, .. } => Some((pairs[id].0 as usize, pairs[id].1 as usize, lengths[id])),
        }
    };
    let (base, shift) = field.peel();
    let scale = shift.exp();
    let omega = unit_ball_volume(n);
    let rule = match g.estimator {
        Estimator::RiemannLine { k } => Some(gauss_legendre_unit(k)),
        Estimator::ChainBall => None,
    };
    let weights: Vec<Result<f64>> = (0..total)
        .into_par_iter()
        .map_init(
            || vec![0.0; g.points.ambient_dim()],
            |buf, id| {
                let Some((i, j, d)) = endpoints(id) else {
                    return Ok(f64::NAN);
                };
                let x = g.points.get(i);
                let y = g.points.get(j);
                let w = match &rule {
                    Some((nodes, wts)) => {
                        let mut s = 0.0;
                        for (t, wt) in nodes.iter().zip(wts) {
                            m.geodesic_point(x, y, *t, buf);
                            s += wt * base.f(m, buf).exp();
                        }
                        scale * s * d
                    }
                    None => {
                        let ball = BallSpec::new(m.midpoint(x, y)?, 0.5 * d);
                        let mass = field.mu_f_ball(m, &ball, budget, edge_seed(g.seed, id))?;
                        (mass.value / omega).powf(1.0 / n as f64)
                    }
                };
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::Evaluation(format!("edge {i}–{j} has weight {w}")));
                }
                Ok(w)
            },
        )
        .collect();
    weights.into_iter().collect()
}

fn check_connected(g: &EpsGraph) -> Result<()> {
    let n = g.node_count();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        g.for_each_neighbor(i, |j, _| {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
            }
        });
    }
    let mut sizes: HashMap<usize, usize> = HashMap::new();
    for i in 0..n {
        *sizes.entry(find(&mut parent, i)).or_default() += 1;
    }
    if sizes.len() > 1 {
        let mut s: Vec<usize> = sizes.into_values().collect();
        s.sort_unstable_by(|a, b| b.cmp(a));
        return Err(Error::Construction(format!(
            "ε-graph is disconnected: {} components, sizes {:?}{}",
            s.len(),
            &s[..s.len().min(8)],
            if s.len() > 8 { " …" } else { "" }
        )));
    }
    Ok(())
}
