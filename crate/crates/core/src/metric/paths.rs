use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::graph::{EpsGraph, Estimator};
use crate::error::{Error, Result};
use crate::manifold::Manifold;
use crate::weight::WeightField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub eps: f64,
    pub estimator: Estimator,
    pub seed: u64,
}

/// Graph distances from `sources` (rows) to `targets` (columns), stored
/// row-major. Values are raw chain sums; [`DistanceMatrix::metric`] applies
/// the estimator calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub sources: Vec<usize>,
    pub targets: Vec<usize>,
    pub values: Vec<f64>,
    pub provenance: Provenance,
}

impl DistanceMatrix {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.targets.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let t = self.targets.len();
        &self.values[row * t..(row + 1) * t]
    }

    /// `d_f` estimate between row and column.
    pub fn metric(&self, row: usize, col: usize) -> f64 {
        self.get(row, col) * self.provenance.estimator.calibration()
    }

    pub fn row_of(&self, node: usize) -> Option<usize> {
        self.sources.iter().position(|&s| s == node)
    }

    pub fn col_of(&self, node: usize) -> Option<usize> {
        self.targets.iter().position(|&s| s == node)
    }

    /// Largest violation of symmetry and of the triangle inequality over
    /// the triples represented when sources and targets coincide. Checks
    /// all triples up to 200 nodes, then a deterministic sample.
    pub fn metric_defects(&self) -> (f64, f64) {
        let n = self.sources.len();
        if self.targets != self.sources {
            return (0.0, 0.0);
        }
        let mut asym: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                asym = asym.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        let mut tri: f64 = 0.0;
        let check = |i: usize, j: usize, k: usize| self.get(i, k) - self.get(i, j) - self.get(j, k);
        if n <= 200 {
            for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        tri = tri.max(check(i, j, k));
                    }
                }
            }
        } else {
            let mut s: u64 = 0x2545_F491_4F6C_DD1D;
            for _ in 0..1_000_000 {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                let (i, j, k) = ((s % n as u64) as usize, ((s >> 21) % n as u64) as usize, ((s >> 42) % n as u64) as usize);
                tri = tri.max(check(i, j, k));
            }
        }
        (asym, tri)
    }
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
struct Key(f64);
impl Eq for Key {}
impl Ord for Key {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Dijkstra from `source`; stops once every node in `stop_after` is settled
/// (all nodes when empty).
pub fn dijkstra(g: &EpsGraph, source: usize, stop_after: &[usize]) -> Vec<f64> {
    let n = g.node_count();
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut wanted = vec![false; n];
    let mut remaining = 0usize;
    for &t in stop_after {
        if !wanted[t] {
            wanted[t] = true;
            remaining += 1;
        }
    }
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(Reverse((Key(0.0), source)));
    while let Some(Reverse((Key(d), i))) = heap.pop() {
        if done[i] {
            continue;
        }
        done[i] = true;
        if wanted[i] {
            remaining -= 1;
            if remaining == 0 {
                break;
            }
        }
        g.for_each_neighbor(i, |j, w| {
            let nd = d + w;
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Reverse((Key(nd), j)));
            }
        });
    }
    dist
}

/// Exact graph distances from each source to every node.
pub fn shortest_paths(g: &EpsGraph, sources: &[usize]) -> Result<DistanceMatrix> {
    let all: Vec<usize> = (0..g.node_count()).collect();
    shortest_paths_to(g, sources, &all)
}

/// Exact graph distances from each source to the listed targets.
pub fn shortest_paths_to(g: &EpsGraph, sources: &[usize], targets: &[usize]) -> Result<DistanceMatrix> {
    let n = g.node_count();
    if let Some(bad) = sources.iter().chain(targets).find(|&&i| i >= n) {
        return Err(Error::input(format!("node index {bad} out of range ({n} nodes)")));
    }
    let full = targets.len() == n;
    let rows: Vec<Vec<f64>> = sources
        .par_iter()
        .map(|&s| {
            let d = dijkstra(g, s, if full { &[] } else { targets });
            targets.iter().map(|&t| d[t]).collect()
        })
        .collect();
    Ok(DistanceMatrix {
        sources: sources.to_vec(),
        targets: targets.to_vec(),
        values: rows.concat(),
        provenance: Provenance {
            eps: g.eps,
            estimator: g.estimator,
            seed: g.seed,
        },
    })
}

/// Per-node `μ₀` cell volumes: lattice cells (half and quarter cells on box
/// faces and corners), otherwise an equal share of the total volume.
pub fn cell_volumes(m: &Manifold, g: &EpsGraph) -> Vec<f64> {
    let n = g.node_count();
    match &g.points.layout {
        Some(layout) => {
            let base: f64 = layout.steps.iter().product();
            let mut idx = vec![0usize; layout.shape.len()];
            (0..n)
                .map(|i| {
                    if layout.periodic {
                        return base;
                    }
                    layout.multi_index(i, &mut idx);
                    let faces = idx.iter().zip(&layout.shape).filter(|(v, s)| **v == 0 || **v + 1 == **s).count();
                    base * 0.5f64.powi(faces as i32)
                })
                .collect()
        }
        None => vec![m.volume() / n as f64; n],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FBall {
    pub center: usize,
    pub radius: f64,
    pub members: Vec<usize>,
    pub mass: f64,
    /// Radius reaches past every represented node.
    pub coverage_warning: bool,
}

/// Nodes within `d_f ≤ r_f` of `center` and their `μ_f` cell mass.
pub fn f_ball(
    m: &Manifold,
    field: &WeightField,
    g: &EpsGraph,
    dmat: &DistanceMatrix,
    center: usize,
    r_f: f64,
) -> Result<FBall> {
    let masses = node_masses(m, field, g);
    f_ball_with(g, dmat, &masses, center, r_f)
}

/// `e^{nf(x_i)}` times the cell volume of each node.
pub fn node_masses(m: &Manifold, field: &WeightField, g: &EpsGraph) -> Vec<f64> {
    let cells = cell_volumes(m, g);
    (0..g.node_count())
        .into_par_iter()
        .map(|i| field.w(m, g.points.get(i)) * cells[i])
        .collect()
}

/// [`f_ball`] with precomputed node masses.
pub fn f_ball_with(g: &EpsGraph, dmat: &DistanceMatrix, masses: &[f64], center: usize, r_f: f64) -> Result<FBall> {
    if !(r_f >= 0.0) {
        return Err(Error::input("f-ball radius must be nonnegative"));
    }
    let row = dmat
        .row_of(center)
        .ok_or_else(|| Error::input(format!("distance matrix has no row for node {center}")))?;
    if masses.len() != g.node_count() {
        return Err(Error::input("node masses do not match the graph"));
    }
    let mut members = Vec::new();
    let mut mass = 0.0;
    let mut farthest: f64 = 0.0;
    for (col, &t) in dmat.targets.iter().enumerate() {
        let d = dmat.metric(row, col);
        farthest = farthest.max(d);
        if d <= r_f {
            members.push(t);
            mass += masses[t];
        }
    }
    Ok(FBall {
        center,
        radius: r_f,
        members,
        mass,
        coverage_warning: r_f > farthest,
    })
}
