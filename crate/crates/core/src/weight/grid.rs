use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{LatticeLayout, Manifold};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    #[default]
    Multilinear,
    /// Separable Catmull–Rom cubic convolution (C¹).
    Tricubic,
}

/// Samples of `f` on the nodes of a torus or box lattice, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub manifold: Manifold,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(manifold: Manifold, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let g = Self {
            manifold,
            shape,
            values,
        };
        g.check()?;
        Ok(g)
    }

    /// Samples `f` at the nodes of the grid with the given shape.
    pub fn from_fn(manifold: Manifold, shape: Vec<usize>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let probe = Self {
            manifold,
            shape,
            values: Vec::new(),
        };
        let layout = probe.layout()?;
        let total: usize = probe.shape.iter().product();
        let n = probe.shape.len();
        let mut idx = vec![0usize; n];
        let mut x = vec![0.0; n];
        let mut values = Vec::with_capacity(total);
        for k in 0..total {
            layout.multi_index(k, &mut idx);
            for a in 0..n {
                x[a] = layout.origin[a] + idx[a] as f64 * layout.steps[a];
            }
            values.push(f(&x));
        }
        Self::new(probe.manifold, probe.shape, values)
    }

    fn check(&self) -> Result<()> {
        let n = self.manifold.dim();
        if self.shape.len() != n {
            return Err(Error::Format(format!(
                "grid shape has {} axes, manifold has dimension {n}",
                self.shape.len()
            )));
        }
        let min = if self.manifold.is_flat() && matches!(self.manifold, Manifold::Box { .. }) { 2 } else { 1 };
        if self.shape.iter().any(|&s| s < min) {
            return Err(Error::Format("grid axes too short".into()));
        }
        if matches!(self.manifold, Manifold::Sphere { .. }) {
            return Err(Error::Unsupported("grid fields live on tori and boxes only".into()));
        }
        let total: usize = self.shape.iter().product();
        if !self.values.is_empty() || total == 0 {
            if self.values.len() != total {
                return Err(Error::Format(format!(
                    "grid expects {total} values, found {}",
                    self.values.len()
                )));
            }
            if self.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format("grid values must be finite".into()));
            }
        }
        Ok(())
    }

    /// Node layout: a torus axis of `N` nodes has step `P/N`; a box axis of
    /// `N` nodes spans both endpoints.
    pub fn layout(&self) -> Result<LatticeLayout> {
        match &self.manifold {
            Manifold::Torus { periods } => Ok(LatticeLayout {
                shape: self.shape.clone(),
                steps: periods.iter().zip(&self.shape).map(|(p, s)| p / *s as f64).collect(),
                origin: vec![0.0; periods.len()],
                periodic: true,
            }),
            Manifold::Box { extents } => Ok(LatticeLayout {
                shape: self.shape.clone(),
                steps: extents
                    .iter()
                    .zip(&self.shape)
                    .map(|([a, b], s)| (b - a) / (*s as f64 - 1.0))
                    .collect(),
                origin: extents.iter().map(|[a, _]| *a).collect(),
                periodic: false,
            }),
            Manifold::Sphere { .. } => Err(Error::Unsupported("grid fields live on tori and boxes only".into())),
        }
    }

    pub fn steps(&self) -> Vec<f64> {
        self.layout().map(|l| l.steps).unwrap_or_default()
    }

    fn node(&self, idx: &[isize], periodic: bool) -> f64 {
        let mut k = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            let s = self.shape[a] as isize;
            let j = if periodic { i.rem_euclid(s) } else { i.clamp(0, s - 1) };
            k = k * self.shape[a] + j as usize;
        }
        self.values[k]
    }

    pub fn interpolate(&self, x: &[f64], order: Interpolation) -> f64 {
        let layout = match self.layout() {
            Ok(l) => l,
            Err(_) => return f64::NAN,
        };
        let n = self.shape.len();
        let mut base = vec![0isize; n];
        let mut frac = vec![0.0; n];
        for a in 0..n {
            let mut s = (x[a] - layout.origin[a]) / layout.steps[a];
            if !layout.periodic {
                s = s.clamp(0.0, (self.shape[a] - 1) as f64);
            }
            let fl = s.floor();
            base[a] = fl as isize;
            frac[a] = s - fl;
            if !layout.periodic && base[a] == self.shape[a] as isize - 1 && self.shape[a] > 1 {
                base[a] -= 1;
                frac[a] = 1.0;
            }
        }
        let (offsets, weights): (Vec<isize>, Vec<Vec<f64>>) = match order {
            Interpolation::Multilinear => (vec![0, 1], frac.iter().map(|t| vec![1.0 - t, *t]).collect()),
            Interpolation::Tricubic => (vec![-1, 0, 1, 2], frac.iter().map(|&t| catmull_rom(t).to_vec()).collect()),
        };
        let m = offsets.len();
        let total = m.pow(n as u32);
        let mut idx = vec![0isize; n];
        let mut acc = 0.0;
        for code in 0..total {
            let mut c = code;
            let mut w = 1.0;
            for a in 0..n {
                let o = c % m;
                c /= m;
                idx[a] = base[a] + offsets[o];
                w *= weights[a][o];
            }
            if w != 0.0 {
                acc += w * self.node(&idx, layout.periodic);
            }
        }
        acc
    }
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}
