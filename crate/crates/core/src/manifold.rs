//! Background geometries: flat tori, Euclidean boxes and round spheres.
//!
//! Torus and box points are chart coordinates; sphere points are unit
//! vectors of the ambient `R^{n+1}` regardless of the radius, which only
//! scales lengths and volumes.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad::{self, AdaptiveOpts};

/// Default cap on the number of lattice points a single call may produce.
pub const DEFAULT_POINT_BUDGET: usize = 2_000_000;

const SPHERE_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Manifold {
    Torus { periods: Vec<f64> },
    Box { extents: Vec<[f64; 2]> },
    Sphere { dim: usize, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point(pub Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Self {
        Point(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }
}

impl std::ops::Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Point {
    fn from(v: Vec<f64>) -> Self {
        Point(v)
    }
}

/// Geodesic ball of `g₀` with radius in `d₀` units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSpec {
    pub center: Point,
    pub radius: f64,
}

impl BallSpec {
    pub fn new(center: impl Into<Point>, radius: f64) -> Self {
        Self {
            center: center.into(),
            radius,
        }
    }
}

/// Axis-aligned lattice layout, kept so graphs can use stencil neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeLayout {
    pub shape: Vec<usize>,
    pub steps: Vec<f64>,
    pub origin: Vec<f64>,
    pub periodic: bool,
}

impl LatticeLayout {
    pub fn index_of(&self, idx: &[usize]) -> usize {
        let mut k = 0;
        for (i, &s) in idx.iter().zip(&self.shape) {
            k = k * s + i;
        }
        k
    }

    pub fn multi_index(&self, mut k: usize, out: &mut [usize]) {
        for a in (0..self.shape.len()).rev() {
            out[a] = k % self.shape[a];
            k /= self.shape[a];
        }
    }
}

/// Ordered point collection with the spacing it was generated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    ambient: usize,
    coords: Vec<f64>,
    pub spacing: f64,
    pub layout: Option<LatticeLayout>,
}

impl PointSet {
    pub fn from_points(points: &[Point], spacing: f64) -> Result<Self> {
        let ambient = points.first().map(|p| p.len()).unwrap_or(0);
        let mut coords = Vec::with_capacity(points.len() * ambient);
        for p in points {
            if p.len() != ambient {
                return Err(Error::input("points of differing dimension"));
            }
            coords.extend_from_slice(p);
        }
        Ok(Self {
            ambient,
            coords,
            spacing,
            layout: None,
        })
    }

    pub fn len(&self) -> usize {
        if self.ambient == 0 {
            0
        } else {
            self.coords.len() / self.ambient
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.coords[i * self.ambient..(i + 1) * self.ambient]
    }

    pub fn point(&self, i: usize) -> Point {
        Point(self.get(i).to_vec())
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.ambient.max(1))
    }

    /// Keeps only the points selected by `keep`, dropping any lattice layout.
    pub fn filtered(&self, keep: impl Fn(&[f64]) -> bool) -> PointSet {
        let mut coords = Vec::new();
        for p in self.iter() {
            if keep(p) {
                coords.extend_from_slice(p);
            }
        }
        PointSet {
            ambient: self.ambient,
            coords,
            spacing: self.spacing,
            layout: None,
        }
    }

    /// Index of the point nearest to `x` in `d₀`.
    pub fn nearest(&self, m: &Manifold, x: &[f64]) -> Option<usize> {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.iter().enumerate() {
            let d = m.d0(p, x);
            if d < best_d {
                best_d = d;
                best = Some(i);
            }
        }
        best
    }
}

fn wrap_coord(x: f64, period: f64) -> f64 {
    let mut r = x.rem_euclid(period);
    if r >= period {
        r -= period;
    }
    r
}

/// Minimal representative of a periodic displacement in `[-P/2, P/2)`.
/// Exact half-period ties resolve to `-P/2`, the lexicographically
/// smallest translate.
fn wrap_delta(d: f64, period: f64) -> f64 {
    let mut r = d - period * (d / period).round();
    if r >= 0.5 * period {
        r -= period;
    }
    if r < -0.5 * period {
        r += period;
    }
    r
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Half-open parameter interval along a ray.
pub type Interval = (f64, f64);

impl Manifold {
    pub fn torus(periods: Vec<f64>) -> Result<Self> {
        if periods.len() < 2 {
            return Err(Error::input("torus dimension must be at least 2"));
        }
        if periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::input("torus periods must be positive"));
        }
        Ok(Manifold::Torus { periods })
    }

    /// The standard flat torus `R^n / (2πZ)^n`.
    pub fn flat_torus(n: usize) -> Result<Self> {
        Self::torus(vec![2.0 * PI; n])
    }

    pub fn boxed(extents: Vec<[f64; 2]>) -> Result<Self> {
        if extents.len() < 2 {
            return Err(Error::input("box dimension must be at least 2"));
        }
        if extents.iter().any(|[a, b]| !(a.is_finite() && b.is_finite() && b > a)) {
            return Err(Error::input("box extents must be finite with lower < upper"));
        }
        Ok(Manifold::Box { extents })
    }

    pub fn sphere(dim: usize, radius: f64) -> Result<Self> {
        if !(2..=4).contains(&dim) {
            return Err(Error::input("sphere dimension must be 2, 3 or 4"));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::input("sphere radius must be positive"));
        }
        Ok(Manifold::Sphere { dim, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            Manifold::Torus { periods } => periods.len(),
            Manifold::Box { extents } => extents.len(),
            Manifold::Sphere { dim, .. } => *dim,
        }
    }

    /// Length of coordinate vectors (`n`, or `n + 1` on the sphere).
    pub fn ambient_dim(&self) -> usize {
        match self {
            Manifold::Sphere { dim, .. } => dim + 1,
            _ => self.dim(),
        }
    }

    pub fn is_flat(&self) -> bool {
        !matches!(self, Manifold::Sphere { .. })
    }

    /// Constant scalar curvature of `g₀`.
    pub fn scal0(&self) -> f64 {
        match self {
            Manifold::Sphere { dim, radius } => (dim * (dim - 1)) as f64 / (radius * radius),
            _ => 0.0,
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Manifold::Torus { periods } => periods.iter().product(),
            Manifold::Box { extents } => extents.iter().map(|[a, b]| b - a).product(),
            Manifold::Sphere { dim, radius } => quad::sphere_area(*dim) * radius.powi(*dim as i32),
        }
    }

    pub fn diameter(&self) -> f64 {
        match self {
            Manifold::Torus { periods } => 0.5 * norm(periods),
            Manifold::Box { extents } => extents.iter().map(|[a, b]| (b - a).powi(2)).sum::<f64>().sqrt(),
            Manifold::Sphere { radius, .. } => PI * radius,
        }
    }

    /// Radius below which balls are embedded Euclidean/spherical balls.
    pub fn injectivity_radius(&self) -> f64 {
        match self {
            Manifold::Torus { periods } => 0.5 * periods.iter().cloned().fold(f64::INFINITY, f64::min),
            Manifold::Box { .. } => f64::INFINITY,
            Manifold::Sphere { radius, .. } => PI * radius,
        }
    }

    /// Smallest period (torus) or side length (box); `πR` on the sphere.
    pub fn min_extent(&self) -> f64 {
        match self {
            Manifold::Torus { periods } => periods.iter().cloned().fold(f64::INFINITY, f64::min),
            Manifold::Box { extents } => extents.iter().map(|[a, b]| b - a).fold(f64::INFINITY, f64::min),
            Manifold::Sphere { radius, .. } => PI * radius,
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return Err(Error::input(format!(
                "point has {} coordinates, manifold expects {}",
                x.len(),
                self.ambient_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("point has non-finite coordinates"));
        }
        if let Manifold::Sphere { .. } = self {
            if (norm(x) - 1.0).abs() > SPHERE_NORM_TOL * 1e3 {
                return Err(Error::input("sphere points must be unit vectors"));
            }
        }
        Ok(())
    }

    /// Maps `x` to its canonical representative in place.
    pub fn canonicalize(&self, x: &mut [f64]) {
        match self {
            Manifold::Torus { periods } => {
                for (v, p) in x.iter_mut().zip(periods) {
                    *v = wrap_coord(*v, *p);
                }
            }
            Manifold::Box { .. } => {}
            Manifold::Sphere { .. } => {
                let r = norm(x);
                if r > 0.0 {
                    x.iter_mut().for_each(|v| *v /= r);
                }
            }
        }
    }

    pub fn canonical(&self, x: &[f64]) -> Point {
        let mut v = x.to_vec();
        self.canonicalize(&mut v);
        Point(v)
    }

    /// Minimal displacement from `x` to `y` in chart coordinates (flat only).
    pub fn displacement(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        match self {
            Manifold::Torus { periods } => {
                for i in 0..periods.len() {
                    out[i] = wrap_delta(y[i] - x[i], periods[i]);
                }
            }
            _ => {
                for i in 0..x.len() {
                    out[i] = y[i] - x[i];
                }
            }
        }
    }

    /// Background distance without input validation.
    pub fn d0(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            Manifold::Torus { periods } => {
                let mut s = 0.0;
                for i in 0..periods.len() {
                    let d = wrap_delta(y[i] - x[i], periods[i]);
                    s += d * d;
                }
                s.sqrt()
            }
            Manifold::Box { .. } => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt(),
            Manifold::Sphere { radius, .. } => radius * sphere_angle(x, y),
        }
    }

    /// Validated background distance.
    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.d0(x, y))
    }

    /// Point at fraction `t` along the minimizing geodesic from `x` to `y`.
    pub fn geodesic_point(&self, x: &[f64], y: &[f64], t: f64, out: &mut [f64]) {
        match self {
            Manifold::Torus { periods } => {
                for i in 0..periods.len() {
                    let d = wrap_delta(y[i] - x[i], periods[i]);
                    out[i] = wrap_coord(x[i] + t * d, periods[i]);
                }
            }
            Manifold::Box { .. } => {
                for i in 0..x.len() {
                    out[i] = x[i] + t * (y[i] - x[i]);
                }
            }
            Manifold::Sphere { .. } => {
                let theta = sphere_angle(x, y);
                if theta < 1e-300 {
                    out.copy_from_slice(x);
                    return;
                }
                let s = theta.sin();
                let a = ((1.0 - t) * theta).sin() / s;
                let b = (t * theta).sin() / s;
                for i in 0..x.len() {
                    out[i] = a * x[i] + b * y[i];
                }
            }
        }
    }

    pub fn midpoint(&self, x: &[f64], y: &[f64]) -> Result<Point> {
        self.check_point(x)?;
        self.check_point(y)?;
        if self.d0(x, y) == 0.0 {
            return Err(Error::input("midpoint requires distinct points"));
        }
        match self {
            Manifold::Sphere { radius, .. } => {
                if self.d0(x, y) >= PI * radius - 1e-9 {
                    return Err(Error::Geometry("midpoint of antipodal points is not unique".into()));
                }
                let mut m: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
                self.canonicalize(&mut m);
                Ok(Point(m))
            }
            _ => {
                let mut m = vec![0.0; x.len()];
                self.geodesic_point(x, y, 0.5, &mut m);
                Ok(Point(m))
            }
        }
    }

    /// `μ₀(B)`, exact where closed forms exist.
    pub fn mu0_ball(&self, b: &BallSpec) -> Result<Estimate> {
        self.check_point(&b.center)?;
        if !(b.radius > 0.0) {
            return Err(Error::input("ball radius must be positive"));
        }
        let n = self.dim();
        let r = b.radius;
        match self {
            Manifold::Sphere { radius, .. } => {
                let theta_max = (r / radius).min(PI);
                let v = cap_volume(n, *radius, theta_max);
                Ok(Estimate::exact(v))
            }
            Manifold::Torus { .. } => {
                if r < 0.5 * self.min_extent() {
                    Ok(Estimate::exact(quad::unit_ball_volume(n) * r.powi(n as i32)))
                } else if r >= self.diameter() {
                    Ok(Estimate::exact(self.volume()))
                } else {
                    self.clipped_ball_volume(b)
                }
            }
            Manifold::Box { extents } => {
                let inside = extents
                    .iter()
                    .zip(b.center.iter())
                    .all(|([lo, hi], c)| c - r >= *lo && c + r <= *hi);
                if inside {
                    Ok(Estimate::exact(quad::unit_ball_volume(n) * r.powi(n as i32)))
                } else {
                    self.clipped_ball_volume(b)
                }
            }
        }
    }

    // Volume of a flat ball clipped by the box (box manifold) or by the
    // fundamental domain around its centre (torus, large radius), as an
    // angular integral of `min(r, exit)^n / n`.
    fn clipped_ball_volume(&self, b: &BallSpec) -> Result<Estimate> {
        let n = self.dim();
        let c = b.center.coords();
        let radial = |u: &[f64]| -> f64 {
            let t = self.ray_exit(c, u).min(b.radius);
            t.powi(n as i32) / n as f64
        };
        let opts = AdaptiveOpts {
            rel_tol: 1e-11,
            ..AdaptiveOpts::default()
        };
        match n {
            2 => {
                let v = quad::integrate_scalar(|a| radial(&[a.cos(), a.sin()]), 0.0, 2.0 * PI, opts);
                Ok(Estimate::exact(v))
            }
            3 => {
                let inner_opts = AdaptiveOpts {
                    rel_tol: 1e-12,
                    ..AdaptiveOpts::default()
                };
                let v = quad::integrate_scalar(
                    |th| {
                        let (s, ct) = th.sin_cos();
                        s * quad::integrate_scalar(
                            |ph| radial(&[s * ph.cos(), s * ph.sin(), ct]),
                            0.0,
                            2.0 * PI,
                            inner_opts,
                        )
                    },
                    0.0,
                    PI,
                    opts,
                );
                Ok(Estimate::exact(v))
            }
            _ => {
                let count = 200_000;
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_ba11);
                let area = quad::sphere_area(n - 1);
                let mut s = 0.0;
                let mut s2 = 0.0;
                let mut u = vec![0.0; n];
                for _ in 0..count {
                    random_unit(&mut rng, &mut u);
                    let v = area * radial(&u);
                    s += v;
                    s2 += v * v;
                }
                let mean = s / count as f64;
                let var = (s2 / count as f64 - mean * mean).max(0.0);
                Ok(Estimate {
                    value: mean,
                    stderr: (var / count as f64).sqrt(),
                })
            }
        }
    }

    /// Distance along the straight chart ray `x + t u` (unit `u`) until it
    /// leaves the box manifold, or the fundamental domain centred at `x`
    /// on the torus. Infinite on the sphere.
    pub fn ray_exit(&self, x: &[f64], u: &[f64]) -> f64 {
        match self {
            Manifold::Torus { periods } => {
                let mut t = f64::INFINITY;
                for (ui, p) in u.iter().zip(periods) {
                    if ui.abs() > 0.0 {
                        t = t.min(0.5 * p / ui.abs());
                    }
                }
                t
            }
            Manifold::Box { extents } => {
                let mut t = f64::INFINITY;
                for ((ui, xi), [lo, hi]) in u.iter().zip(x).zip(extents) {
                    if *ui > 0.0 {
                        t = t.min((hi - xi) / ui);
                    } else if *ui < 0.0 {
                        t = t.min((lo - xi) / ui);
                    }
                }
                t.max(0.0)
            }
            Manifold::Sphere { radius, .. } => PI * radius,
        }
    }

    /// Uniform random unit tangent vector at `p`.
    pub fn random_direction<R: Rng>(&self, p: &[f64], rng: &mut R, out: &mut [f64]) {
        match self {
            Manifold::Sphere { .. } => loop {
                random_unit(rng, out);
                let c = dot(out, p);
                for i in 0..out.len() {
                    out[i] -= c * p[i];
                }
                let r = norm(out);
                if r > 1e-8 {
                    out.iter_mut().for_each(|v| *v /= r);
                    return;
                }
            },
            _ => random_unit(rng, out),
        }
    }

    /// Point reached after arclength `t` from `p` along unit tangent `u`.
    /// Flat results are not wrapped, which keeps torus rays in the cover.
    pub fn ray_point(&self, p: &[f64], u: &[f64], t: f64, out: &mut [f64]) {
        match self {
            Manifold::Sphere { radius, .. } => {
                let (s, c) = (t / radius).sin_cos();
                for i in 0..p.len() {
                    out[i] = c * p[i] + s * u[i];
                }
            }
            _ => {
                for i in 0..p.len() {
                    out[i] = p[i] + t * u[i];
                }
            }
        }
    }

    /// Jacobian of geodesic polar coordinates, `t^{n-1}` or `(R sin(t/R))^{n-1}`.
    pub fn polar_jacobian(&self, t: f64) -> f64 {
        let n = self.dim() as i32;
        match self {
            Manifold::Sphere { radius, .. } => (radius * (t / radius).sin()).powi(n - 1),
            _ => t.powi(n - 1),
        }
    }

    /// Largest ray parameter needed to sweep the whole manifold from `p`.
    pub fn ray_extent(&self, p: &[f64], u: &[f64]) -> f64 {
        self.ray_exit(p, u)
    }

    /// Parameter intervals where the geodesic ray from `pole` in direction
    /// `u` lies inside `ball`. The ray is restricted to the region that
    /// polar coordinates about `pole` cover exactly once.
    pub fn ray_ball_intervals(&self, pole: &[f64], u: &[f64], ball: &BallSpec, out: &mut Vec<Interval>) {
        out.clear();
        let t_max = self.ray_extent(pole, u);
        let r = ball.radius;
        match self {
            Manifold::Sphere { radius, .. } => {
                let cr = (r / radius).min(PI).cos();
                let a = dot(pole, &ball.center);
                let b = dot(u, &ball.center);
                let amp = (a * a + b * b).sqrt();
                if amp < 1e-300 {
                    if cr <= 0.0 {
                        out.push((0.0, t_max));
                    }
                    return;
                }
                let ratio = cr / amp;
                if ratio > 1.0 {
                    return;
                }
                if ratio <= -1.0 {
                    out.push((0.0, t_max));
                    return;
                }
                let phi = b.atan2(a);
                let w = ratio.acos();
                for shift in [-2.0 * PI, 0.0, 2.0 * PI] {
                    let lo = (phi - w + shift).max(0.0);
                    let hi = (phi + w + shift).min(PI);
                    if hi > lo {
                        out.push((lo * radius, hi * radius));
                    }
                }
                merge_intervals(out);
            }
            Manifold::Torus { periods } => {
                let n = periods.len();
                let mut delta = vec![0.0; n];
                self.displacement(pole, &ball.center, &mut delta);
                if norm(&delta) == 0.0 {
                    // Centred at the pole: the fundamental domain clipped at r,
                    // valid for every radius.
                    out.push((0.0, t_max.min(r)));
                    return;
                }
                // Off-centre poles need embedded balls (r below half the
                // smallest period) so lifts are disjoint.
                // Lifts of the centre adjacent to the nearest one.
                let mut shift = vec![0i32; n];
                let total = 3usize.pow(n as u32);
                for code in 0..total {
                    let mut c = code;
                    for s in shift.iter_mut() {
                        *s = (c % 3) as i32 - 1;
                        c /= 3;
                    }
                    let lift: Vec<f64> = (0..n).map(|i| delta[i] + shift[i] as f64 * periods[i]).collect();
                    if let Some((lo, hi)) = ray_disc(u, &lift, r) {
                        let lo = lo.max(0.0);
                        let hi = hi.min(t_max);
                        if hi > lo {
                            out.push((lo, hi));
                        }
                    }
                }
                merge_intervals(out);
            }
            Manifold::Box { .. } => {
                let n = pole.len();
                let lift: Vec<f64> = (0..n).map(|i| ball.center[i] - pole[i]).collect();
                if let Some((lo, hi)) = ray_disc(u, &lift, r) {
                    let lo = lo.max(0.0);
                    let hi = hi.min(t_max);
                    if hi > lo {
                        out.push((lo, hi));
                    }
                }
            }
        }
    }

    /// Axis-aligned grid (torus, box) or quasi-uniform set (sphere).
    pub fn lattice(&self, spacing: f64, budget: usize) -> Result<PointSet> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::input("lattice spacing must be positive"));
        }
        match self {
            Manifold::Torus { periods } => {
                let shape: Vec<usize> = periods.iter().map(|p| ((p / spacing).round() as usize).max(1)).collect();
                let steps: Vec<f64> = periods.iter().zip(&shape).map(|(p, s)| p / *s as f64).collect();
                self.grid_points(shape, steps, vec![0.0; periods.len()], true, spacing, budget)
            }
            Manifold::Box { extents } => {
                let cells: Vec<usize> = extents
                    .iter()
                    .map(|[a, b]| (((b - a) / spacing) - 1e-9).ceil().max(1.0) as usize)
                    .collect();
                let steps: Vec<f64> = extents.iter().zip(&cells).map(|([a, b], c)| (b - a) / *c as f64).collect();
                let shape: Vec<usize> = cells.iter().map(|c| c + 1).collect();
                let origin = extents.iter().map(|[a, _]| *a).collect();
                self.grid_points(shape, steps, origin, false, spacing, budget)
            }
            Manifold::Sphere { dim, radius } => {
                let angle = spacing / radius;
                if *dim == 2 {
                    let count = (4.0 * PI / (FIBONACCI_LAYOUT_CONSTANT * angle * angle)).round().max(2.0) as usize;
                    if count > budget {
                        return Err(Error::Resource {
                            what: "sphere lattice points".into(),
                            required: count,
                            budget,
                        });
                    }
                    Ok(PointSet {
                        ambient: 3,
                        coords: fibonacci_sphere(count),
                        spacing,
                        layout: None,
                    })
                } else {
                    cube_sphere(*dim, angle, spacing, budget)
                }
            }
        }
    }

    /// Axis-aligned grid with explicit node counts per axis (torus: nodes
    /// per period; box: nodes including both endpoints). Lets callers build
    /// nested lattices.
    pub fn grid(&self, shape: &[usize], budget: usize) -> Result<PointSet> {
        if shape.len() != self.dim() {
            return Err(Error::input("grid shape length must equal the dimension"));
        }
        match self {
            Manifold::Torus { periods } => {
                if shape.iter().any(|&s| s == 0) {
                    return Err(Error::input("torus grid needs at least one node per axis"));
                }
                let steps: Vec<f64> = periods.iter().zip(shape).map(|(p, s)| p / *s as f64).collect();
                let spacing = steps.iter().cloned().fold(0.0, f64::max);
                self.grid_points(shape.to_vec(), steps, vec![0.0; periods.len()], true, spacing, budget)
            }
            Manifold::Box { extents } => {
                if shape.iter().any(|&s| s < 2) {
                    return Err(Error::input("box grid needs at least two nodes per axis"));
                }
                let steps: Vec<f64> = extents.iter().zip(shape).map(|([a, b], s)| (b - a) / (*s - 1) as f64).collect();
                let spacing = steps.iter().cloned().fold(0.0, f64::max);
                let origin = extents.iter().map(|[a, _]| *a).collect();
                self.grid_points(shape.to_vec(), steps, origin, false, spacing, budget)
            }
            Manifold::Sphere { .. } => Err(Error::Unsupported("axis grids exist on tori and boxes only".into())),
        }
    }

    fn grid_points(
        &self,
        shape: Vec<usize>,
        steps: Vec<f64>,
        origin: Vec<f64>,
        periodic: bool,
        spacing: f64,
        budget: usize,
    ) -> Result<PointSet> {
        let total = shape.iter().try_fold(1usize, |acc, s| acc.checked_mul(*s)).unwrap_or(usize::MAX);
        if total > budget {
            return Err(Error::Resource {
                what: "lattice points".into(),
                required: total,
                budget,
            });
        }
        let n = shape.len();
        let layout = LatticeLayout {
            shape,
            steps,
            origin,
            periodic,
        };
        let mut coords = Vec::with_capacity(total * n);
        let mut idx = vec![0usize; n];
        for k in 0..total {
            layout.multi_index(k, &mut idx);
            for a in 0..n {
                coords.push(layout.origin[a] + idx[a] as f64 * layout.steps[a]);
            }
        }
        Ok(PointSet {
            ambient: n,
            coords,
            spacing,
            layout: Some(layout),
        })
    }

    /// Uniform i.i.d. samples from `μ₀` restricted to the ball, each
    /// weighted by `μ₀(B) / count`.
    pub fn sample_ball(&self, b: &BallSpec, count: usize, seed: u64) -> Result<Vec<(Point, f64)>> {
        if count == 0 {
            return Err(Error::input("sample count must be at least 1"));
        }
        let vol = self.mu0_ball(b)?.value;
        let weight = vol / count as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        let c = b.center.coords();
        let mut out = Vec::with_capacity(count);
        match self {
            Manifold::Sphere { radius, .. } => {
                let theta_max = (b.radius / radius).min(PI);
                let peak = if theta_max >= 0.5 * PI { 1.0 } else { theta_max.sin() };
                let mut u = vec![0.0; n + 1];
                let mut x = vec![0.0; n + 1];
                while out.len() < count {
                    let theta = theta_max * rng.random::<f64>();
                    let accept = (theta.sin() / peak).powi(n as i32 - 1);
                    if rng.random::<f64>() >= accept {
                        continue;
                    }
                    self.random_direction(c, &mut rng, &mut u);
                    self.ray_point(c, &u, theta * radius, &mut x);
                    self.canonicalize(&mut x);
                    out.push((Point(x.clone()), weight));
                }
            }
            _ => {
                // Bounding cube, clipped to the fundamental domain on the torus.
                let half: Vec<f64> = match self {
                    Manifold::Torus { periods } => periods.iter().map(|p| b.radius.min(0.5 * p)).collect(),
                    _ => vec![b.radius; n],
                };
                let cube: f64 = half.iter().map(|h| 2.0 * h).product();
                if vol / cube < 1e-3 {
                    return Err(Error::Resource {
                        what: "rejection sampling efficiency below 1e-3".into(),
                        required: (cube / vol).ceil() as usize,
                        budget: 1000,
                    });
                }
                let mut x = vec![0.0; n];
                while out.len() < count {
                    for i in 0..n {
                        x[i] = c[i] + half[i] * (2.0 * rng.random::<f64>() - 1.0);
                    }
                    if let Manifold::Box { extents } = self {
                        if x.iter().zip(extents).any(|(v, [lo, hi])| v < lo || v > hi) {
                            continue;
                        }
                    }
                    let mut y = x.clone();
                    self.canonicalize(&mut y);
                    if self.d0(c, &y) < b.radius {
                        out.push((Point(y), weight));
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Nearest-neighbour-to-count constant of the spherical Fibonacci layout:
/// `count = 4π / (c · spacing²)` with `c = √3/2` (hexagonal cell area).
pub const FIBONACCI_LAYOUT_CONSTANT: f64 = 0.866_025_403_784_438_6;

fn fibonacci_sphere(count: usize) -> Vec<f64> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut coords = Vec::with_capacity(3 * count);
    for i in 0..count {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / count as f64;
        let r = (1.0 - z * z).max(0.0).sqrt();
        let a = golden * i as f64;
        coords.extend_from_slice(&[r * a.cos(), r * a.sin(), z]);
    }
    coords
}

// Equiangular cube-sphere: a grid of angles on each face of the
// (n+1)-cube, projected radially.
fn cube_sphere(dim: usize, angle: f64, spacing: f64, budget: usize) -> Result<PointSet> {
    let ambient = dim + 1;
    let per_axis = ((0.5 * PI / angle).round() as usize).max(1);
    let face_pts = (per_axis + 1).pow(dim as u32);
    let required = face_pts * 2 * ambient;
    if required > budget {
        return Err(Error::Resource {
            what: "sphere lattice points".into(),
            required,
            budget,
        });
    }
    let ticks: Vec<f64> = (0..=per_axis)
        .map(|k| (-0.25 * PI + 0.5 * PI * k as f64 / per_axis as f64).tan())
        .collect();
    let mut coords = Vec::new();
    let mut idx = vec![0usize; dim];
    let mut v = vec![0.0; ambient];
    for axis in 0..ambient {
        for sign in [1.0, -1.0] {
            for k in 0..face_pts {
                let mut c = k;
                for i in idx.iter_mut() {
                    *i = c % (per_axis + 1);
                    c /= per_axis + 1;
                }
                let mut j = 0;
                for (a, slot) in v.iter_mut().enumerate() {
                    if a == axis {
                        *slot = sign;
                    } else {
                        *slot = ticks[idx[j]];
                        j += 1;
                    }
                }
                // Points on shared cube edges belong to the face with the
                // lowest axis among those containing them.
                if (0..axis).any(|a| v[a].abs() >= 1.0 - 1e-12) {
                    continue;
                }
                let r = norm(&v);
                coords.extend(v.iter().map(|x| x / r));
            }
        }
    }
    Ok(PointSet {
        ambient,
        coords,
        spacing,
        layout: None,
    })
}

fn sphere_angle(x: &[f64], y: &[f64]) -> f64 {
    // atan2 form stays accurate near 0 and π.
    let mut cross2 = 0.0;
    let d = dot(x, y);
    let nx = dot(x, x);
    let ny = dot(y, y);
    cross2 += (nx * ny - d * d).max(0.0);
    cross2.sqrt().atan2(d)
}

/// `μ₀` of a geodesic cap of angular radius `theta_max` on `S^n(R)`.
pub fn cap_volume(n: usize, radius: f64, theta_max: f64) -> f64 {
    let opts = AdaptiveOpts {
        rel_tol: 1e-13,
        ..AdaptiveOpts::default()
    };
    let integral = quad::integrate_scalar(|t| t.sin().powi(n as i32 - 1), 0.0, theta_max.min(PI), opts);
    quad::sphere_area(n - 1) * radius.powi(n as i32) * integral
}

fn random_unit<R: Rng>(rng: &mut R, out: &mut [f64]) {
    loop {
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let r = norm(out);
        if r > 1e-12 {
            out.iter_mut().for_each(|v| *v /= r);
            return;
        }
    }
}

// Parameter range where |t u - c| <= r for unit u.
fn ray_disc(u: &[f64], c: &[f64], r: f64) -> Option<Interval> {
    let b = dot(u, c);
    let cc = dot(c, c);
    let disc = b * b - (cc - r * r);
    if disc <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((b - s, b + s))
}

fn merge_intervals(v: &mut Vec<Interval>) {
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<Interval> = Vec::with_capacity(v.len());
    for &(lo, hi) in v.iter() {
        if let Some(last) = merged.last_mut() {
            if lo <= last.1 {
                last.1 = last.1.max(hi);
                continue;
            }
        }
        merged.push((lo, hi));
    }
    *v = merged;
}

/// A quadrature result with its Monte Carlo standard error (zero when the
/// value comes from a deterministic rule).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2() -> Manifold {
        Manifold::flat_torus(2).unwrap()
    }

    #[test]
    fn torus_distances() {
        let m = t2();
        assert!((m.d0(&[0.0, 0.0], &[PI, 0.0]) - PI).abs() < 1e-15);
        assert!((m.d0(&[0.1, 0.0], &[2.0 * PI - 0.1, 0.0]) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn sphere_antipodal_distance() {
        let m = Manifold::sphere(2, 1.0).unwrap();
        let d = m.distance(&[0.0, 0.0, 1.0], &[0.0, 0.0, -1.0]).unwrap();
        assert!((d - PI).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let m = t2();
        assert!(matches!(m.distance(&[0.0, 0.0, 0.0], &[0.0, 0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn ball_volumes() {
        let m = t2();
        let v = m.mu0_ball(&BallSpec::new(vec![0.0, 0.0], 0.5)).unwrap();
        assert!((v.value - PI * 0.25).abs() < 1e-15);
        let s = Manifold::sphere(2, 1.0).unwrap();
        let n = vec![0.0, 0.0, 1.0];
        let h = s.mu0_ball(&BallSpec::new(n.clone(), PI / 2.0)).unwrap();
        assert!((h.value - 2.0 * PI).abs() < 1e-10);
        let w = s.mu0_ball(&BallSpec::new(n, 4.0)).unwrap();
        assert!((w.value - 4.0 * PI).abs() < 1e-10);
    }

    #[test]
    fn large_torus_balls_cover_everything() {
        let m = t2();
        let full = m.mu0_ball(&BallSpec::new(vec![1.0, 2.0], PI * 2f64.sqrt())).unwrap();
        assert_eq!(full.value, 4.0 * PI * PI);
        // Disc of radius π inside the 2π square: area π³, no clipping yet
        // beyond the square's edge midpoints.
        let r = PI;
        let v = m.mu0_ball(&BallSpec::new(vec![0.0, 0.0], r)).unwrap();
        assert!((v.value - PI.powi(3)).abs() < 1e-8, "{}", v.value);
        // Radius 4: disc clipped by the square [-π, π]².
        let r = 4.0f64;
        let a = (PI / r).acos();
        let exact = r * r * (PI - 4.0 * a) + 4.0 * PI * (r * r - PI * PI).sqrt();
        let v = m.mu0_ball(&BallSpec::new(vec![0.0, 0.0], r)).unwrap();
        assert!((v.value - exact).abs() < 1e-8, "{} vs {}", v.value, exact);
    }

    #[test]
    fn box_ball_clipped_at_corner() {
        let m = Manifold::boxed(vec![[0.0, 1.0], [0.0, 1.0]]).unwrap();
        let v = m.mu0_ball(&BallSpec::new(vec![0.0, 0.0], 0.5)).unwrap();
        assert!((v.value - PI * 0.25 / 4.0).abs() < 1e-10);
        let m3 = Manifold::boxed(vec![[0.0, 1.0]; 3]).unwrap();
        let v = m3.mu0_ball(&BallSpec::new(vec![0.0, 0.5, 0.5], 0.25)).unwrap();
        assert!((v.value - 0.5 * 4.0 / 3.0 * PI * 0.25f64.powi(3)).abs() < 1e-10);
    }

    #[test]
    fn midpoints() {
        let m = t2();
        let p = m.midpoint(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && p[1].abs() < 1e-15);
        let s = Manifold::sphere(2, 1.0).unwrap();
        let p = s.midpoint(&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0]).unwrap();
        let h = 0.5f64.sqrt();
        assert!((p[0] - h).abs() < 1e-15 && p[1].abs() < 1e-15 && (p[2] - h).abs() < 1e-15);
        assert!(matches!(
            s.midpoint(&[0.0, 0.0, 1.0], &[0.0, 0.0, -1.0]),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn cut_locus_tie_takes_smallest_translate() {
        let m = t2();
        let p = m.midpoint(&[0.0, 0.0], &[PI, 0.0]).unwrap();
        // Translates of (π, 0) at -π and π tie; -π is lexicographically smaller.
        assert!((p[0] - 1.5 * PI).abs() < 1e-12, "{:?}", p);
    }

    #[test]
    fn lattice_counts() {
        let m = t2();
        assert_eq!(m.lattice(PI / 2.0, DEFAULT_POINT_BUDGET).unwrap().len(), 16);
        let b = Manifold::boxed(vec![[0.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(b.lattice(0.5, DEFAULT_POINT_BUDGET).unwrap().len(), 9);
        let err = m.lattice(1e-4, 1000).unwrap_err();
        assert!(matches!(err, Error::Resource { required, .. } if required > 1000));
    }

    fn nearest_neighbour_spacings(m: &Manifold, set: &PointSet) -> Vec<f64> {
        (0..set.len())
            .map(|i| {
                (0..set.len())
                    .filter(|&j| j != i)
                    .map(|j| m.d0(set.get(i), set.get(j)))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect()
    }

    #[test]
    fn sphere_lattice_spacing() {
        let s = Manifold::sphere(2, 1.0).unwrap();
        let set = s.lattice(0.1, DEFAULT_POINT_BUDGET).unwrap();
        let expected = 4.0 * PI / (0.01 * FIBONACCI_LAYOUT_CONSTANT);
        let ratio = set.len() as f64 / expected;
        assert!((0.5..=2.0).contains(&ratio));
        let nn = nearest_neighbour_spacings(&s, &set);
        let inside = nn.iter().filter(|d| (0.05..=0.2).contains(*d)).count();
        assert_eq!(inside, nn.len());
        for dim in [3, 4] {
            let s = Manifold::sphere(dim, 1.0).unwrap();
            let set = s.lattice(0.3, DEFAULT_POINT_BUDGET).unwrap();
            let nn = nearest_neighbour_spacings(&s, &set);
            let lo = nn.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = nn.iter().cloned().fold(0.0, f64::max);
            assert!(lo >= 0.15 && hi <= 0.6, "dim {dim}: {lo} {hi}");
        }
    }

    #[test]
    fn sample_ball_is_normalized_and_deterministic() {
        let s = Manifold::sphere(3, 1.0).unwrap();
        let b = BallSpec::new(vec![0.0, 0.0, 0.0, 1.0], 0.7);
        let a = s.sample_ball(&b, 500, 7).unwrap();
        let a2 = s.sample_ball(&b, 500, 7).unwrap();
        assert_eq!(a, a2);
        let total: f64 = a.iter().map(|(_, w)| w).sum();
        let vol = s.mu0_ball(&b).unwrap().value;
        assert!((total - vol).abs() <= 1e-12 * vol);
        assert!(a.iter().all(|(p, _)| s.d0(p, &b.center) <= 0.7 + 1e-12));
    }

    #[test]
    fn uniform_disc_samples_are_centred() {
        let m = t2();
        let b = BallSpec::new(vec![0.0, 0.0], 0.5);
        let samples = m.sample_ball(&b, 100_000, 11).unwrap();
        let xs: Vec<f64> = samples.iter().map(|(p, _)| wrap_delta(p[0], 2.0 * PI)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        let sigma = (var / xs.len() as f64).sqrt();
        assert!(mean.abs() <= 3.0 * sigma, "{mean} vs {sigma}");
    }

    #[test]
    fn tiny_ball_in_box_corner_rejects() {
        let m = Manifold::boxed(vec![[0.0, 1.0], [0.0, 1.0]]).unwrap();
        // Fine: a quarter of the bounding square is usable.
        assert!(m.sample_ball(&BallSpec::new(vec![0.0, 0.0], 0.2), 10, 1).is_ok());
    }

    #[test]
    fn sphere_ray_intervals_reconstruct_cap() {
        let s = Manifold::sphere(2, 1.0).unwrap();
        let pole = [0.0, 0.0, 1.0];
        let ball = BallSpec::new(vec![1.0, 0.0, 0.0], 0.4);
        // Integrate the indicator in polar coordinates about the pole.
        let mut iv = Vec::new();
        let mut total = 0.0;
        let k = 20000;
        for i in 0..k {
            let a = 2.0 * PI * (i as f64 + 0.5) / k as f64;
            let u = [a.cos(), a.sin(), 0.0];
            s.ray_ball_intervals(&pole, &u, &ball, &mut iv);
            for (lo, hi) in &iv {
                total += (lo.cos() - hi.cos()) * 2.0 * PI / k as f64;
            }
        }
        let exact = s.mu0_ball(&ball).unwrap().value;
        assert!((total - exact).abs() < 1e-3 * exact, "{total} {exact}");
    }

    #[test]
    fn torus_ray_intervals_use_all_lifts() {
        let m = t2();
        let pole = [0.3, 0.2];
        let ball = BallSpec::new(vec![6.0, 6.1], 1.0);
        let mut iv = Vec::new();
        let k = 40000;
        let mut total = 0.0;
        for i in 0..k {
            let a = 2.0 * PI * (i as f64 + 0.5) / k as f64;
            let u = [a.cos(), a.sin()];
            m.ray_ball_intervals(&pole, &u, &ball, &mut iv);
            for (lo, hi) in &iv {
                total += 0.5 * (hi * hi - lo * lo) * 2.0 * PI / k as f64;
            }
        }
        assert!((total - PI).abs() < 1e-3, "{total}");
    }
}
