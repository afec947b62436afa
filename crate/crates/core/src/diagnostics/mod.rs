//! A∞-type constants of `w = e^{nf}` over sampled balls, strong-A∞ ratios,
//! bi-Hölder fits and isoperimetric ratios.
//!
//! Every average in one report is taken with a single quadrature per ball,
//! on the field with its constant shift peeled off, so the constants are
//! exactly invariant under [`WeightField::Scaled`].

mod iso;
mod pairs;

pub use iso::{isoperimetric_ratio, Domain, IsoReport, IsoRow};
pub use pairs::{
    biholder_fit, d0_matrix, holder_seminorm, holder_seminorm_diff, strong_ratio, BiHolderFit, StrongReport,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{BallSpec, Manifold, Point, PointSet};
use crate::metric::edge_seed;
use crate::weight::WeightField;

/// Radius cap used when none is given: a quarter of the smallest period or
/// side (`πR` on the sphere), at most 1.
pub fn default_eta(m: &Manifold) -> f64 {
    (0.25 * m.min_extent()).min(1.0)
}

/// Balls `B(c, r)` for every center and radius, with per-ball seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallSampler {
    pub centers: PointSet,
    pub radii: Vec<f64>,
    pub eta: f64,
    pub seed: u64,
}

impl BallSampler {
    pub fn new(m: &Manifold, centers: PointSet, radii: Vec<f64>, eta: f64, seed: u64) -> Result<Self> {
        if centers.is_empty() || radii.is_empty() {
            return Err(Error::input("ball sampler needs at least one center and one radius"));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::input("eta must be positive and finite"));
        }
        if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && **r <= eta * (1.0 + 1e-12))) {
            return Err(Error::input(format!("ball radius {r} must lie in (0, eta = {eta}]")));
        }
        for c in centers.iter() {
            m.check_point(c)?;
        }
        Ok(Self {
            centers,
            radii,
            eta,
            seed,
        })
    }

    /// `count` centers drawn uniformly from `μ₀`.
    pub fn random(m: &Manifold, count: usize, radii: Vec<f64>, eta: f64, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::input("need at least one center"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Point> = (0..count).map(|_| random_point(m, &mut rng)).collect();
        let spacing = (m.volume() / count as f64).powf(1.0 / m.dim() as f64);
        let centers = PointSet::from_points(&pts, spacing)?;
        Self::new(m, centers, radii, eta, seed)
    }

    pub fn len(&self) -> usize {
        self.centers.len() * self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ball(&self, k: usize) -> BallSpec {
        let nr = self.radii.len();
        BallSpec::new(self.centers.point(k / nr), self.radii[k % nr])
    }

    pub fn ball_seed(&self, k: usize) -> u64 {
        edge_seed(self.seed, k)
    }

    fn with_radii(&self, radii: Vec<f64>) -> Self {
        Self {
            radii,
            ..self.clone()
        }
    }
}

fn random_point(m: &Manifold, rng: &mut ChaCha8Rng) -> Point {
    match m {
        Manifold::Torus { periods } => Point(periods.iter().map(|p| p * rng.random::<f64>()).collect()),
        Manifold::Box { extents } => Point(extents.iter().map(|[a, b]| a + (b - a) * rng.random::<f64>()).collect()),
        Manifold::Sphere { dim, radius } => {
            let v: Vec<f64> = (0..=*dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let r = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            Point(v.iter().map(|x| radius * x / r).collect())
        }
    }
}

/// Supremum of a per-ball quantity and the ball attaining it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupEstimate {
    pub value: f64,
    pub center: Point,
    pub radius: f64,
    pub balls: usize,
}

fn sup_of(sampler: &BallSampler, values: &[f64]) -> SupEstimate {
    let (k, v) = values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (k, v)| if *v > acc.1 { (k, *v) } else { acc });
    let b = sampler.ball(k);
    SupEstimate {
        value: v,
        center: b.center,
        radius: b.radius,
        balls: values.len(),
    }
}

/// Ball averages `⨍_B e^{p f}` for each exponent, normalized by the
/// quadrature's own `∫_B 1` so that all averages share the same nodes.
fn ball_means(m: &Manifold, base: &WeightField, b: &BallSpec, exps: &[f64], budget: usize, seed: u64) -> Result<Vec<f64>> {
    let mut all = Vec::with_capacity(exps.len() + 1);
    all.push(0.0);
    all.extend_from_slice(exps);
    let v = base.ball_integrals(m, b, &all, budget, seed)?;
    let vol = v[0].value;
    if !(vol > 0.0) || v.iter().any(|e| !e.value.is_finite()) {
        return Err(Error::Integration(format!(
            "non-finite ball average at center {:?}, radius {}",
            b.center.coords(),
            b.radius
        )));
    }
    Ok(v[1..].iter().map(|e| e.value / vol).collect())
}

fn check_exponents(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() || xs.iter().any(|x| !(*x > 1.0 && x.is_finite())) {
        return Err(Error::input(format!("{name} must be finite and > 1")));
    }
    Ok(())
}

/// Per-ball reverse-Hölder ratios for each `q` and `A_p` products for each
/// `p`, all from one quadrature per ball.
fn ball_constants(
    m: &Manifold,
    field: &WeightField,
    qs: &[f64],
    ps: &[f64],
    sampler: &BallSampler,
    budget: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    field.validate(m)?;
    let n = m.dim() as f64;
    let (base, _) = field.peel();
    let mut exps = vec![n];
    exps.extend(qs.iter().map(|q| n * q));
    exps.extend(ps.iter().map(|p| -n / (p - 1.0)));
    let per_ball: Vec<Vec<f64>> = (0..sampler.len())
        .into_par_iter()
        .map(|k| ball_means(m, base, &sampler.ball(k), &exps, budget, sampler.ball_seed(k)))
        .collect::<Result<_>>()?;
    // Jensen gives ≥ 1 exactly for positive quadrature weights; the clamp
    // only removes rounding.
    let rh = qs
        .iter()
        .enumerate()
        .map(|(i, q)| per_ball.iter().map(|v| (v[1 + i].powf(1.0 / q) / v[0]).max(1.0)).collect())
        .collect();
    let ap = ps
        .iter()
        .enumerate()
        .map(|(i, p)| {
            per_ball
                .iter()
                .map(|v| (v[0] * v[1 + qs.len() + i].powf(p - 1.0)).max(1.0))
                .collect()
        })
        .collect();
    Ok((rh, ap))
}

/// `sup_B (⨍ w^q)^{1/q} / ⨍ w` over the sampled balls.
pub fn reverse_holder(m: &Manifold, field: &WeightField, q: f64, sampler: &BallSampler, budget: usize) -> Result<SupEstimate> {
    Ok(reverse_holder_profile(m, field, &[q], sampler, budget)?.remove(0))
}

/// [`reverse_holder`] for several `q` on shared samples; nondecreasing in `q`.
pub fn reverse_holder_profile(
    m: &Manifold,
    field: &WeightField,
    qs: &[f64],
    sampler: &BallSampler,
    budget: usize,
) -> Result<Vec<SupEstimate>> {
    check_exponents("q", qs)?;
    let (rh, _) = ball_constants(m, field, qs, &[], sampler, budget)?;
    Ok(rh.iter().map(|v| sup_of(sampler, v)).collect())
}

/// `sup_B (⨍ w)(⨍ w^{−1/(p−1)})^{p−1}` over the sampled balls.
pub fn ap_product(m: &Manifold, field: &WeightField, p: f64, sampler: &BallSampler, budget: usize) -> Result<SupEstimate> {
    Ok(ap_profile(m, field, &[p], sampler, budget)?.remove(0))
}

/// [`ap_product`] for several `p` on shared samples; nonincreasing in `p`.
pub fn ap_profile(m: &Manifold, field: &WeightField, ps: &[f64], sampler: &BallSampler, budget: usize) -> Result<Vec<SupEstimate>> {
    check_exponents("p", ps)?;
    let (_, ap) = ball_constants(m, field, &[], ps, sampler, budget)?;
    Ok(ap.iter().map(|v| sup_of(sampler, v)).collect())
}

/// `sup μ_f(B(x,2r)) / μ_f(B(x,r))`; both balls share one seed.
pub fn doubling_constant(m: &Manifold, field: &WeightField, sampler: &BallSampler, budget: usize) -> Result<SupEstimate> {
    field.validate(m)?;
    if let Some(r) = sampler.radii.iter().find(|r| **r > 0.5 * sampler.eta * (1.0 + 1e-12)) {
        return Err(Error::input(format!("doubling radii must be ≤ eta/2; got {r} with eta = {}", sampler.eta)));
    }
    let n = m.dim() as f64;
    let (base, _) = field.peel();
    let ratios: Vec<f64> = (0..sampler.len())
        .into_par_iter()
        .map(|k| {
            let b = sampler.ball(k);
            let seed = sampler.ball_seed(k);
            let big = BallSpec::new(b.center.clone(), 2.0 * b.radius);
            let small = base.ball_integrals(m, &b, &[n], budget, seed)?[0].value;
            let large = base.ball_integrals(m, &big, &[n], budget, seed)?[0].value;
            if !(small > 0.0 && large.is_finite()) {
                return Err(Error::Integration("non-finite ball mass in doubling ratio".into()));
            }
            Ok((large / small).max(1.0))
        })
        .collect::<Result<_>>()?;
    Ok(sup_of(sampler, &ratios))
}

/// Fit of `ln(ω(E)/ω(B))` against `ln(μ₀(E)/μ₀(B))` over sub-balls and
/// random cell unions `E ⊂ B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    /// Least-squares slope through the origin.
    pub slope: f64,
    pub slope_min: f64,
    pub slope_max: f64,
    /// Smallest `α ≥ 1` with every pair inside `[x^α, x^{1/α}]` (`C = 1`).
    pub alpha_iv: f64,
    /// `max(slope, 1/slope)`.
    pub alpha_fit: f64,
    /// Smallest `C` for the two-sided bound at `alpha_fit`.
    pub constant: f64,
    pub pairs: usize,
    /// Subsets with no samples, or with all of them.
    pub degenerate: usize,
}

/// Each ball is sampled with `budget` uniform points; subsets are the
/// concentric balls of radius `r·j/subdivisions` and `subdivisions` random
/// unions of cells of a `subdivisions`-per-axis grid.
pub fn subset_ratio_exponent(
    m: &Manifold,
    field: &WeightField,
    sampler: &BallSampler,
    subdivisions: usize,
    budget: usize,
) -> Result<SubsetReport> {
    field.validate(m)?;
    if subdivisions < 8 {
        return Err(Error::input("subdivisions must be at least 8"));
    }
    if budget < 100 {
        return Err(Error::input("sample budget must be at least 100"));
    }
    let n = m.dim() as f64;
    let (base, _) = field.peel();
    let per_ball: Vec<(Vec<(f64, f64)>, usize)> = (0..sampler.len())
        .into_par_iter()
        .map(|k| {
            let b = sampler.ball(k);
            let seed = sampler.ball_seed(k);
            let samples = m.sample_ball(&b, budget, seed)?;
            let amb = b.center.len();
            let s = subdivisions;
            let mut disp = vec![0.0; amb];
            let mut rows = Vec::with_capacity(samples.len());
            for (x, _) in &samples {
                m.displacement(&b.center, x, &mut disp);
                let mut cell = 0u64;
                for d in &disp {
                    let i = (((d + b.radius) / (2.0 * b.radius)) * s as f64).floor().clamp(0.0, (s - 1) as f64);
                    cell = cell * s as u64 + i as u64;
                }
                rows.push((m.d0(&b.center, x), (n * base.f(m, x)).exp(), cell));
            }
            let total_w: f64 = rows.iter().map(|r| r.1).sum();
            let count = rows.len() as f64;
            let mut out = Vec::new();
            let mut degenerate = 0;
            let mut push = |inside: &dyn Fn(&(f64, f64, u64)) -> bool| {
                let (c, w) = rows
                    .iter()
                    .filter(|r| inside(r))
                    .fold((0usize, 0.0), |(c, w), r| (c + 1, w + r.1));
                if c == 0 || c == rows.len() {
                    degenerate += 1;
                } else {
                    out.push(((c as f64 / count).ln(), (w / total_w).ln()));
                }
            };
            for j in 1..s {
                let rj = b.radius * j as f64 / s as f64;
                push(&|r| r.0 <= rj);
            }
            for t in 0..s {
                let p = 0.1 + 0.6 * (t as f64 + 0.5) / s as f64;
                let salt = edge_seed(seed, t);
                push(&|r| (edge_seed(salt, r.2 as usize) as f64) < p * u64::MAX as f64);
            }
            Ok((out, degenerate))
        })
        .collect::<Result<_>>()?;
    let degenerate = per_ball.iter().map(|r| r.1).sum();
    let xy: Vec<(f64, f64)> = per_ball.into_iter().flat_map(|r| r.0).collect();
    if xy.len() < 8 {
        return Err(Error::Sampling(format!("only {} valid (E, B) pairs; need 8", xy.len())));
    }
    let slope = xy.iter().map(|(x, y)| x * y).sum::<f64>() / xy.iter().map(|(x, _)| x * x).sum::<f64>();
    let ratios = xy.iter().map(|(x, y)| y / x);
    let slope_min = ratios.clone().fold(f64::INFINITY, f64::min);
    let slope_max = ratios.fold(f64::NEG_INFINITY, f64::max);
    let alpha_iv = slope_max.max(1.0 / slope_min).max(1.0);
    let alpha_fit = slope.max(1.0 / slope);
    let constant = xy
        .iter()
        .map(|(x, y)| (alpha_fit * x - y).exp().max((y - x / alpha_fit).exp()))
        .fold(1.0, f64::max);
    Ok(SubsetReport {
        slope,
        slope_min,
        slope_max,
        alpha_iv,
        alpha_fit,
        constant,
        pairs: xy.len(),
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AInftyReport {
    pub q: f64,
    #[serde(rename = "C_rh")]
    pub c_rh: f64,
    pub p: f64,
    #[serde(rename = "C_ap")]
    pub c_ap: f64,
    pub theta_doubling: f64,
    pub alpha_iv: f64,
    pub subset_constant: f64,
    pub eta: f64,
    /// Filled in by [`AInftyReport::with_strong`].
    pub theta_strong: Option<f64>,
    pub balls: usize,
    pub subset_pairs: usize,
    pub subset_degenerate: usize,
    pub budget: usize,
    pub subset_budget: usize,
    pub seed: u64,
}

impl AInftyReport {
    pub fn with_strong(mut self, s: &StrongReport) -> Self {
        self.theta_strong = Some(s.theta);
        self
    }
}

/// Reverse-Hölder and `A_p` constants on the sampled balls, the doubling
/// constant on the same centers at half the radii, and the subset exponent.
#[allow(clippy::too_many_arguments)]
pub fn ainfty_report(
    m: &Manifold,
    field: &WeightField,
    q: f64,
    p: f64,
    sampler: &BallSampler,
    subdivisions: usize,
    budget: usize,
    subset_budget: usize,
) -> Result<AInftyReport> {
    check_exponents("q", &[q])?;
    check_exponents("p", &[p])?;
    let (rh, ap) = ball_constants(m, field, &[q], &[p], sampler, budget)?;
    let halves = sampler.with_radii(sampler.radii.iter().map(|r| 0.5 * r).collect());
    let doubling = doubling_constant(m, field, &halves, budget)?;
    let subset = subset_ratio_exponent(m, field, sampler, subdivisions, subset_budget)?;
    Ok(AInftyReport {
        q,
        c_rh: sup_of(sampler, &rh[0]).value,
        p,
        c_ap: sup_of(sampler, &ap[0]).value,
        theta_doubling: doubling.value,
        alpha_iv: subset.alpha_iv,
        subset_constant: subset.constant,
        eta: sampler.eta,
        theta_strong: None,
        balls: sampler.len(),
        subset_pairs: subset.pairs,
        subset_degenerate: subset.degenerate,
        budget,
        subset_budget,
        seed: sampler.seed,
    })
}
