use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{BallSpec, Manifold, PointSet};
use crate::metric::{edge_seed, DistanceMatrix, Estimator, Provenance};
use crate::weight::WeightField;

/// `d₀` between the listed nodes, in the same layout as a graph distance
/// matrix (calibration 1).
pub fn d0_matrix(m: &Manifold, points: &PointSet, sources: &[usize], targets: &[usize]) -> Result<DistanceMatrix> {
    if let Some(bad) = sources.iter().chain(targets).find(|&&i| i >= points.len()) {
        return Err(Error::input(format!("node index {bad} out of range")));
    }
    let values = sources
        .iter()
        .flat_map(|&s| targets.iter().map(move |&t| m.d0(points.get(s), points.get(t))))
        .collect();
    Ok(DistanceMatrix {
        sources: sources.to_vec(),
        targets: targets.to_vec(),
        values,
        provenance: Provenance {
            eps: 0.0,
            estimator: Estimator::DEFAULT_LINE,
            seed: 0,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrongReport {
    /// `sup max(ρ, 1/ρ)` with `ρ = d_f(x,y)/μ_f(B(x, d₀(x,y)))^{1/n}`.
    pub theta: f64,
    /// Same with the ball centred at the midpoint, radius `d₀/2`.
    pub theta_centered: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Smallest `B` with `d_fⁿ ≤ B·μ_f(B(x, d₀))` over the pairs.
    pub upper_constant: f64,
    pub pairs: usize,
    /// Pairs skipped because `d₀ > eta` or `x = y`.
    pub skipped: usize,
    /// Node pair attaining `theta`.
    pub worst: (usize, usize),
}

/// Strong-A∞ ratio over node pairs `(x, y)` of the graph behind `dmat`.
/// Ball masses use deterministic angular quadrature where available: the
/// supremum over many pairs would otherwise pick up the upward tail of the
/// Monte Carlo error.
#[allow(clippy::too_many_arguments)]
pub fn strong_ratio(
    m: &Manifold,
    field: &WeightField,
    points: &PointSet,
    dmat: &DistanceMatrix,
    pairs: &[(usize, usize)],
    eta: f64,
    budget: usize,
    seed: u64,
) -> Result<StrongReport> {
    field.validate(m)?;
    let rows: HashMap<usize, usize> = dmat.sources.iter().enumerate().map(|(r, s)| (*s, r)).collect();
    let cols: HashMap<usize, usize> = dmat.targets.iter().enumerate().map(|(c, t)| (*t, c)).collect();
    let mut work = Vec::new();
    let mut skipped = 0;
    for (k, &(s, t)) in pairs.iter().enumerate() {
        let (Some(&r), Some(&c)) = (rows.get(&s), cols.get(&t)) else {
            return Err(Error::input(format!("distance matrix has no entry for pair ({s}, {t})")));
        };
        if s >= points.len() || t >= points.len() {
            return Err(Error::input(format!("pair ({s}, {t}) out of range")));
        }
        let d0 = m.d0(points.get(s), points.get(t));
        if d0 > eta || d0 == 0.0 {
            skipped += 1;
            continue;
        }
        work.push((k, s, t, d0, dmat.metric(r, c)));
    }
    if work.is_empty() {
        return Err(Error::Sampling("no pair with 0 < d₀ ≤ eta".into()));
    }
    let n = m.dim() as f64;
    let rhos: Vec<(f64, f64)> = work
        .par_iter()
        .map(|&(k, s, t, d0, df)| {
            let (x, y) = (points.get(s), points.get(t));
            let sd = edge_seed(seed, k);
            let mass = |b: BallSpec| Ok::<f64, Error>(field.ball_integrals_angular(m, &b, &[n], budget, sd)?[0].value);
            let at_x = mass(BallSpec::new(x.to_vec(), d0))?;
            let centered = mass(BallSpec::new(m.midpoint(x, y)?, 0.5 * d0))?;
            if !(at_x > 0.0 && centered > 0.0 && df.is_finite()) {
                return Err(Error::Integration(format!("non-finite strong ratio for pair ({s}, {t})")));
            }
            Ok((df / at_x.powf(1.0 / n), df / centered.powf(1.0 / n)))
        })
        .collect::<Result<_>>()?;
    let spread = |r: f64| r.max(1.0 / r);
    let (mut theta, mut worst) = (f64::NEG_INFINITY, (0, 0));
    for (&(_, s, t, _, _), (r, _)) in work.iter().zip(&rhos) {
        if spread(*r) > theta {
            theta = spread(*r);
            worst = (s, t);
        }
    }
    let rho_min = rhos.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let rho_max = rhos.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    Ok(StrongReport {
        theta,
        theta_centered: rhos.iter().map(|r| spread(r.1)).fold(1.0, f64::max),
        rho_min,
        rho_max,
        upper_constant: rho_max.powf(n),
        pairs: work.len(),
        skipped,
        worst,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiHolderFit {
    /// Least-squares slope of `ln(d_f/M^{1/n})` against `ln d₀`.
    pub slope: f64,
    /// Exponent `α`: the slope clipped to `(0, 1]`.
    pub alpha_low: f64,
    /// `1/α`, the exponent of the lower bound.
    pub alpha_high: f64,
    /// Smallest `C` with `d_f ≤ C M^{1/n} d₀^α`.
    pub c_upper: f64,
    /// Smallest `C` with `M^{1/n} d₀^{1/α} / C ≤ d_f`.
    pub c_lower: f64,
    pub constant: f64,
    pub pairs: usize,
}

fn check_aligned(a: &DistanceMatrix, b: &DistanceMatrix) -> Result<()> {
    if a.sources != b.sources || a.targets != b.targets {
        return Err(Error::input("distance matrices must share sources and targets"));
    }
    Ok(())
}

/// Two-sided Hölder fit of `d_f` against `d₀`, normalized by the total
/// mass `M`.
pub fn biholder_fit(dmat_f: &DistanceMatrix, dmat_0: &DistanceMatrix, mass_total: f64, n: usize) -> Result<BiHolderFit> {
    check_aligned(dmat_f, dmat_0)?;
    if !(mass_total > 0.0 && mass_total.is_finite()) || n == 0 {
        return Err(Error::input("total mass must be positive and n ≥ 1"));
    }
    let scale = mass_total.powf(1.0 / n as f64);
    let mut pts = Vec::new();
    for r in 0..dmat_f.sources.len() {
        for c in 0..dmat_f.targets.len() {
            let (df, d0) = (dmat_f.metric(r, c), dmat_0.metric(r, c));
            if d0 > 0.0 && df > 0.0 && df.is_finite() {
                pts.push((d0, df / scale));
            }
        }
    }
    if pts.len() < 10 {
        return Err(Error::Sampling(format!("only {} usable pairs; need 10", pts.len())));
    }
    let k = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Sampling("all pairs at the same d₀; slope undefined".into()));
    }
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx;
    let alpha = slope.clamp(f64::EPSILON, 1.0);
    let c_upper = pts.iter().map(|(d0, d)| d / d0.powf(alpha)).fold(0.0, f64::max);
    let c_lower = pts.iter().map(|(d0, d)| d0.powf(1.0 / alpha) / d).fold(0.0, f64::max);
    Ok(BiHolderFit {
        slope,
        alpha_low: alpha,
        alpha_high: 1.0 / alpha,
        c_upper,
        c_lower,
        constant: c_upper.max(c_lower),
        pairs: pts.len(),
    })
}

/// `sup |d(x,y) − d(x',y')| / (d₀(x,x')^α + d₀(y,y')^α)` over quadruples of
/// the (square) node set.
pub fn holder_seminorm(dmat: &DistanceMatrix, d0mat: &DistanceMatrix, alpha: f64) -> Result<f64> {
    check_aligned(dmat, d0mat)?;
    seminorm(|i, j| dmat.metric(i, j), d0mat, alpha)
}

/// [`holder_seminorm`] of the difference `a − b`.
pub fn holder_seminorm_diff(a: &DistanceMatrix, b: &DistanceMatrix, d0mat: &DistanceMatrix, alpha: f64) -> Result<f64> {
    check_aligned(a, d0mat)?;
    check_aligned(b, d0mat)?;
    seminorm(|i, j| a.metric(i, j) - b.metric(i, j), d0mat, alpha)
}

/// Exhaustive up to 30 nodes; beyond, every quadruple with `x = x'` or
/// `y = y'` (when there are at most 4·10⁶ of them) plus 10⁶ random ones.
fn seminorm(d: impl Fn(usize, usize) -> f64 + Sync, d0: &DistanceMatrix, alpha: f64) -> Result<f64> {
    if d0.sources != d0.targets {
        return Err(Error::input("Hölder seminorm needs matrices over one node set"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::input("alpha must lie in (0, 1]"));
    }
    let n = d0.sources.len();
    let ratio = |i: usize, j: usize, k: usize, l: usize| {
        let den = d0.metric(i, k).powf(alpha) + d0.metric(j, l).powf(alpha);
        if den > 0.0 {
            (d(i, j) - d(k, l)).abs() / den
        } else {
            0.0
        }
    };
    if n <= 30 {
        let best = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut b: f64 = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            b = b.max(ratio(i, j, k, l));
                        }
                    }
                }
                b
            })
            .reduce(|| 0.0, f64::max);
        return Ok(best);
    }
    let mut best: f64 = 0.0;
    if n * n * n <= 4_000_000 {
        best = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut b: f64 = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        b = b.max(ratio(i, j, k, j)).max(ratio(i, j, i, k));
                    }
                }
                b
            })
            .reduce(|| 0.0, f64::max);
    }
    let mut s: u64 = 0x9E37_79B9_7F4A_7C15;
    for _ in 0..1_000_000 {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        let pick = |shift: u32| ((s >> shift) % n as u64) as usize;
        best = best.max(ratio(pick(0), pick(16), pick(32), pick(48)));
    }
    Ok(best)
}
