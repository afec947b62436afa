//! One-dimensional quadrature rules and a few closed-form volumes.

use std::collections::BinaryHeap;
use std::f64::consts::PI;

/// Volume of the Euclidean unit n-ball, `π^{n/2} / Γ(n/2 + 1)`.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / n as f64 * unit_ball_volume(n - 2),
    }
}

/// Surface area of the unit sphere `S^{k}` sitting in `R^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    (k + 1) as f64 * unit_ball_volume(k + 1)
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre_unit(k: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(k >= 1);
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    let m = k.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_k.
        let mut x = (PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(k, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(k, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 0.5 * w;
        nodes[k - 1 - i] = 0.5 * (1.0 + x);
        weights[k - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(k: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Settings for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOpts {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_intervals: usize,
}

impl Default for AdaptiveOpts {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_intervals: 2000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    abs_err: Vec<f64>,
    priority: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.priority
            .total_cmp(&other.priority)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn gk15<F: FnMut(f64, &mut [f64])>(f: &mut F, a: f64, b: f64, k: usize, buf: &mut [f64]) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; k];
    let mut gauss = vec![0.0; k];
    f(c, buf);
    for j in 0..k {
        kron[j] += WGK[7] * buf[j];
        gauss[j] += WG[3] * buf[j];
    }
    for i in 0..7 {
        let dx = h * XGK[i];
        for x in [c - dx, c + dx] {
            f(x, buf);
            for j in 0..k {
                kron[j] += WGK[i] * buf[j];
                if i % 2 == 1 {
                    gauss[j] += WG[i / 2] * buf[j];
                }
            }
        }
    }
    let mut abs_err = vec![0.0; k];
    for j in 0..k {
        kron[j] *= h;
        gauss[j] *= h;
        abs_err[j] = (kron[j] - gauss[j]).abs();
    }
    Segment {
        a,
        b,
        value: kron,
        abs_err,
        priority: 0.0,
    }
}

// Largest error-to-magnitude ratio over components; NaN counts as worst.
fn relative(err: &[f64], total: &[f64]) -> f64 {
    let mut r: f64 = 0.0;
    for (e, t) in err.iter().zip(total) {
        let q = if t.abs() > 0.0 {
            e / t.abs()
        } else if *e > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        if q.is_nan() {
            return f64::INFINITY;
        }
        r = r.max(q);
    }
    r
}

/// Globally adaptive Gauss-Kronrod (7/15) integration of a vector-valued
/// integrand over `[a, b]`. Errors are measured relative to each
/// component's running total, so multiplying the integrand by a constant
/// leaves the subdivision unchanged.
pub fn integrate_adaptive<F>(mut f: F, a: f64, b: f64, k: usize, opts: AdaptiveOpts) -> Vec<f64>
where
    F: FnMut(f64, &mut [f64]),
{
    if b <= a {
        return vec![0.0; k];
    }
    let mut buf = vec![0.0; k];
    let first = gk15(&mut f, a, b, k, &mut buf);
    let mut total = first.value.clone();
    let mut err = first.abs_err.clone();
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut count = 1;
    while count < opts.max_intervals {
        let rel = relative(&err, &total);
        if rel <= opts.rel_tol || err.iter().all(|e| *e <= opts.abs_tol) {
            break;
        }
        let worst = heap.pop().expect("non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            heap.push(worst);
            break;
        }
        let mut left = gk15(&mut f, worst.a, mid, k, &mut buf);
        let mut right = gk15(&mut f, mid, worst.b, k, &mut buf);
        for j in 0..k {
            total[j] += left.value[j] + right.value[j] - worst.value[j];
            err[j] += left.abs_err[j] + right.abs_err[j] - worst.abs_err[j];
            err[j] = err[j].max(0.0);
        }
        left.priority = relative(&left.abs_err, &total);
        right.priority = relative(&right.abs_err, &total);
        heap.push(left);
        heap.push(right);
        count += 1;
    }
    sum_segments(&heap, k)
}

// Exact re-summation in interval order: independent of the running
// totals' rounding history.
fn sum_segments(heap: &BinaryHeap<Segment>, k: usize) -> Vec<f64> {
    let mut segs: Vec<&Segment> = heap.iter().collect();
    segs.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut total = vec![0.0; k];
    for s in segs {
        for j in 0..k {
            total[j] += s.value[j];
        }
    }
    total
}

/// Scalar convenience wrapper around [`integrate_adaptive`].
pub fn integrate_scalar<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: AdaptiveOpts) -> f64 {
    integrate_adaptive(|x, out| out[0] = f(x), a, b, 1, opts)[0]
}
