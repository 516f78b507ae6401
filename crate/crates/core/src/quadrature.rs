//! Adaptive Gauss–Kronrod integration and fixed Gaussian rules.
//!
//! The adaptive driver is a global bisection scheme in the QUADPACK style: every
//! interval carries a (G7, K15) error estimate, and the interval with the largest
//! estimate is split until the summed estimate meets the tolerance or the
//! evaluation budget is exhausted. Exhausting the budget is an error, never a
//! silently truncated result.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::scalar::{QuadValue, Real};

/// Default hard cap on integrand evaluations for a single adaptive call.
pub const DEFAULT_MAX_EVALS: usize = 1_000_000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_evals: usize,
}

impl<T: Real> QuadOptions<T> {
    pub fn absolute(abs_tol: T) -> Self {
        Self {
            abs_tol,
            rel_tol: T::zero(),
            max_evals: DEFAULT_MAX_EVALS,
        }
    }

    pub fn with_rel_tol(mut self, rel_tol: T) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    fn target(&self, value_mag: T) -> T {
        self.abs_tol.max(self.rel_tol * value_mag)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<V, T> {
    pub value: V,
    pub abs_error: T,
    pub evals: usize,
}

/// One 15-point Kronrod panel: returns (K15 value, error estimate).
pub fn gk15<T, V, F>(f: &F, a: T, b: T) -> (V, T)
where
    T: Real,
    V: QuadValue<T>,
    F: Fn(T) -> V,
{
    let center = (a + b) * T::lit(0.5);
    let half = (b - a) * T::lit(0.5);
    let abs_half = half.abs();

    let f_center = f(center);
    let mut res_k = f_center * T::lit(WGK[7]);
    let mut res_g = f_center * T::lit(WG[3]);
    let mut fv1 = [V::zero_value(); 7];
    let mut fv2 = [V::zero_value(); 7];
    let mut res_abs = f_center.magnitude() * T::lit(WGK[7]);

    for j in 0..7 {
        let x = half * T::lit(XGK[j]);
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        let sum = f1 + f2;
        res_k = res_k + sum * T::lit(WGK[j]);
        if j % 2 == 1 {
            res_g = res_g + sum * T::lit(WG[j / 2]);
        }
        res_abs = res_abs + (f1.magnitude() + f2.magnitude()) * T::lit(WGK[j]);
    }

    let mean = res_k * T::lit(0.5);
    let mut res_asc = (f_center - mean).magnitude() * T::lit(WGK[7]);
    for j in 0..7 {
        res_asc = res_asc + ((fv1[j] - mean).magnitude() + (fv2[j] - mean).magnitude()) * T::lit(WGK[j]);
    }

    let value = res_k * half;
    res_abs = res_abs * abs_half;
    res_asc = res_asc * abs_half;
    let raw = ((res_k - res_g) * half).magnitude();
    (value, rescale_error(raw, res_abs, res_asc))
}

fn rescale_error<T: Real>(err: T, res_abs: T, res_asc: T) -> T {
    let mut scaled = err;
    if res_asc > T::zero() && scaled > T::zero() {
        let scale = (T::lit(200.0) * scaled / res_asc).powf(T::lit(1.5));
        scaled = if scale < T::one() { res_asc * scale } else { res_asc };
    }
    let tiny = T::min_positive_value() / (T::lit(50.0) * T::epsilon());
    if res_abs > tiny {
        let min_err = T::lit(50.0) * T::epsilon() * res_abs;
        if min_err > scaled {
            scaled = min_err;
        }
    }
    scaled
}

struct Panel<V, T> {
    a: T,
    b: T,
    value: V,
    error: T,
}

impl<V, T: Real> PartialEq for Panel<V, T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<V, T: Real> Eq for Panel<V, T> {}
impl<V, T: Real> PartialOrd for Panel<V, T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<V, T: Real> Ord for Panel<V, T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate<T, V, F>(f: F, a: T, b: T, opts: &QuadOptions<T>) -> Result<QuadResult<V, T>>
where
    T: Real,
    V: QuadValue<T>,
    F: Fn(T) -> V,
{
    integrate_panels(f, &[a, b], opts)
}

/// Adaptive integral over consecutive panels `[p0,p1], [p1,p2], ...`.
///
/// Initial breakpoints let callers pre-split oscillatory or kinked integrands.
pub fn integrate_panels<T, V, F>(f: F, points: &[T], opts: &QuadOptions<T>) -> Result<QuadResult<V, T>>
where
    T: Real,
    V: QuadValue<T>,
    F: Fn(T) -> V,
{
    if points.len() < 2 {
        return Err(Error::InvalidInput("at least two breakpoints required".into()));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(Error::InvalidInput("non-finite integration limit".into()));
    }

    let mut heap = BinaryHeap::with_capacity(points.len() * 4);
    let mut evals = 0usize;
    let mut total = V::zero_value();
    let mut total_err = T::zero();
    // Panels too narrow to split further; their error stays in the total.
    let mut frozen_err = T::zero();

    for w in points.windows(2) {
        let (v, e) = gk15(&f, w[0], w[1]);
        evals += 15;
        total = total + v;
        total_err = total_err + e;
        heap.push(Panel { a: w[0], b: w[1], value: v, error: e });
    }

    loop {
        let target = opts.target(total.magnitude());
        if total_err <= target {
            break;
        }
        if evals + 30 > opts.max_evals {
            return Err(Error::QuadratureNoConvergence {
                achieved: total_err.to_f64_lossy(),
                target: target.to_f64_lossy(),
                evals,
            });
        }
        let Some(worst) = heap.pop() else {
            return Err(Error::QuadratureNoConvergence {
                achieved: total_err.to_f64_lossy(),
                target: target.to_f64_lossy(),
                evals,
            });
        };
        let mid = (worst.a + worst.b) * T::lit(0.5);
        let scale = worst.a.abs().max(worst.b.abs());
        if (worst.b - worst.a).abs() <= T::lit(4.0) * T::epsilon() * scale || mid == worst.a || mid == worst.b {
            frozen_err = frozen_err + worst.error;
            if heap.is_empty() {
                return Err(Error::QuadratureNoConvergence {
                    achieved: total_err.to_f64_lossy(),
                    target: target.to_f64_lossy(),
                    evals,
                });
            }
            continue;
        }
        let (v1, e1) = gk15(&f, worst.a, mid);
        let (v2, e2) = gk15(&f, mid, worst.b);
        evals += 30;
        total = total - worst.value + v1 + v2;
        total_err = total_err - worst.error + e1 + e2;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
    }

    // Re-sum from scratch to shed the drift of incremental updates.
    let mut value = V::zero_value();
    let mut err = frozen_err;
    for p in heap.iter() {
        value = value + p.value;
        err = err + p.error;
    }
    Ok(QuadResult { value, abs_error: err, evals })
}

/// Fixed Gaussian rule on its canonical domain.
#[derive(Debug, Clone)]
pub struct FixedRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl FixedRule {
    /// Gauss–Legendre rule on `[-1, 1]` with `n` nodes.
    pub fn legendre(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_eval(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_eval(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Gauss–Hermite rule for the weight `exp(-x^2)` on the real line.
    pub fn hermite(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut z: f64 = 0.0;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-0.166_67),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * nf).sqrt() * p2;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = 2.0 / (pp * pp);
        }
        // `nodes` currently holds the positive half in decreasing order.
        let mut full_nodes = Vec::with_capacity(n);
        let mut full_weights = Vec::with_capacity(n);
        for i in 0..m {
            full_nodes.push(-nodes[i]);
            full_weights.push(weights[i]);
        }
        for i in (0..(n / 2)).rev() {
            full_nodes.push(nodes[i]);
            full_weights.push(weights[i]);
        }
        if n % 2 == 1 {
            full_nodes[m - 1] = 0.0;
        }
        Self { nodes: full_nodes, weights: full_weights }
    }

    /// Shared Gauss–Legendre rule; rules are built once per size.
    pub fn legendre_cached(n: usize) -> Arc<Self> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FixedRule>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(r) = cache.lock().unwrap().get(&n) {
            return r.clone();
        }
        let rule = Arc::new(Self::legendre(n));
        cache.lock().unwrap().entry(n).or_insert(rule).clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Apply the (Legendre) rule mapped to `[a, b]`.
    pub fn apply<T, V, F>(&self, f: F, a: T, b: T) -> V
    where
        T: Real,
        V: QuadValue<T>,
        F: Fn(T) -> V,
    {
        let c = (a + b) * T::lit(0.5);
        let h = (b - a) * T::lit(0.5);
        let mut acc = V::zero_value();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(c + h * T::lit(*x)) * T::lit(*w);
        }
        acc * h
    }
}

fn legendre_eval(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
