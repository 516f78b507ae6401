//! Calibrated decay envelopes for `|FΓ|`.
//!
//! * `|FΓ| ≤ C / |ξ₂|^{1/2}`
//! * `|FΓ| ≤ C₄ / |ξ₁| + K(τ, x₁) |ξ₂| / |ξ₁|`, with `K = a τ + b |x₁|`
//! * `(1 + |ξ|^{2/3}) |FΓ|² ≤ κ̃(τ, x₁)`, with `κ̃ = (a τ + b |x₁| + c)²`
//!
//! Constants are the smallest values consistent with a sweep of `|FΓ|` over a
//! fixed grid, inflated by a safety factor and stored with a hash of the grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{fourier_gamma, Frequency};
use crate::error::{Error, Result};

const DEFAULT_TOML: &str = include_str!("../../data/bound_constants.toml");

/// Sweep over which the constants are fitted. Frequencies are `r (cos a, sin a)`
/// with `a = kπ/(n_angles − 1)`, which covers every `|FΓ|` value by symmetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationGrid {
    pub taus: Vec<f64>,
    pub x1s: Vec<f64>,
    pub radii: Vec<f64>,
    pub n_angles: usize,
    pub tol: f64,
    pub safety: f64,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        let per_decade = 6;
        let radii = (0..=5 * per_decade)
            .map(|k| 10f64.powf(-1.0 + k as f64 / per_decade as f64))
            .collect();
        Self {
            taus: (1..=8).map(|k| 0.25 * k as f64).collect(),
            x1s: (0..=8).map(|k| -2.0 + 0.5 * k as f64).collect(),
            radii,
            n_angles: 13,
            tol: 1e-9,
            safety: 1.1,
        }
    }
}

impl CalibrationGrid {
    pub fn frequencies(&self) -> Vec<Frequency<f64>> {
        let last = self.n_angles.saturating_sub(1).max(1);
        let mut out = Vec::with_capacity(self.radii.len() * self.n_angles);
        for &r in &self.radii {
            for k in 0..self.n_angles {
                let xi = if 2 * k == last {
                    Frequency::new(0.0, r)
                } else if k == 0 {
                    Frequency::new(r, 0.0)
                } else if k == last {
                    Frequency::new(-r, 0.0)
                } else {
                    let a = std::f64::consts::PI * k as f64 / last as f64;
                    Frequency::new(r * a.cos(), r * a.sin())
                };
                out.push(xi);
            }
        }
        out
    }

    /// SHA-256 over the shortest round-trip decimal form of every grid value.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |tag: &str, xs: &[f64]| {
            h.update(tag.as_bytes());
            for x in xs {
                h.update(format!("{x:?};").as_bytes());
            }
        };
        feed("taus", &self.taus);
        feed("x1s", &self.x1s);
        feed("radii", &self.radii);
        feed("n_angles", &[self.n_angles as f64]);
        feed("tol", &[self.tol]);
        feed("safety", &[self.safety]);
        hex::encode(h.finalize())
    }
}

/// One calibration sample.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub tau: f64,
    pub x1: f64,
    pub xi: Frequency<f64>,
    pub modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub c_beta: f64,
    pub c4: f64,
    /// `(a, b)` in `K(τ, x₁) = a τ + b |x₁|`.
    pub k_lin: [f64; 2],
    /// `(a, b, c)` in `κ̃(τ, x₁) = (a τ + b |x₁| + c)²`.
    pub kappa_lin: [f64; 3],
    pub grid_hash: String,
}

impl BoundConstants {
    /// Constants shipped with the crate.
    pub fn shipped() -> Result<Self> {
        Self::from_toml(DEFAULT_TOML)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s).map_err(|e| Error::Calibration(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Calibration(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.c_beta, self.c4, self.k_lin[0], self.k_lin[1], self.kappa_lin[0], self.kappa_lin[1], self.kappa_lin[2]];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) || self.c_beta <= 0.0 || self.c4 <= 0.0 {
            return Err(Error::Calibration("bound constants must be finite and positive".into()));
        }
        if self.kappa_lin.iter().all(|v| *v == 0.0) {
            return Err(Error::Calibration("kappa envelope is identically zero".into()));
        }
        Ok(())
    }

    pub fn k(&self, tau: f64, x1: f64) -> f64 {
        self.k_lin[0] * tau + self.k_lin[1] * x1.abs()
    }

    pub fn kappa_tilde(&self, tau: f64, x1: f64) -> f64 {
        let l = self.kappa_lin[0] * tau + self.kappa_lin[1] * x1.abs() + self.kappa_lin[2];
        l * l
    }

    /// `C / |ξ₂|^{1/2}`.
    pub fn bound_xi2(&self, tau: f64, x1: f64, xi: Frequency<f64>) -> Result<f64> {
        check(tau, x1, &xi)?;
        if xi.xi2 == 0.0 {
            return Err(Error::Domain("bound_xi2 needs xi2 != 0".into()));
        }
        Ok(self.c_beta / xi.xi2.abs().sqrt())
    }

    /// `C₄ / |ξ₁| + K(τ, x₁) |ξ₂| / |ξ₁|`.
    pub fn bound_xi1(&self, tau: f64, x1: f64, xi: Frequency<f64>) -> Result<f64> {
        check(tau, x1, &xi)?;
        if xi.xi1 == 0.0 {
            return Err(Error::Domain("bound_xi1 needs xi1 != 0".into()));
        }
        Ok((self.c4 + self.k(tau, x1) * xi.xi2.abs()) / xi.xi1.abs())
    }

    /// `√κ̃(τ, x₁) / (1 + |ξ|^{2/3})^{1/2}`, the modulus form of the squared envelope.
    pub fn bound_global(&self, tau: f64, x1: f64, xi: Frequency<f64>) -> Result<f64> {
        check(tau, x1, &xi)?;
        Ok((self.kappa_tilde(tau, x1) / (1.0 + xi.norm().powf(2.0 / 3.0))).sqrt())
    }

    /// Sweeps `|FΓ|` over `grid` (in parallel) and fits the constants.
    pub fn calibrate(grid: &CalibrationGrid) -> Result<Self> {
        let samples = sweep(grid)?;
        Self::fit(&samples, grid.safety, grid.hash())
    }

    pub fn fit(samples: &[Sample], safety: f64, grid_hash: String) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Calibration("no calibration samples".into()));
        }
        let c_beta = samples
            .iter()
            .filter(|s| s.xi.xi2 != 0.0)
            .map(|s| s.modulus * s.xi.xi2.abs().sqrt())
            .fold(0.0, f64::max)
            * safety;
        let c4 = samples
            .iter()
            .filter(|s| s.xi.xi2 == 0.0 && s.xi.xi1 != 0.0)
            .map(|s| s.modulus * s.xi.xi1.abs())
            .fold(0.0, f64::max)
            * safety;

        let mut k_rows = Vec::new();
        let mut kappa_rows = Vec::new();
        for s in samples {
            let (t, a) = (s.tau, s.x1.abs());
            if s.xi.xi1 != 0.0 && s.xi.xi2 != 0.0 {
                let need = (s.modulus * s.xi.xi1.abs() - c4) / s.xi.xi2.abs();
                if need > 0.0 {
                    k_rows.push((vec![t, a], need));
                }
            }
            kappa_rows.push((vec![t, a, 1.0], s.modulus * (1.0 + s.xi.norm().powf(2.0 / 3.0)).sqrt()));
        }
        let k_lin = min_sum_cover(&reduce_rows(k_rows), 2)?;
        let kappa_lin = min_sum_cover(&reduce_rows(kappa_rows), 3)?;
        let c = Self {
            c_beta,
            c4,
            k_lin: [k_lin[0] * safety, k_lin[1] * safety],
            kappa_lin: [kappa_lin[0] * safety, kappa_lin[1] * safety, kappa_lin[2] * safety],
            grid_hash,
        };
        c.validate()?;
        Ok(c)
    }
}

/// Direction along which a decay exponent is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayPath {
    /// `ξ = (0, s)`.
    Xi2Axis,
    /// `ξ = (s, s^{2/3})`, plotted against `|ξ|`.
    Matched,
}

impl DecayPath {
    pub fn frequency(self, s: f64) -> Frequency<f64> {
        match self {
            DecayPath::Xi2Axis => Frequency::new(0.0, s),
            DecayPath::Matched => Frequency::new(s, s.powf(2.0 / 3.0)),
        }
    }
}

/// Least-squares line through `(ln |ξ|, ln |FΓ|)`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub path: DecayPath,
    pub tau: f64,
    pub x1: f64,
    pub slope: f64,
    pub intercept: f64,
    /// `(|ξ|, |FΓ|)` pairs used by the fit.
    pub samples: Vec<(f64, f64)>,
}

/// Fits the decay exponent of `|FΓ(τ, x₁, 0; ·)|` along `path` using `n` log-spaced
/// parameters in `[lo, hi]`. Exact zeros of `|FΓ|` are skipped.
pub fn decay_slope(path: DecayPath, tau: f64, x1: f64, lo: f64, hi: f64, n: usize, tol: f64) -> Result<DecayFit> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || n < 2 {
        return Err(Error::InvalidInput("decay fit needs 0 < lo < hi and n >= 2".into()));
    }
    let params: Vec<f64> = (0..n)
        .map(|k| (lo.ln() + (hi / lo).ln() * k as f64 / (n - 1) as f64).exp())
        .collect();
    let samples = params
        .par_iter()
        .map(|&s| {
            let xi = path.frequency(s);
            Ok((xi.norm(), fourier_gamma(tau, x1, 0.0, xi, tol)?.norm()))
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = samples.iter().filter(|p| p.1 > 0.0).map(|&(r, m)| (r.ln(), m.ln())).collect();
    if pts.len() < 2 {
        return Err(Error::PreconditionFailed("transform vanishes along the decay path".into()));
    }
    let (slope, intercept) = least_squares(&pts);
    Ok(DecayFit { path, tau, x1, slope, intercept, samples })
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Outcome of checking `(1 + |ξ|^{2/3}) |FΓ|² ≤ κ̃(τ, x₁)` at random points.
#[derive(Debug, Clone, Serialize)]
pub struct DominanceReport {
    pub checked: usize,
    pub violations: usize,
    /// Largest `(1 + |ξ|^{2/3}) |FΓ|² / κ̃` seen.
    pub worst_ratio: f64,
}

impl DominanceReport {
    pub fn passes(&self) -> bool {
        self.violations == 0
    }
}

/// Draws `n` points with `τ ∈ (0, 2]`, `x₁ ∈ [−2, 2]`, `|ξ|` log-uniform in
/// `[10, 10³]` and a uniform direction, and tests the squared envelope.
pub fn dominance_sweep(c: &BoundConstants, n: usize, seed: u64, tol: f64) -> Result<DominanceReport> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<(f64, f64, Frequency<f64>)> = (0..n)
        .map(|_| {
            let tau = 2.0 - rng.random_range(0.0..2.0);
            let x1 = rng.random_range(-2.0..=2.0);
            let r = 10f64.powf(rng.random_range(1.0..=3.0));
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            (tau, x1, Frequency::new(r * a.cos(), r * a.sin()))
        })
        .collect();
    let ratios = pts
        .par_iter()
        .map(|&(tau, x1, xi)| {
            let m = fourier_gamma(tau, x1, 0.0, xi, tol)?.norm();
            Ok((1.0 + xi.norm().powf(2.0 / 3.0)) * m * m / c.kappa_tilde(tau, x1))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(DominanceReport {
        checked: n,
        violations: ratios.iter().filter(|&&q| q > 1.0).count(),
        worst_ratio: ratios.iter().copied().fold(0.0, f64::max),
    })
}

fn check(tau: f64, x1: f64, xi: &Frequency<f64>) -> Result<()> {
    if !(tau > 0.0) || !tau.is_finite() || !x1.is_finite() || !xi.is_finite() {
        return Err(Error::Domain("bounds need tau > 0 and finite arguments".into()));
    }
    Ok(())
}

/// Evaluates `|FΓ|` on the grid.
pub fn sweep(grid: &CalibrationGrid) -> Result<Vec<Sample>> {
    let freqs = grid.frequencies();
    let jobs: Vec<(f64, f64, Frequency<f64>)> = grid
        .taus
        .iter()
        .flat_map(|&t| grid.x1s.iter().map(move |&x| (t, x)))
        .flat_map(|(t, x)| freqs.iter().map(move |&xi| (t, x, xi)))
        .collect();
    jobs.par_iter()
        .map(|&(tau, x1, xi)| {
            let v = fourier_gamma(tau, x1, 0.0, xi, grid.tol)?;
            Ok(Sample { tau, x1, xi, modulus: v.norm() })
        })
        .collect()
}

/// Keeps the largest requirement per distinct feature vector.
fn reduce_rows(rows: Vec<(Vec<f64>, f64)>) -> Vec<(Vec<f64>, f64)> {
    let mut out: Vec<(Vec<f64>, f64)> = Vec::new();
    for (f, need) in rows {
        match out.iter_mut().find(|(g, _)| *g == f) {
            Some(slot) => slot.1 = slot.1.max(need),
            None => out.push((f, need)),
        }
    }
    out
}

/// Minimizes `Σ c_j` subject to `features · c ≥ need` and `c ≥ 0`, by enumerating
/// the vertices of the feasible polyhedron.
pub fn min_sum_cover(rows: &[(Vec<f64>, f64)], dim: usize) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Ok(vec![0.0; dim]);
    }
    let mut all: Vec<(Vec<f64>, f64)> = rows.to_vec();
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        all.push((e, 0.0));
    }
    let scale = rows.iter().map(|r| r.1.abs()).fold(0.0, f64::max).max(1e-300);
    let feasible = |c: &[f64]| {
        c.iter().all(|v| *v >= -1e-12 * scale)
            && rows
                .iter()
                .all(|(f, need)| f.iter().zip(c).map(|(a, b)| a * b).sum::<f64>() >= need - 1e-12 * scale)
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx: Vec<usize> = (0..dim).collect();
    loop {
        let a: Vec<Vec<f64>> = idx.iter().map(|&i| all[i].0.clone()).collect();
        let b: Vec<f64> = idx.iter().map(|&i| all[i].1).collect();
        if let Some(c) = solve_dense(a, b) {
            if feasible(&c) {
                let obj: f64 = c.iter().sum();
                if best.as_ref().is_none_or(|(o, _)| obj < *o) {
                    best = Some((obj, c));
                }
            }
        }
        // next combination in lexicographic order
        let n = all.len();
        let mut k = dim;
        while k > 0 && idx[k - 1] == n - dim + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        idx[k - 1] += 1;
        for j in k..dim {
            idx[j] = idx[j - 1] + 1;
        }
    }
    best.map(|(_, c)| c.into_iter().map(|v| v.max(0.0)).collect())
        .ok_or_else(|| Error::Calibration("envelope fit is infeasible".into()))
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `cargo test --release -p dcspde regenerate_shipped_constants -- --ignored`
    #[test]
    #[ignore]
    fn regenerate_shipped_constants() {
        let c = BoundConstants::calibrate(&CalibrationGrid::default()).unwrap();
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/bound_constants.toml");
        std::fs::write(path, c.to_toml().unwrap()).unwrap();
        println!("{c:?}");
    }

    #[test]
    fn cover_lp_small_cases() {
        // a ≥ 1, b ≥ 2 from axis-aligned rows
        let rows = vec![(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 2.0)];
        let c = min_sum_cover(&rows, 2).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
        // a + b ≥ 1 alone: any split costs 1
        let c = min_sum_cover(&[(vec![1.0, 1.0], 1.0)], 2).unwrap();
        assert!((c[0] + c[1] - 1.0).abs() < 1e-12);
        // three variables with a binding constant term
        let rows = vec![(vec![0.0, 0.0, 1.0], 0.5), (vec![2.0, 0.0, 1.0], 2.5), (vec![0.0, 2.0, 1.0], 0.5)];
        let c = min_sum_cover(&rows, 3).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && c[1].abs() < 1e-12 && (c[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cover_lp_satisfies_random_rows() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<(Vec<f64>, f64)> = (0..40)
            .map(|_| {
                let f = vec![rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), 1.0];
                (f, rng.random_range(0.0..3.0))
            })
            .collect();
        let c = min_sum_cover(&rows, 3).unwrap();
        for (f, need) in &rows {
            let v: f64 = f.iter().zip(&c).map(|(a, b)| a * b).sum();
            assert!(v >= need - 1e-9);
        }
    }

    #[test]
    fn shipped_constants_match_grid() {
        let c = BoundConstants::shipped().unwrap();
        assert_eq!(c.grid_hash, CalibrationGrid::default().hash());
        let again = BoundConstants::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn c4_is_the_sinc_envelope() {
        // on ξ₂ = 0, |FΓ| = |sin(τξ₁)| / |ξ₁|, so the fitted C₄ is at most the safety factor
        let c = BoundConstants::shipped().unwrap();
        assert!(c.c4 <= 1.1 + 1e-9 && c.c4 > 0.9);
        for &(tau, xi1) in &[(0.5f64, 3.0f64), (1.7, 40.0), (2.0, -0.2)] {
            let v = fourier_gamma(tau, 0.7, 0.0, Frequency::new(xi1, 0.0), 1e-12).unwrap();
            assert!((v.norm() - (tau * xi1).sin().abs() / xi1.abs()).abs() < 1e-10);
        }
    }

    #[test]
    fn decay_fit_recovers_sinc_exponent() {
        // on ξ₂ = 0 the modulus is |sin τξ₁| / |ξ₁|; sampling where sin τξ₁ = ±1 gives slope −1
        let fit = decay_slope(DecayPath::Xi2Axis, 1.0, 0.5, 1e2, 1e3, 9, 1e-10).unwrap();
        assert!(fit.slope < 0.0 && fit.samples.len() == 9);
        let pts: Vec<(f64, f64)> = (0..20).map(|k| (k as f64 * 0.3, 2.0 - 0.75 * k as f64 * 0.3)).collect();
        let (m, b) = least_squares(&pts);
        assert!((m + 0.75).abs() < 1e-12 && (b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dominance_sweep_is_seeded() {
        let c = BoundConstants::shipped().unwrap();
        let a = dominance_sweep(&c, 12, 5, 1e-9).unwrap();
        let b = dominance_sweep(&c, 12, 5, 1e-9).unwrap();
        assert_eq!(a.worst_ratio, b.worst_ratio);
        assert!(a.passes(), "{a:?}");
    }

    #[test]
    fn bound_domain_errors() {
        let c = BoundConstants::shipped().unwrap();
        assert!(matches!(c.bound_xi2(1.0, 0.0, Frequency::new(1.0, 0.0)), Err(Error::Domain(_))));
        assert!(matches!(c.bound_xi1(1.0, 0.0, Frequency::new(0.0, 1.0)), Err(Error::Domain(_))));
        assert!(matches!(c.bound_global(0.0, 0.0, Frequency::new(1.0, 1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn bounds_dominate_off_grid() {
        use rand::{Rng, SeedableRng};
        let c = BoundConstants::shipped().unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..120 {
            let tau = rng.random_range(0.01..2.0);
            let x1 = rng.random_range(-2.0..2.0);
            let r = 10f64.powf(rng.random_range(-1.0..3.0));
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            let xi = Frequency::new(r * a.cos(), r * a.sin());
            let m = fourier_gamma(tau, x1, 0.0, xi, 1e-10).unwrap().norm();
            assert!(m <= c.bound_xi2(tau, x1, xi).unwrap(), "xi2 bound at {tau} {x1} {xi:?}");
            assert!(m <= c.bound_xi1(tau, x1, xi).unwrap(), "xi1 bound at {tau} {x1} {xi:?}");
            assert!(m <= c.bound_global(tau, x1, xi).unwrap(), "global bound at {tau} {x1} {xi:?}");
        }
    }
}
