//! Truncated-gamma radial likelihood: distribution utilities, maximum
//! likelihood with multi-start simplex search, standard errors and AIC.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ExpData;
use crate::error::{Error, Result};
use crate::gauges::Gauge;
use crate::optim::{fd_hessian, halton, se_from_hessian, NelderMead};
use crate::radial::{decompose, exceedances, fit_threshold, ExceedanceSet, WindowSpec};
use crate::special::{gamma_q, ln_gamma, ln_gamma_density, ln_gamma_q};

/// Gamma survival function `P(R > r)` for shape `shape` and rate `rate`.
pub fn gamma_sf(r: f64, shape: f64, rate: f64) -> f64 {
    gamma_q(shape, rate * r)
}

fn check_positive(shape: f64, rate: f64, r0: f64) -> Result<()> {
    if shape > 0.0 && rate > 0.0 && r0 > 0.0 && shape.is_finite() && rate.is_finite() && r0.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "truncated gamma needs positive parameters, got shape={shape}, rate={rate}, r0={r0}"
        )))
    }
}

/// `P(R > r | R > r0)`.
pub fn trunc_gamma_sf(r: f64, shape: f64, rate: f64, r0: f64) -> f64 {
    if r <= r0 {
        return 1.0;
    }
    (ln_gamma_q(shape, rate * r) - ln_gamma_q(shape, rate * r0)).exp()
}

pub fn trunc_gamma_cdf(r: f64, shape: f64, rate: f64, r0: f64) -> Result<f64> {
    check_positive(shape, rate, r0)?;
    if r < r0 {
        return Err(Error::Domain(format!("r={r} lies below the truncation point {r0}")));
    }
    Ok(-(ln_gamma_q(shape, rate * r) - ln_gamma_q(shape, rate * r0)).exp_m1())
}

/// Solves `ln Q(a, x) = target` for `x >= lo`, where `ln Q(a, lo) >= target`.
fn invert_ln_q(a: f64, lo: f64, target: f64) -> f64 {
    let f = |x: f64| ln_gamma_q(a, x) - target;
    let mut lo = lo;
    let mut step = (a.max(1.0)).max(lo);
    let mut hi = lo + step;
    while f(hi) > 0.0 {
        lo = hi;
        step *= 2.0;
        hi = lo + step;
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let fx = f(x);
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = -(ln_gamma_density(a, x) - ln_gamma_q(a, x)).exp();
        let mut next = x - fx / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-14 * x.max(1e-300) || hi - lo <= 1e-14 * hi {
            return next;
        }
        x = next;
    }
    x
}

/// Inverse of [`trunc_gamma_cdf`] for `p` in `[0, 1)`.
pub fn trunc_gamma_quantile(p: f64, shape: f64, rate: f64, r0: f64) -> Result<f64> {
    check_positive(shape, rate, r0)?;
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("probability must lie in [0,1), got {p}")));
    }
    if p == 0.0 {
        return Ok(r0);
    }
    let x0 = rate * r0;
    let target = ln_gamma_q(shape, x0) + (-p).ln_1p();
    Ok(invert_ln_q(shape, x0, target) / rate)
}

/// Negative log-likelihood with the gauge rate supplied per observation.
pub fn nll_rates(alpha: f64, rates: &[f64], exc: &ExceedanceSet) -> f64 {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return f64::INFINITY;
    }
    let lg = ln_gamma(alpha);
    let mut total = 0.0;
    for ((&g, &r), &r0) in rates.iter().zip(&exc.r).zip(&exc.r0) {
        if !(g > 0.0 && g.is_finite()) {
            log::debug!("non-positive gauge rate {g} at an exceedance");
            return f64::INFINITY;
        }
        let ll = alpha * g.ln() - lg + (alpha - 1.0) * r.ln() - r * g - ln_gamma_q(alpha, g * r0);
        total -= ll;
    }
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}

/// Negative log-likelihood of the truncated-gamma model at `(alpha, gauge)`.
pub fn nll(alpha: f64, gauge: &Gauge, exc: &ExceedanceSet) -> f64 {
    let rates: Vec<f64> = exc.w.iter().map(|w| gauge.value(w)).collect();
    nll_rates(alpha, &rates, exc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub starts: usize,
    pub max_evals: usize,
    /// Starting shape; the dimension when absent.
    pub alpha_start: Option<f64>,
    pub hessian: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { starts: 5, max_evals: 4000, alpha_start: None, hessian: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeMethod {
    Hessian,
    Bootstrap,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub evals: usize,
    pub starts: usize,
    pub failed_starts: usize,
    pub best_start: usize,
    /// Finite-difference gradient norm at the optimum, transformed scale;
    /// absent when a neighbouring point has no finite likelihood.
    pub grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub gauge: Gauge,
    pub alpha: f64,
    /// `alpha` followed by the gauge's free parameter names.
    pub param_names: Vec<String>,
    pub se: Option<Vec<f64>>,
    pub se_method: SeMethod,
    pub nll: f64,
    pub aic: f64,
    pub n0: usize,
    pub convergence: Convergence,
}

impl FittedModel {
    pub fn n_params(&self) -> usize {
        1 + self.gauge.n_free()
    }

    /// `(alpha, theta)` in natural scale.
    pub fn estimates(&self) -> Vec<f64> {
        let mut v = vec![self.alpha];
        v.extend(self.gauge.free_params());
        v
    }

    pub fn rate(&self, w: &[f64]) -> f64 {
        self.gauge.value(w)
    }
}

pub fn aic(fit: &FittedModel) -> f64 {
    2.0 * fit.n_params() as f64 + 2.0 * fit.nll
}

/// Index of the lowest AIC; ties go to fewer parameters, then input order.
pub fn select_model(fits: &[FittedModel]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, f) in fits.iter().enumerate() {
        let Some(b) = best else {
            best = Some(i);
            continue;
        };
        let (a, c) = (f.aic, fits[b].aic);
        let tie = (a - c).abs() <= 1e-9 * a.abs().max(1.0);
        if (!tie && a < c) || (tie && f.n_params() < fits[b].n_params()) {
            best = Some(i);
        }
    }
    best
}

struct Objective<'a> {
    template: &'a Gauge,
    exc: &'a ExceedanceSet,
    transforms: Vec<crate::gauges::Transform>,
}

impl Objective<'_> {
    fn natural(&self, u: &[f64]) -> Vec<f64> {
        let mut v = vec![u[0].exp()];
        v.extend(self.transforms.iter().zip(&u[1..]).map(|(t, x)| t.to_natural(*x)));
        v
    }

    fn free(&self, psi: &[f64]) -> Vec<f64> {
        let mut v = vec![psi[0].ln()];
        v.extend(self.transforms.iter().zip(&psi[1..]).map(|(t, x)| t.to_free(*x)));
        v
    }

    fn at_natural(&self, psi: &[f64]) -> f64 {
        match self.template.with_free_params(&psi[1..]) {
            Ok(g) => nll(psi[0], &g, self.exc),
            Err(_) => f64::INFINITY,
        }
    }

    fn at_free(&self, u: &[f64]) -> f64 {
        if u.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        self.at_natural(&self.natural(u))
    }
}

/// Maximum-likelihood fit with `template` supplying family, structure and
/// starting gauge parameters.
pub fn fit_mle(exc: &ExceedanceSet, template: &Gauge, config: &FitConfig) -> Result<FittedModel> {
    let n0 = exc.n0();
    if n0 == 0 {
        return Err(Error::FitFailure("no exceedances to fit".into()));
    }
    if exc.dim() != template.dim() {
        return Err(Error::Dimension { expected: template.dim(), got: exc.dim() });
    }
    let k = 1 + template.n_free();
    if n0 < 10 * k {
        log::warn!("only {n0} exceedances for {k} parameters");
    }
    let obj = Objective { template, exc, transforms: template.transforms() };
    let alpha0 = config.alpha_start.unwrap_or(template.dim() as f64);
    let mut psi0 = vec![alpha0];
    psi0.extend(template.free_params());
    let u0 = obj.free(&psi0);
    let p = u0.len() - 1;
    let n_starts = if p == 0 { 1 } else { config.starts.max(1) };
    let starts: Vec<Vec<f64>> = (0..n_starts)
        .map(|i| {
            let mut u = u0.clone();
            if i > 0 {
                let h = halton(i, p);
                for (uj, hj) in u[1..].iter_mut().zip(h) {
                    *uj += 3.0 * (hj - 0.5);
                }
            }
            u
        })
        .collect();
    let nm = NelderMead { max_evals: config.max_evals, ..NelderMead::default() };
    let runs: Vec<_> = starts
        .par_iter()
        .map(|u| {
            if !obj.at_free(u).is_finite() {
                return None;
            }
            let res = nm.minimize(|v| obj.at_free(v), u);
            res.fx.is_finite().then_some(res)
        })
        .collect();
    let failed = runs.iter().filter(|r| r.is_none()).count();
    let evals = runs.iter().flatten().map(|r| r.evals).sum();
    let (best_start, best) = runs
        .into_iter()
        .enumerate()
        .filter_map(|(i, r)| r.map(|r| (i, r)))
        .min_by(|a, b| a.1.fx.total_cmp(&b.1.fx))
        .ok_or_else(|| {
            Error::FitFailure(format!(
                "all {n_starts} starts of the {} fit gave a non-finite likelihood",
                template.family()
            ))
        })?;
    let psi = obj.natural(&best.x);
    let gauge = template.with_free_params(&psi[1..])?;
    let grad_norm = {
        let mut s = 0.0;
        for i in 0..best.x.len() {
            let h = 1e-5 * best.x[i].abs().max(1.0);
            let mut up = best.x.clone();
            up[i] += h;
            let mut dn = best.x.clone();
            dn[i] -= h;
            s += ((obj.at_free(&up) - obj.at_free(&dn)) / (2.0 * h)).powi(2);
        }
        s.is_finite().then(|| s.sqrt())
    };
    let mut param_names = vec!["alpha".to_string()];
    param_names.extend(gauge.param_names());
    let mut fit = FittedModel {
        gauge,
        alpha: psi[0],
        param_names,
        se: None,
        se_method: SeMethod::Unavailable,
        nll: best.fx,
        aic: 2.0 * k as f64 + 2.0 * best.fx,
        n0,
        convergence: Convergence {
            converged: best.converged,
            evals,
            starts: n_starts,
            failed_starts: failed,
            best_start,
            grad_norm,
        },
    };
    if config.hessian {
        if let Some(se) = hessian_se(&fit, exc) {
            fit.se = Some(se);
            fit.se_method = SeMethod::Hessian;
        }
    }
    Ok(fit)
}

/// Standard errors from the inverse finite-difference Hessian of the
/// negative log-likelihood in the natural parametrization; `None` when the
/// Hessian is not positive definite.
pub fn hessian_se(fit: &FittedModel, exc: &ExceedanceSet) -> Option<Vec<f64>> {
    if fit.convergence.grad_norm.is_none_or(|g| g > 1e-4) {
        log::debug!("Hessian at a point with gradient norm {:?}", fit.convergence.grad_norm);
    }
    let obj = Objective { template: &fit.gauge, exc, transforms: fit.gauge.transforms() };
    let psi = fit.estimates();
    let steps: Vec<f64> = psi.iter().map(|v| 1e-4 * v.abs().max(1.0)).collect();
    let h = fd_hessian(|p| obj.at_natural(p), &psi, &steps);
    se_from_hessian(&h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub block_len: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { block_len: 20, replicates: 100, seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSe {
    pub se: Vec<f64>,
    pub replicates: usize,
    pub failures: usize,
    /// Per-replicate `(alpha, theta)` estimates.
    pub estimates: Vec<Vec<f64>>,
}

/// Row indices of a circular block resample of length `n`.
pub fn circular_block_indices<R: Rng>(n: usize, block_len: usize, rng: &mut R) -> Vec<usize> {
    let mut idx = Vec::with_capacity(n + block_len);
    while idx.len() < n {
        let s = rng.random_range(0..n);
        idx.extend((0..block_len).map(|t| (s + t) % n));
    }
    idx.truncate(n);
    idx
}

/// Circular block bootstrap of the whole threshold-and-fit pipeline.
pub fn block_bootstrap_se(
    x: &ExpData,
    template: &Gauge,
    tau: f64,
    window: &WindowSpec,
    fit_config: &FitConfig,
    boot: &BootstrapConfig,
) -> Result<BootstrapSe> {
    if boot.block_len == 0 {
        return Err(Error::Validation("block length must be at least 1".into()));
    }
    if boot.replicates < 50 {
        return Err(Error::Validation(format!("need at least 50 bootstrap replicates, got {}", boot.replicates)));
    }
    let cfg = FitConfig { hessian: false, ..fit_config.clone() };
    let results: Vec<Option<Vec<f64>>> = (0..boot.replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(boot.seed);
            rng.set_stream(b as u64);
            let idx = circular_block_indices(x.nrows(), boot.block_len, &mut rng);
            let ra = decompose(&x.select_rows(&idx));
            let t = fit_threshold(&ra, tau, window).ok()?;
            let exc = exceedances(&ra, &t);
            fit_mle(&exc, template, &cfg).ok().map(|f| f.estimates())
        })
        .collect();
    let failures = results.iter().filter(|r| r.is_none()).count();
    if failures * 5 > boot.replicates {
        return Err(Error::FitFailure(format!("{failures} of {} bootstrap replicates failed", boot.replicates)));
    }
    let estimates: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let m = estimates.len() as f64;
    let p = estimates[0].len();
    let se = (0..p)
        .map(|j| {
            let mean = estimates.iter().map(|e| e[j]).sum::<f64>() / m;
            (estimates.iter().map(|e| (e[j] - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
        })
        .collect();
    Ok(BootstrapSe { se, replicates: boot.replicates, failures, estimates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauges::Family;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Gamma};

    fn exc_from(r: Vec<f64>, w: Vec<Vec<f64>>, r0: Vec<f64>) -> ExceedanceSet {
        let rprime = r.iter().zip(&r0).map(|(a, b)| a / b).collect();
        let n = r.len();
        ExceedanceSet { indices: (0..n).collect(), r, w, r0, rprime, n_total: n }
    }

    /// Exact truncated-gamma sample on uniform angles with constant threshold.
    fn exact_sample(g: &Gauge, alpha: f64, r0: f64, n: usize, seed: u64) -> ExceedanceSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = g.dim();
        let (mut r, mut w) = (Vec::new(), Vec::new());
        let e = Gamma::new(1.0, 1.0).unwrap();
        for _ in 0..n {
            let v: Vec<f64> = (0..d).map(|_| e.sample(&mut rng)).collect();
            let s: f64 = v.iter().sum();
            let wi: Vec<f64> = v.iter().map(|x| x / s).collect();
            let rate = g.value(&wi);
            let p: f64 = rng.random();
            r.push(trunc_gamma_quantile(p, alpha, rate, r0).unwrap());
            w.push(wi);
        }
        exc_from(r, w, vec![r0; n])
    }

    #[test]
    fn survival_closed_forms() {
        for &lr in &[1e-3, 0.1, 1.0, 5.0, 20.0, 50.0] {
            assert_relative_eq!(gamma_sf(lr, 1.0, 1.0), (-lr).exp(), max_relative = 1e-12);
            assert!((gamma_sf(lr, 2.0, 1.0) - (-lr).exp() * (1.0 + lr)).abs() < 1e-12);
        }
        assert!((gamma_sf(5.0, 2.0, 1.0) - 0.040427681994512805).abs() < 1e-14);
        assert_eq!(gamma_sf(0.0, 2.0, 1.0), 1.0);
        assert_eq!(gamma_sf(f64::INFINITY, 2.0, 1.0), 0.0);
    }

    #[test]
    fn truncated_cdf_and_quantile() {
        let c = trunc_gamma_cdf(7.0, 2.0, 1.0, 5.0).unwrap();
        assert_relative_eq!(c, 1.0 - 4.0 / 3.0 * (-2.0f64).exp(), epsilon = 1e-13);
        assert_eq!(trunc_gamma_cdf(5.0, 2.0, 1.0, 5.0).unwrap(), 0.0);
        assert!(trunc_gamma_cdf(4.0, 2.0, 1.0, 5.0).is_err());
        assert_relative_eq!(trunc_gamma_cdf(1e4, 2.0, 1.0, 5.0).unwrap(), 1.0);
        assert_relative_eq!(trunc_gamma_quantile(c, 2.0, 1.0, 5.0).unwrap(), 7.0, max_relative = 1e-10);
        assert_eq!(trunc_gamma_quantile(0.0, 2.0, 1.0, 5.0).unwrap(), 5.0);
    }

    #[test]
    fn exponential_reduction() {
        let (lam, r, r0) = (1.7, 3.2, 2.0);
        let exc = exc_from(vec![r], vec![vec![0.5, 0.5]], vec![r0]);
        assert_relative_eq!(nll_rates(1.0, &[lam], &exc), -lam.ln() + lam * (r - r0), epsilon = 1e-12);
    }

    /// Truncated density normalizer by composite Gauss-Legendre quadrature.
    fn log_density_by_quadrature(alpha: f64, g: f64, r: f64, r0: f64) -> f64 {
        let nodes = [
            (-0.906179845938664, 0.236926885056189),
            (-0.538469310105683, 0.478628670499366),
            (0.0, 0.568888888888889),
            (0.538469310105683, 0.478628670499366),
            (0.906179845938664, 0.236926885056189),
        ];
        let kernel = |s: f64| ((alpha - 1.0) * s.ln() - s * g - (alpha - 1.0) * r0.ln() + r0 * g).exp();
        let upper = r0 + (60.0 + 20.0 * alpha) / g;
        let pieces = 20_000;
        let hw = (upper - r0) / pieces as f64;
        let mut z = 0.0;
        for i in 0..pieces {
            let mid = r0 + (i as f64 + 0.5) * hw;
            for (x, wt) in nodes {
                z += wt * kernel(mid + 0.5 * hw * x) * 0.5 * hw;
            }
        }
        (alpha - 1.0) * (r / r0).ln() - (r - r0) * g - z.ln()
    }

    #[test]
    fn likelihood_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let alpha = rng.random_range(0.3..5.0);
            let g = rng.random_range(0.5..2.0);
            let r0 = rng.random_range(0.5..6.0);
            let r = r0 + rng.random_range(0.0..4.0);
            let exc = exc_from(vec![r], vec![vec![0.5, 0.5]], vec![r0]);
            let oracle = -log_density_by_quadrature(alpha, g, r, r0);
            assert!((nll_rates(alpha, &[g], &exc) - oracle).abs() < 1e-8, "alpha={alpha} g={g} r={r} r0={r0}");
        }
    }

    #[test]
    fn duplicated_observation_doubles_contribution() {
        let g = Gauge::logistic(2, 0.5).unwrap();
        let one = exc_from(vec![4.0], vec![vec![0.3, 0.7]], vec![3.0]);
        let two = exc_from(vec![4.0, 4.0], vec![vec![0.3, 0.7]; 2], vec![3.0; 2]);
        assert_relative_eq!(nll(1.5, &g, &two), 2.0 * nll(1.5, &g, &one), max_relative = 1e-14);
    }

    #[test]
    fn zero_rate_is_penalized() {
        let exc = exc_from(vec![4.0], vec![vec![0.3, 0.7]], vec![3.0]);
        assert_eq!(nll_rates(1.0, &[0.0], &exc), f64::INFINITY);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn scale_invariance(c in 0.1f64..10.0, alpha in 0.3f64..6.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 5;
            let r0: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..5.0)).collect();
            let r: Vec<f64> = r0.iter().map(|v| v + rng.random_range(0.0..3.0)).collect();
            let rates: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
            let base = exc_from(r.clone(), vec![vec![0.5, 0.5]; n], r0.clone());
            let scaled = exc_from(
                r.iter().map(|v| v * c).collect(),
                vec![vec![0.5, 0.5]; n],
                r0.iter().map(|v| v * c).collect(),
            );
            let scaled_rates: Vec<f64> = rates.iter().map(|g| g / c).collect();
            let lhs = nll_rates(alpha, &scaled_rates, &scaled);
            let rhs = nll_rates(alpha, &rates, &base) + n as f64 * c.ln();
            prop_assert!((lhs - rhs).abs() < 1e-9 * rhs.abs().max(1.0));
        }

        #[test]
        fn quantile_round_trip(p in 0.0f64..0.999999, shape in 0.2f64..20.0, rate in 0.05f64..5.0, r0 in 0.1f64..20.0) {
            let q = trunc_gamma_quantile(p, shape, rate, r0).unwrap();
            prop_assert!(q >= r0);
            prop_assert!((trunc_gamma_cdf(q, shape, rate, r0).unwrap() - p).abs() < 1e-9);
        }
    }

    #[test]
    fn clayton_shape_recovery() {
        let g = Gauge::clayton(2).unwrap();
        let exc = exact_sample(&g, 2.0, 5.0, 2000, 3);
        let fit = fit_mle(&exc, &g, &FitConfig::default()).unwrap();
        let se = fit.se.clone().unwrap();
        assert!((fit.alpha - 2.0).abs() < 3.0 * se[0], "alpha {} se {}", fit.alpha, se[0]);
        assert_eq!(fit.se_method, SeMethod::Hessian);
        assert_relative_eq!(fit.aic, aic(&fit));
        assert_eq!(fit.param_names, vec!["alpha"]);
    }

    #[test]
    fn logistic_recovery() {
        let truth = Gauge::logistic(2, 0.4).unwrap();
        let exc = exact_sample(&truth, 2.0, 4.0, 3000, 5);
        let template = Gauge::with_defaults(Family::Logistic, 2, None).unwrap();
        let fit = fit_mle(&exc, &template, &FitConfig::default()).unwrap();
        let se = fit.se.clone().unwrap();
        assert!((fit.alpha - 2.0).abs() < 3.0 * se[0]);
        assert!((fit.gauge.params()[0] - 0.4).abs() < 3.0 * se[1], "gamma {}", fit.gauge.params()[0]);
        assert!(fit.convergence.converged);
    }

    #[test]
    fn hessian_se_matches_analytic_quadratic() {
        let h = nalgebra::DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 25.0]);
        let se = se_from_hessian(&h).unwrap();
        assert!((se[0] - 0.5).abs() < 1e-6 && (se[1] - 0.2).abs() < 1e-6);
        let h = fd_hessian(|x| 2.0 * x[0] * x[0] + 12.5 * x[1] * x[1], &[0.3, -0.2], &[1e-4, 1e-4]);
        let se = se_from_hessian(&h).unwrap();
        assert!((se[0] - 0.5).abs() < 1e-6 && (se[1] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn selection_tie_breaks() {
        let g = Gauge::clayton(2).unwrap();
        let exc = exact_sample(&g, 2.0, 5.0, 200, 1);
        let fit = fit_mle(&exc, &g, &FitConfig::default()).unwrap();
        assert_eq!(select_model(&[fit.clone(), fit.clone()]), Some(0));
        let mut richer = fit.clone();
        richer.gauge = Gauge::logistic(2, 1.0).unwrap();
        richer.aic = fit.aic;
        assert_eq!(select_model(&[richer, fit.clone()]), Some(1));
        assert_eq!(select_model(&[]), None);
    }

    #[test]
    fn no_exceedances_is_a_fit_error() {
        let exc = exc_from(vec![], vec![], vec![]);
        let g = Gauge::clayton(2).unwrap();
        assert!(matches!(fit_mle(&exc, &g, &FitConfig::default()), Err(Error::FitFailure(_))));
    }

    #[test]
    fn circular_blocks_wrap() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let idx = circular_block_indices(10, 4, &mut rng);
        assert_eq!(idx.len(), 10);
        for c in idx.chunks(4) {
            for p in c.windows(2) {
                assert_eq!(p[1], (p[0] + 1) % 10);
            }
        }
    }
}
