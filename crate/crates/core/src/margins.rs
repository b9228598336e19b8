//! Semi-parametric marginal transformation to and from standard exponential
//! margins: empirical distribution function below a high threshold `u`,
//! generalized Pareto tail above it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ExpData, Matrix, Provenance, RawData};
use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::special::quantile_sorted;

pub const DEFAULT_TAIL_QUANTILE: f64 = 0.95;
/// Smallest exponential-scale value returned by [`to_exponential`].
pub const EXP_FLOOR: f64 = 1e-10;
const MIN_LEN: usize = 50;
const MIN_EXCEEDANCES: usize = 10;
const XI_RANGE: (f64, f64) = (-0.9, 1.0);
const XI_ZERO: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalModel {
    pub column: String,
    /// Distinct sample values, ascending.
    pub support: Vec<f64>,
    /// Plotting positions (average rank / (n + 1)) at `support`.
    pub probs: Vec<f64>,
    pub tail_quantile: f64,
    pub u: f64,
    pub phi_u: f64,
    pub sigma: f64,
    pub xi: f64,
}

/// Generalized Pareto fit to threshold excesses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdFit {
    pub sigma: f64,
    pub xi: f64,
    pub nll: f64,
}

fn gpd_nll(z: &[f64], sigma: f64, xi: f64) -> f64 {
    if !(sigma > 0.0) || !(XI_RANGE.0..=XI_RANGE.1).contains(&xi) {
        return f64::INFINITY;
    }
    let n = z.len() as f64;
    if xi.abs() < XI_ZERO {
        return n * sigma.ln() + z.iter().sum::<f64>() / sigma;
    }
    let mut acc = 0.0;
    for &zi in z {
        let t = xi * zi / sigma;
        if t <= -1.0 {
            return f64::INFINITY;
        }
        acc += t.ln_1p();
    }
    n * sigma.ln() + (1.0 + 1.0 / xi) * acc
}

/// Probability-weighted-moment estimates, used as optimizer start.
fn gpd_pwm(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len() as f64;
    let a0 = sorted.iter().sum::<f64>() / n;
    let a1 = sorted.iter().enumerate().map(|(i, z)| z * (n - (i + 1) as f64) / (n - 1.0)).sum::<f64>() / n;
    let denom = a0 - 2.0 * a1;
    if denom <= 0.0 {
        return (a0, 0.0);
    }
    let xi = (2.0 - a0 / denom).clamp(XI_RANGE.0 + 0.05, XI_RANGE.1 - 0.05);
    let sigma = 2.0 * a0 * a1 / denom;
    if sigma > 0.0 && sigma.is_finite() {
        (sigma, xi)
    } else {
        (a0, 0.0)
    }
}

/// Maximum-likelihood GPD fit to non-negative excesses.
pub fn fit_gpd(excesses: &[f64]) -> Result<GpdFit> {
    let mut z = excesses.to_vec();
    z.sort_by(|a, b| a.total_cmp(b));
    let (s0, x0) = gpd_pwm(&z);
    let nm = NelderMead { initial_step: 0.3, ..NelderMead::default() };
    let r = nm.minimize(|p| gpd_nll(&z, p[0].exp(), p[1]), &[s0.ln(), x0]);
    let zero = nm.minimize(|p| gpd_nll(&z, p[0].exp(), 0.0), &[s0.ln()]);
    let (sigma, mut xi, nll) =
        if zero.fx <= r.fx { (zero.x[0].exp(), 0.0, zero.fx) } else { (r.x[0].exp(), r.x[1], r.fx) };
    if !nll.is_finite() || !sigma.is_finite() {
        return Err(Error::FitFailure("GPD likelihood optimization diverged".into()));
    }
    if xi.abs() < XI_ZERO {
        xi = 0.0;
    }
    Ok(GpdFit { sigma, xi, nll })
}

/// Fits the composite empirical/GPD model to one column.
pub fn fit_marginal(column: &[f64], tail_quantile: f64, name: &str) -> Result<MarginalModel> {
    let est = |reason: String| Error::Estimation { column: name.to_string(), reason };
    if column.len() < MIN_LEN {
        return Err(est(format!("need at least {MIN_LEN} observations, got {}", column.len())));
    }
    if !(tail_quantile > 0.5 && tail_quantile < 1.0) {
        return Err(Error::Validation(format!("tail_quantile must lie in (0.5, 1), got {tail_quantile}")));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(est("non-finite value".into()));
    }
    let mut sorted = column.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if sorted[0] == sorted[sorted.len() - 1] {
        return Err(est("degenerate sample: all values are equal".into()));
    }
    let n = sorted.len();
    let mut support = Vec::new();
    let mut probs = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        // ranks i+1..=j+1 averaged
        let avg_rank = (i + j + 2) as f64 / 2.0;
        support.push(sorted[i]);
        probs.push(avg_rank / (n + 1) as f64);
        i = j + 1;
    }
    let u = quantile_sorted(&sorted, tail_quantile);
    let excesses: Vec<f64> = sorted.iter().filter(|&&y| y > u).map(|y| y - u).collect();
    if excesses.len() < MIN_EXCEEDANCES {
        return Err(est(format!("only {} exceedances of u = {u}; need at least {MIN_EXCEEDANCES}", excesses.len())));
    }
    let gpd = fit_gpd(&excesses).map_err(|e| match e {
        Error::FitFailure(r) => Error::FitFailure(format!("column `{name}`: {r}")),
        other => other,
    })?;
    let mut model = MarginalModel {
        column: name.to_string(),
        support,
        probs,
        tail_quantile,
        u,
        phi_u: 0.0,
        sigma: gpd.sigma,
        xi: gpd.xi,
    };
    model.phi_u = 1.0 - model.empirical_cdf(u);
    Ok(model)
}

impl MarginalModel {
    /// Piecewise-linear empirical df; constant below the sample minimum.
    pub fn empirical_cdf(&self, y: f64) -> f64 {
        let s = &self.support;
        let k = s.partition_point(|&v| v <= y);
        if k == 0 {
            return self.probs[0];
        }
        if k == s.len() {
            return self.probs[k - 1];
        }
        let (x0, x1) = (s[k - 1], s[k]);
        let (p0, p1) = (self.probs[k - 1], self.probs[k]);
        p0 + (p1 - p0) * (y - x0) / (x1 - x0)
    }

    /// GPD upper endpoint on the original scale (infinite for `xi >= 0`).
    pub fn upper_endpoint(&self) -> f64 {
        if self.xi < 0.0 {
            self.u - self.sigma / self.xi
        } else {
            f64::INFINITY
        }
    }

    /// Composite distribution function.
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= self.u {
            return self.empirical_cdf(y);
        }
        let z = y - self.u;
        if self.xi == 0.0 {
            return 1.0 - self.phi_u * (-z / self.sigma).exp();
        }
        let t = 1.0 + self.xi * z / self.sigma;
        if t <= 0.0 {
            return 1.0;
        }
        1.0 - self.phi_u * t.powf(-1.0 / self.xi)
    }

    /// `-log(1 - F(y))`; `None` beyond the GPD upper endpoint.
    pub fn to_exp(&self, y: f64) -> Option<f64> {
        let x = if y <= self.u {
            -(-self.empirical_cdf(y)).ln_1p()
        } else {
            let z = y - self.u;
            let tail = if self.xi == 0.0 {
                z / self.sigma
            } else {
                let t = self.xi * z / self.sigma;
                if t <= -1.0 {
                    return None;
                }
                t.ln_1p() / self.xi
            };
            -self.phi_u.ln() + tail
        };
        Some(x.max(EXP_FLOOR))
    }

    /// Inverse of [`MarginalModel::to_exp`].
    pub fn from_exp(&self, x: f64) -> f64 {
        let xu = -self.phi_u.ln();
        if x > xu {
            let e = x - xu;
            let z = if self.xi == 0.0 { self.sigma * e } else { self.sigma * (self.xi * e).exp_m1() / self.xi };
            return self.u + z;
        }
        let p = -(-x).exp_m1();
        let s = &self.support;
        let k = self.probs.partition_point(|&q| q <= p);
        if k == 0 {
            return s[0];
        }
        if k == s.len() {
            return s[k - 1];
        }
        let (p0, p1) = (self.probs[k - 1], self.probs[k]);
        s[k - 1] + (s[k] - s[k - 1]) * (p - p0) / (p1 - p0)
    }
}

/// Fits every column in parallel.
pub fn fit_marginals(raw: &RawData, tail_quantile: f64) -> Result<Vec<MarginalModel>> {
    (0..raw.values.ncols())
        .into_par_iter()
        .map(|j| fit_marginal(&raw.values.column(j), tail_quantile, &raw.names[j]))
        .collect()
}

fn check_models(d: usize, models: &[MarginalModel]) -> Result<()> {
    if models.len() != d {
        return Err(Error::Dimension { expected: d, got: models.len() });
    }
    Ok(())
}

pub fn to_exponential(raw: &RawData, models: &[MarginalModel]) -> Result<ExpData> {
    let (n, d) = (raw.values.nrows(), raw.values.ncols());
    check_models(d, models)?;
    let mut out = Matrix::zeros(n, d);
    for (j, m) in models.iter().enumerate() {
        let mut bad = Vec::new();
        for i in 0..n {
            match m.to_exp(raw.values.get(i, j)) {
                Some(x) => out.set(i, j, x),
                None => bad.push(i),
            }
        }
        if !bad.is_empty() {
            return Err(Error::BeyondEndpoint { column: m.column.clone(), rows: bad });
        }
    }
    ExpData::new(out, Provenance::Marginal(models.iter().map(|m| m.column.clone()).collect()))
}

pub fn from_exponential(x: &ExpData, models: &[MarginalModel]) -> Result<RawData> {
    let (n, d) = (x.nrows(), x.dim());
    check_models(d, models)?;
    let mut out = Matrix::zeros(n, d);
    for (j, m) in models.iter().enumerate() {
        for i in 0..n {
            let y = m.from_exp(x.values().get(i, j));
            if !y.is_finite() {
                return Err(Error::Numerical(format!("column `{}`: back-transform overflow at row {i}", m.column)));
            }
            out.set(i, j, y);
        }
    }
    RawData::new(models.iter().map(|m| m.column.clone()).collect(), out)
}
