//! Reference samplers on exponential margins, exact truncated-gamma
//! generators and a streaming Monte Carlo probability oracle.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::{beta::beta_reg, erf::erfc};

use crate::data::{ExpData, Matrix, Provenance};
use crate::error::{Error, Result};
use crate::fit::trunc_gamma_quantile;
use crate::gauges::{correlation_matrix, Family, Gauge, StructureSpec, MAX_DIM};
use crate::predict::RegionSpec;
use crate::radial::ExceedanceSet;

const CHUNK: usize = 4096;
const ORACLE_CHUNK: usize = 1 << 16;

/// Study distributions. Parameters follow the gauge catalog's conventions;
/// asymmetric-logistic groups are 0-based and `gammas` lists one value per
/// group with more than one member, in group order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CopulaSpec {
    Logistic {
        dim: usize,
        gamma: f64,
    },
    InvertedLogistic {
        dim: usize,
        gamma: f64,
    },
    Gaussian {
        dim: usize,
        corr: Vec<f64>,
    },
    StudentT {
        dim: usize,
        corr: Vec<f64>,
        nu: f64,
    },
    Clayton {
        dim: usize,
        gamma: f64,
    },
    InvertedClayton {
        dim: usize,
        gamma: f64,
    },
    AsymLogistic {
        dim: usize,
        groups: Vec<Vec<usize>>,
        gammas: Vec<f64>,
    },
    /// Inverted Clayton pair `(X1, X2)` with `X3 | X2` from an inverted
    /// logistic pair copula.
    #[serde(rename = "composite_iii")]
    CompositeIii {
        clayton: f64,
        logistic: f64,
    },
}

impl CopulaSpec {
    pub fn dim(&self) -> usize {
        match self {
            CopulaSpec::Logistic { dim, .. }
            | CopulaSpec::InvertedLogistic { dim, .. }
            | CopulaSpec::Gaussian { dim, .. }
            | CopulaSpec::StudentT { dim, .. }
            | CopulaSpec::Clayton { dim, .. }
            | CopulaSpec::InvertedClayton { dim, .. }
            | CopulaSpec::AsymLogistic { dim, .. } => *dim,
            CopulaSpec::CompositeIii { .. } => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CopulaSpec::Logistic { .. } => "logistic",
            CopulaSpec::InvertedLogistic { .. } => "inverted_logistic",
            CopulaSpec::Gaussian { .. } => "gaussian",
            CopulaSpec::StudentT { .. } => "student_t",
            CopulaSpec::Clayton { .. } => "clayton",
            CopulaSpec::InvertedClayton { .. } => "inverted_clayton",
            CopulaSpec::AsymLogistic { .. } => "asym_logistic",
            CopulaSpec::CompositeIii { .. } => "composite_iii",
        }
    }

    fn prepare(&self) -> Result<Prepared> {
        let d = self.dim();
        if !(2..=MAX_DIM).contains(&d) {
            return Err(Error::Unsupported(format!("{} sampler with d={d}", self.name())));
        }
        let unit = |g: f64| {
            if g > 0.0 && g <= 1.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!("{} needs gamma in (0,1], got {g}", self.name())))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{} needs {name} > 0, got {v}", self.name())))
            }
        };
        let chol = |corr: &[f64]| -> Result<DMatrix<f64>> {
            if corr.len() != d * (d - 1) / 2 {
                return Err(Error::Dimension { expected: d * (d - 1) / 2, got: corr.len() });
            }
            correlation_matrix(d, corr)
                .cholesky()
                .map(|c| c.l())
                .ok_or_else(|| Error::Domain("correlation matrix is not positive definite".into()))
        };
        Ok(match self {
            CopulaSpec::Logistic { gamma, .. } | CopulaSpec::InvertedLogistic { gamma, .. } => {
                unit(*gamma)?;
                Prepared::None
            }
            CopulaSpec::Clayton { gamma, .. } | CopulaSpec::InvertedClayton { gamma, .. } => {
                positive("gamma", *gamma)?;
                Prepared::None
            }
            CopulaSpec::Gaussian { corr, .. } => Prepared::Chol(chol(corr)?),
            CopulaSpec::StudentT { corr, nu, .. } => {
                positive("nu", *nu)?;
                Prepared::Chol(chol(corr)?)
            }
            CopulaSpec::AsymLogistic { groups, gammas, .. } => {
                let s = StructureSpec::new(groups.clone());
                s.validate(d)?;
                if gammas.len() != s.n_free() {
                    return Err(Error::Dimension { expected: s.n_free(), got: gammas.len() });
                }
                for g in gammas {
                    unit(*g)?;
                }
                let mut count = vec![0usize; d];
                for g in &s.groups {
                    for &j in g {
                        count[j] += 1;
                    }
                }
                let mut it = gammas.iter();
                let blocks = s
                    .groups
                    .iter()
                    .map(|g| {
                        let gamma = if g.len() > 1 { *it.next().unwrap() } else { 1.0 };
                        let theta = g.iter().map(|&j| 1.0 / count[j] as f64).collect();
                        (g.clone(), gamma, theta)
                    })
                    .collect();
                Prepared::Blocks(blocks)
            }
            CopulaSpec::CompositeIii { clayton, logistic } => {
                positive("clayton", *clayton)?;
                unit(*logistic)?;
                Prepared::None
            }
        })
    }
}

enum Prepared {
    None,
    Chol(DMatrix<f64>),
    Blocks(Vec<(Vec<usize>, f64, Vec<f64>)>),
}

/// Exponential-scale value `-ln(1 - U)` from `t = -ln U`.
fn exp_from_lower_tail(t: f64) -> f64 {
    (-(-(-t).exp_m1()).ln()).max(1e-300)
}

/// `-ln(1 - Phi(z))`.
fn exp_from_normal(z: f64) -> f64 {
    if z < 0.0 {
        (-(-0.5 * erfc(-z / SQRT_2)).ln_1p()).max(1e-300)
    } else if z < 37.0 {
        -(0.5 * erfc(z / SQRT_2)).ln()
    } else {
        let z2 = z * z;
        0.5 * z2 + (z * (2.0 * PI).sqrt()).ln() - (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// `-ln(1 - F_t(t))` for Student t with `nu` degrees of freedom.
fn exp_from_student(t: f64, nu: f64) -> f64 {
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + t * t));
    if t >= 0.0 {
        -tail.ln()
    } else {
        (-(-tail).ln_1p()).max(1e-300)
    }
}

fn open_unit<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Positive stable variate with Laplace transform `exp(-s^a)`, `0 < a <= 1`.
pub fn positive_stable<R: Rng>(a: f64, rng: &mut R) -> f64 {
    if a >= 1.0 {
        return 1.0;
    }
    let u = PI * open_unit(rng);
    let e: f64 = Exp1.sample(rng);
    (a * u).sin() / u.sin().powf(1.0 / a) * ((1.0 - a) * u).sin().powf((1.0 - a) / a) / e.powf((1.0 - a) / a)
}

/// Conditional draw of `X3` given `X2 = x2` under the inverted logistic pair
/// copula, by inverting the conditional survival function at `v`.
fn inverted_logistic_conditional(x2: f64, gamma: f64, v: f64) -> f64 {
    let a = x2.powf(1.0 / gamma);
    // ln P(X3 > x | x2) as a function of s = x2^(1/g) + x^(1/g)
    let target = v.ln() - x2 - (1.0 / gamma - 1.0) * x2.ln();
    let h = |s: f64| -s.powf(gamma) + (gamma - 1.0) * s.ln();
    let mut lo = a;
    let mut hi = 2.0 * a + 1.0;
    while h(hi) > target {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    (0.5 * (lo + hi) - a).max(0.0).powf(gamma).max(1e-300)
}

fn sample_row<R: Rng>(spec: &CopulaSpec, prep: &Prepared, rng: &mut R, out: &mut [f64]) {
    let d = out.len();
    match (spec, prep) {
        (CopulaSpec::Logistic { gamma, .. }, _) => {
            let s = positive_stable(*gamma, rng);
            for x in out.iter_mut() {
                let e: f64 = Exp1.sample(rng);
                *x = exp_from_lower_tail((e / s).powf(*gamma));
            }
        }
        (CopulaSpec::InvertedLogistic { gamma, .. }, _) => {
            let s = positive_stable(*gamma, rng);
            for x in out.iter_mut() {
                let e: f64 = Exp1.sample(rng);
                *x = (e / s).powf(*gamma).max(1e-300);
            }
        }
        (CopulaSpec::Clayton { gamma, .. }, _) | (CopulaSpec::InvertedClayton { gamma, .. }, _) => {
            let v = Gamma::new(1.0 / gamma, 1.0).unwrap().sample(rng);
            let inverted = matches!(spec, CopulaSpec::InvertedClayton { .. });
            for x in out.iter_mut() {
                let e: f64 = Exp1.sample(rng);
                let t = (e / v).ln_1p() / gamma;
                *x = if inverted { t.max(1e-300) } else { exp_from_lower_tail(t) };
            }
        }
        (CopulaSpec::Gaussian { .. }, Prepared::Chol(l)) => {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            for i in 0..d {
                let zi: f64 = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
                out[i] = exp_from_normal(zi);
            }
        }
        (CopulaSpec::StudentT { nu, .. }, Prepared::Chol(l)) => {
            let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let w: f64 = ChiSquared::new(*nu).unwrap().sample(rng);
            let scale = (w / nu).sqrt();
            for i in 0..d {
                let zi: f64 = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
                out[i] = exp_from_student(zi / scale, *nu);
            }
        }
        (CopulaSpec::AsymLogistic { .. }, Prepared::Blocks(blocks)) => {
            let mut z = vec![0.0f64; d];
            for (group, gamma, theta) in blocks {
                let s = positive_stable(*gamma, rng);
                for (&j, th) in group.iter().zip(theta) {
                    let e: f64 = Exp1.sample(rng);
                    let y = (e / s).powf(-gamma);
                    z[j] = z[j].max(th * y);
                }
            }
            for (x, zj) in out.iter_mut().zip(z) {
                *x = exp_from_lower_tail(1.0 / zj);
            }
        }
        (CopulaSpec::CompositeIii { clayton, logistic }, _) => {
            let v = Gamma::new(1.0 / clayton, 1.0).unwrap().sample(rng);
            for x in out.iter_mut().take(2) {
                let e: f64 = Exp1.sample(rng);
                *x = ((e / v).ln_1p() / clayton).max(1e-300);
            }
            let u = open_unit(rng);
            out[2] = inverted_logistic_conditional(out[1], *logistic, u);
        }
        _ => unreachable!("sampler preparation does not match its spec"),
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

fn sample_chunk(spec: &CopulaSpec, prep: &Prepared, rows: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = spec.dim();
    let mut buf = vec![0.0; rows * d];
    for row in buf.chunks_exact_mut(d) {
        sample_row(spec, prep, rng, row);
    }
    buf
}

/// `n` draws on standard exponential margins. Rows are generated in chunks
/// of 4096 with one RNG stream per chunk.
pub fn sample(spec: &CopulaSpec, n: usize, seed: u64) -> Result<ExpData> {
    if n == 0 {
        return Err(Error::Validation("sample size must be at least 1".into()));
    }
    let prep = spec.prepare()?;
    let n_chunks = n.div_ceil(CHUNK);
    let data: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let rows = CHUNK.min(n - c * CHUNK);
            sample_chunk(spec, &prep, rows, &mut chunk_rng(seed, c))
        })
        .flatten_iter()
        .collect();
    ExpData::new(Matrix::new(n, spec.dim(), data)?, Provenance::Synthetic(spec.name().into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub estimate: f64,
    pub mc_se: f64,
    pub hits: u64,
    pub n_mc: u64,
    pub seed: u64,
}

/// Direct Monte Carlo estimate of `P(X in region)`; draws are counted and
/// discarded chunk by chunk.
pub fn oracle_probability(spec: &CopulaSpec, region: &RegionSpec, n_mc: u64, seed: u64) -> Result<OracleEstimate> {
    if n_mc == 0 {
        return Err(Error::Validation("n_mc must be at least 1".into()));
    }
    if let Some(dim) = region.dim() {
        if dim != spec.dim() {
            return Err(Error::Dimension { expected: spec.dim(), got: dim });
        }
    }
    let prep = spec.prepare()?;
    let d = spec.dim();
    let n_chunks = n_mc.div_ceil(ORACLE_CHUNK as u64) as usize;
    let hits: u64 = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let rows = (ORACLE_CHUNK as u64).min(n_mc - (c * ORACLE_CHUNK) as u64) as usize;
            let buf = sample_chunk(spec, &prep, rows, &mut chunk_rng(seed, c));
            buf.chunks_exact(d).filter(|x| region.contains(x)).count() as u64
        })
        .sum();
    let p = hits as f64 / n_mc as f64;
    if (n_mc as f64) * p < 100.0 {
        log::warn!("oracle saw only {hits} hits in {n_mc} draws");
    }
    Ok(OracleEstimate { estimate: p, mc_se: (p * (1.0 - p) / n_mc as f64).sqrt(), hits, n_mc, seed })
}

/// Cataloged gauge of a study distribution.
pub fn true_gauge(spec: &CopulaSpec) -> Result<Gauge> {
    spec.prepare()?;
    let d = spec.dim();
    match spec {
        CopulaSpec::Logistic { gamma, .. } => Gauge::logistic(d, *gamma),
        CopulaSpec::InvertedLogistic { gamma, .. } => Gauge::inverted_logistic(d, *gamma),
        CopulaSpec::Gaussian { corr, .. } => Gauge::gaussian(d, corr.clone()),
        CopulaSpec::StudentT { nu, .. } => Gauge::new(Family::StudentT, d, vec![*nu]),
        CopulaSpec::Clayton { .. } => Gauge::clayton(d),
        CopulaSpec::InvertedClayton { gamma, .. } => Gauge::new(Family::InvertedClayton, d, vec![*gamma]),
        CopulaSpec::AsymLogistic { groups, gammas, .. } => {
            Gauge::asym_logistic(d, StructureSpec::new(groups.clone()), gammas.clone())
        }
        CopulaSpec::CompositeIii { .. } => {
            Err(Error::Unsupported("composite_iii has no cataloged closed-form gauge".into()))
        }
    }
}

fn uniform_simplex<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    let e: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Exceedances drawn exactly from the truncated-gamma model: uniform angles
/// on the simplex, constant threshold `r0`, and `R | W = w` truncated
/// gamma with shape `alpha` and rate `g(w)`.
pub fn truncgamma_exceedances(g: &Gauge, alpha: f64, r0: f64, n0: usize, seed: u64) -> Result<ExceedanceSet> {
    let d = g.dim();
    let n_chunks = n0.div_ceil(CHUNK);
    let rows: Vec<(Vec<f64>, f64)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let m = CHUNK.min(n0 - c * CHUNK);
            (0..m)
                .map(|_| {
                    let w = uniform_simplex(d, &mut rng);
                    let p: f64 = rng.random();
                    let r = trunc_gamma_quantile(p, alpha, g.value(&w), r0)?;
                    Ok((w, r))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let (w, r): (Vec<Vec<f64>>, Vec<f64>) = rows.into_iter().unzip();
    Ok(ExceedanceSet {
        indices: (0..n0).collect(),
        rprime: r.iter().map(|v| v / r0).collect(),
        r,
        w,
        r0: vec![r0; n0],
        n_total: n0,
    })
}

/// Full sample with uniform angles and `R | W = w ~ Gamma(alpha, g(w))`.
pub fn gamma_radial_sample(g: &Gauge, alpha: f64, n: usize, seed: u64) -> Result<ExpData> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("alpha must be positive, got {alpha}")));
    }
    let d = g.dim();
    let n_chunks = n.div_ceil(CHUNK);
    let data: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let m = CHUNK.min(n - c * CHUNK);
            let gamma = Gamma::new(alpha, 1.0).unwrap();
            let mut out = Vec::with_capacity(m * d);
            for _ in 0..m {
                let w = uniform_simplex(d, &mut rng);
                let r = gamma.sample(&mut rng) / g.value(&w);
                out.extend(w.iter().map(|v| (v * r).max(1e-300)));
            }
            out
        })
        .flatten_iter()
        .collect();
    ExpData::new(Matrix::new(n, d, data)?, Provenance::Synthetic(format!("gamma_radial_{}", g.family())))
}
