//! Extrapolation from a fitted model: conditional simulation above scaled
//! thresholds, importance-weighted angles, extreme-set probabilities and
//! tail dependence curves.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{write_table, ExpData, Matrix};
use crate::error::{Error, Result};
use crate::fit::{trunc_gamma_quantile, FittedModel};
use crate::radial::{ExceedanceSet, ThresholdModel};
use crate::special::ln_gamma_q;

const CHUNK: usize = 4096;
/// Cap, in exponential units, for infinite rectangle bounds during
/// containment checks.
pub const BOUND_CAP: f64 = 50.0;
pub const K_SAFETY: f64 = 0.95;
pub const EDGE_POINTS: usize = 20;

fn ser_bounds<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let opt: Vec<Option<f64>> = v.iter().map(|x| x.is_finite().then_some(*x)).collect();
    opt.serialize(s)
}

fn de_bounds<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    let opt: Vec<Option<f64>> = Vec::deserialize(d)?;
    Ok(opt.into_iter().map(|x| x.unwrap_or(f64::INFINITY)).collect())
}

/// Open box `prod_j (lower_j, upper_j)`; infinite upper bounds serialize as
/// `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rectangle {
    pub lower: Vec<f64>,
    #[serde(serialize_with = "ser_bounds", deserialize_with = "de_bounds")]
    pub upper: Vec<f64>,
}

impl Rectangle {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension { expected: lower.len(), got: upper.len() });
        }
        for (j, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && *l >= 0.0 && l < u) {
                return Err(Error::Validation(format!("coordinate {j}: need 0 <= lower < upper, got ({l}, {u})")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| v > l && v < u)
    }

    fn capped(&self) -> (Vec<f64>, Vec<f64>) {
        let hi = self.upper.iter().zip(&self.lower).map(|(u, l)| u.min(BOUND_CAP.max(l + 1.0))).collect();
        (self.lower.clone(), hi)
    }
}

/// Parses `lo:hi` pairs separated by commas, e.g. `10:12,2:inf`.
impl FromStr for Rectangle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        for part in s.split(',') {
            let (l, u) = part
                .split_once(':')
                .ok_or_else(|| Error::Validation(format!("region component `{part}` is not `lo:hi`")))?;
            let parse = |t: &str| -> Result<f64> {
                match t.trim() {
                    "inf" | "Inf" | "infinity" => Ok(f64::INFINITY),
                    v => v.parse().map_err(|_| Error::Validation(format!("cannot parse region bound `{v}`"))),
                }
            };
            lower.push(parse(l)?);
            upper.push(parse(u)?);
        }
        Rectangle::new(lower, upper)
    }
}

impl fmt::Display for Rectangle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if u.is_finite() { format!("{l}:{u}") } else { format!("{l}:inf") })
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

pub type Predicate = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;

#[derive(Clone)]
pub enum RegionSpec {
    Rectangle(Rectangle),
    Predicate { dim: usize, test: Predicate },
}

impl fmt::Debug for RegionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegionSpec::Rectangle(r) => f.debug_tuple("Rectangle").field(r).finish(),
            RegionSpec::Predicate { dim, .. } => f.debug_struct("Predicate").field("dim", dim).finish_non_exhaustive(),
        }
    }
}

impl RegionSpec {
    pub fn predicate(dim: usize, test: impl Fn(&[f64]) -> bool + Send + Sync + 'static) -> Self {
        RegionSpec::Predicate { dim, test: Arc::new(test) }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            RegionSpec::Rectangle(r) => r.contains(x),
            RegionSpec::Predicate { test, .. } => test(x),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            RegionSpec::Rectangle(r) => Some(r.dim()),
            RegionSpec::Predicate { dim, .. } => Some(*dim),
        }
    }
}

/// Draws from `X | R' > k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremeSample {
    pub points: Matrix,
    pub k: f64,
    pub seed: u64,
}

impl ExtremeSample {
    pub fn write_csv<W: Write>(&self, writer: W, names: &[String]) -> Result<()> {
        write_table(writer, names, &self.points)
    }
}

fn rates(fit: &FittedModel, exc: &ExceedanceSet) -> Vec<f64> {
    exc.w.iter().map(|w| fit.gauge.value(w)).collect()
}

/// Log survival ratios `ln[Q(a, g k r0) / Q(a, g r0)]` per exceedance.
fn log_ratios(fit: &FittedModel, exc: &ExceedanceSet, g: &[f64], k: f64) -> Vec<f64> {
    g.iter().zip(&exc.r0).map(|(gi, r0)| ln_gamma_q(fit.alpha, gi * k * r0) - ln_gamma_q(fit.alpha, gi * r0)).collect()
}

fn check_k(k: f64) -> Result<()> {
    if k >= 1.0 && k.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("k must be a finite value >= 1, got {k}")))
    }
}

/// `m` draws from the fitted `X | R' > k`: angles resampled from the
/// exceedances with importance weights, radii from the truncated gamma.
pub fn simulate_conditional(
    fit: &FittedModel,
    exc: &ExceedanceSet,
    m: usize,
    k: f64,
    seed: u64,
) -> Result<ExtremeSample> {
    check_k(k)?;
    let n0 = exc.n0();
    if n0 == 0 {
        return Err(Error::Validation("cannot simulate without exceedances".into()));
    }
    let g = rates(fit, exc);
    let index = if k == 1.0 {
        None
    } else {
        let lw = log_ratios(fit, exc, &g, k);
        let top = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY || top.is_nan() {
            return Err(Error::Numerical(format!("all importance weights vanish at k={k}; use a smaller k")));
        }
        let w: Vec<f64> = lw.iter().map(|v| (v - top).exp()).collect();
        Some(WeightedIndex::new(&w).map_err(|e| Error::Numerical(format!("importance weights: {e}")))?)
    };
    let d = exc.dim();
    let n_chunks = m.div_ceil(CHUNK);
    let data: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let rows = CHUNK.min(m - c * CHUNK);
            let mut out = Vec::with_capacity(rows * d);
            for _ in 0..rows {
                let i = match &index {
                    Some(dist) => dist.sample(&mut rng),
                    None => rng.random_range(0..n0),
                };
                let p: f64 = rng.random();
                let trunc = k * exc.r0[i];
                let r = trunc_gamma_quantile(p, fit.alpha, g[i], trunc)?;
                debug_assert!(r >= trunc);
                out.extend(exc.w[i].iter().map(|wj| wj * r));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .concat();
    Ok(ExtremeSample { points: Matrix::new(m, d, data)?, k, seed })
}

/// `(P(R' > k | R' > 1), P(R' > 1))`.
pub fn rprime_components(fit: &FittedModel, exc: &ExceedanceSet, k: f64) -> Result<(f64, f64)> {
    check_k(k)?;
    let n0 = exc.n0();
    if n0 == 0 {
        return Ok((0.0, 0.0));
    }
    let base = n0 as f64 / exc.n_total as f64;
    if k == 1.0 {
        return Ok((1.0, base));
    }
    let g = rates(fit, exc);
    let mean = log_ratios(fit, exc, &g, k).iter().map(|v| v.exp()).sum::<f64>() / n0 as f64;
    Ok((mean, base))
}

/// Estimate of `P(R' > k)`.
pub fn prob_rprime_exceeds(fit: &FittedModel, exc: &ExceedanceSet, k: f64) -> Result<f64> {
    let (c, b) = rprime_components(fit, exc, k)?;
    Ok(c * b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub k: f64,
    /// Smallest `sum(x) / r0(x / sum(x))` on the boundary grid.
    pub min_ratio: f64,
    pub argmin: Vec<f64>,
    /// True when the region is not fully extreme and `k` was set to 1.
    pub clamped: bool,
}

fn edge_points(d: usize) -> usize {
    if d <= 4 {
        EDGE_POINTS
    } else {
        ((1e5f64).powf(1.0 / (d as f64 - 1.0)).floor() as usize).max(2)
    }
}

/// Minimum of `sum(x) / r0(x / sum(x))` over a grid on the faces of the box.
pub fn boundary_min_ratio(rect: &Rectangle, t: &ThresholdModel, per_edge: usize) -> (f64, Vec<f64>) {
    let d = rect.dim();
    let (lo, hi) = rect.capped();
    let axis = |j: usize, i: usize| lo[j] + (hi[j] - lo[j]) * i as f64 / (per_edge - 1) as f64;
    let mut best = (f64::INFINITY, lo.clone());
    let mut x = vec![0.0; d];
    let free = per_edge.pow(d as u32 - 1);
    for j in 0..d {
        for side in [lo[j], hi[j]] {
            for flat in 0..free {
                let mut rem = flat;
                for (k, xk) in x.iter_mut().enumerate() {
                    if k == j {
                        *xk = side;
                    } else {
                        *xk = axis(k, rem % per_edge);
                        rem /= per_edge;
                    }
                }
                let s: f64 = x.iter().sum();
                let ratio = if s > 0.0 {
                    let w: Vec<f64> = x.iter().map(|v| v / s).collect();
                    s / t.eval(&w)
                } else {
                    0.0
                };
                if ratio < best.0 {
                    best = (ratio, x.clone());
                }
            }
        }
    }
    best
}

/// Largest safe conditioning level for a rectangle: 0.95 times the smallest
/// boundary ratio, set to 1 with a warning when that falls below 1.
pub fn max_valid_k(rect: &Rectangle, t: &ThresholdModel) -> Result<KSelection> {
    if rect.dim() != t.dim {
        return Err(Error::Dimension { expected: t.dim, got: rect.dim() });
    }
    let (min_ratio, argmin) = boundary_min_ratio(rect, t, edge_points(rect.dim()));
    let k = K_SAFETY * min_ratio;
    if k < 1.0 {
        log::warn!("region {rect} is not fully above the threshold surface (k* = {k:.4}); using k = 1");
        return Ok(KSelection { k: 1.0, min_ratio, argmin, clamped: true });
    }
    Ok(KSelection { k, min_ratio, argmin, clamped: false })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbComponents {
    /// `P(X in B | R' > k)`.
    pub conditional: f64,
    /// `P(R' > k | R' > 1)`.
    pub ratio: f64,
    /// `P(R' > 1)`.
    pub base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimate {
    pub value: f64,
    pub mc_se: f64,
    pub components: ProbComponents,
    pub k: f64,
    pub m: usize,
    pub hits: usize,
    pub seed: u64,
}

/// Rejects rectangles that reach below `k r0`.
pub fn check_containment(region: &RegionSpec, t: &ThresholdModel, k: f64) -> Result<()> {
    if let RegionSpec::Rectangle(rect) = region {
        let (ratio, point) = boundary_min_ratio(rect, t, edge_points(rect.dim()));
        if ratio < k {
            return Err(Error::Containment { point, ratio, k });
        }
    }
    Ok(())
}

/// `P(X in B)` as `P(X in B | R' > k) P(R' > k | R' > 1) P(R' > 1)`.
pub fn estimate_set_probability(
    fit: &FittedModel,
    exc: &ExceedanceSet,
    t: &ThresholdModel,
    region: &RegionSpec,
    k: f64,
    m: usize,
    seed: u64,
) -> Result<ProbEstimate> {
    check_containment(region, t, k)?;
    estimate_set_probability_unchecked(fit, exc, region, k, m, seed)
}

/// As [`estimate_set_probability`] without the containment check; the
/// result then covers only the part of `B` above `k r0`.
pub fn estimate_set_probability_unchecked(
    fit: &FittedModel,
    exc: &ExceedanceSet,
    region: &RegionSpec,
    k: f64,
    m: usize,
    seed: u64,
) -> Result<ProbEstimate> {
    if m == 0 {
        return Err(Error::Validation("need at least one simulated point".into()));
    }
    if let Some(dim) = region.dim() {
        if dim != exc.dim() {
            return Err(Error::Dimension { expected: exc.dim(), got: dim });
        }
    }
    let sample = simulate_conditional(fit, exc, m, k, seed)?;
    let hits = sample.points.rows().filter(|x| region.contains(x)).count();
    let conditional = hits as f64 / m as f64;
    let (ratio, base) = rprime_components(fit, exc, k)?;
    let value = conditional * ratio * base;
    let mc_se = (conditional * (1.0 - conditional) / m as f64).sqrt() * ratio * base;
    Ok(ProbEstimate { value, mc_se, components: ProbComponents { conditional, ratio, base }, k, m, hits, seed })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiPoint {
    pub u: f64,
    pub chi: f64,
    pub lo: f64,
    pub hi: f64,
    /// Conditioning level used by the model-based curve.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub k: Option<f64>,
}

fn check_subset(subset: &[usize], d: usize) -> Result<()> {
    if subset.is_empty() || subset.iter().any(|&j| j >= d) {
        return Err(Error::Validation(format!("index subset {subset:?} is empty or exceeds d={d}")));
    }
    Ok(())
}

/// Model-based `chi_C(u)`; levels `u` whose set cannot be contained in the
/// extreme region are dropped. Each `u` uses seed `seed + i`.
pub fn chi_model(
    fit: &FittedModel,
    exc: &ExceedanceSet,
    t: &ThresholdModel,
    subset: &[usize],
    u_grid: &[f64],
    m: usize,
    seed: u64,
) -> Result<Vec<ChiPoint>> {
    let d = exc.dim();
    check_subset(subset, d)?;
    let mut out = Vec::new();
    for (i, &u) in u_grid.iter().enumerate() {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Validation(format!("u must lie in (0,1), got {u}")));
        }
        let q = -(-u).ln_1p();
        let lower: Vec<f64> = (0..d).map(|j| if subset.contains(&j) { q } else { 0.0 }).collect();
        let rect = Rectangle::new(lower, vec![f64::INFINITY; d])?;
        let (min_ratio, _) = boundary_min_ratio(&rect, t, edge_points(d));
        let k = K_SAFETY * min_ratio;
        if k < 1.0 {
            log::info!("dropping u={u}: the set is not contained in the extreme region");
            continue;
        }
        let est = estimate_set_probability_unchecked(
            fit,
            exc,
            &RegionSpec::Rectangle(rect),
            k,
            m,
            seed.wrapping_add(i as u64),
        )?;
        let chi = est.value / (1.0 - u);
        let half = 1.96 * est.mc_se / (1.0 - u);
        out.push(ChiPoint { u, chi, lo: (chi - half).max(0.0), hi: chi + half, k: Some(k) });
    }
    Ok(out)
}

/// Empirical `chi_C(u)` from rank-based margins with normal-approximation
/// 95% intervals.
pub fn chi_empirical(x: &ExpData, subset: &[usize], u_grid: &[f64]) -> Result<Vec<ChiPoint>> {
    let (n, d) = (x.nrows(), x.dim());
    check_subset(subset, d)?;
    let mut ranks = vec![vec![0.0; n]; subset.len()];
    for (c, &j) in subset.iter().enumerate() {
        let col = x.values().column(j);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        for (rank, &i) in order.iter().enumerate() {
            ranks[c][i] = (rank + 1) as f64 / (n + 1) as f64;
        }
    }
    let top = n as f64 / (n + 1) as f64;
    let mut out = Vec::new();
    for &u in u_grid {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Validation(format!("u must lie in (0,1), got {u}")));
        }
        if u >= top {
            log::info!("dropping u={u}: no data above this level");
            continue;
        }
        let count = (0..n).filter(|&i| ranks.iter().all(|r| r[i] > u)).count();
        let p = count as f64 / n as f64;
        let scale = 1.0 - u;
        let (lo, hi) = if count == 0 {
            (0.0, (1.0 - 0.05f64.powf(1.0 / n as f64)) / scale)
        } else {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            (((p - 1.96 * se) / scale).max(0.0), (p + 1.96 * se) / scale)
        };
        out.push(ChiPoint { u, chi: p / scale, lo, hi, k: None });
    }
    Ok(out)
}
