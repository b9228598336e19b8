//! Parametric gauge functions on exponential margins.
//!
//! A gauge `g` is 1-homogeneous and describes the limit set `{x : g(x) <= 1}`.
//! Every catalogued family satisfies the exponential-margin constraint
//! `min_{x_k >= 0, k != j} g(x) = x_j`; additive mixes are rescaled so that
//! they satisfy it too.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{brent_minimize, halton, NelderMead};

/// Largest supported dimension.
pub const MAX_DIM: usize = 12;
/// Largest dimension for which the asymmetric-logistic gauge is evaluated.
pub const MAX_ASYM_DIM: usize = 5;

const UNIT_CAP: f64 = 1.0 - 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Logistic,
    NegLogisticMgpd,
    DirichletMgpd,
    InvertedLogistic,
    Gaussian,
    StudentT,
    Clayton,
    InvertedClayton,
    AsymLogistic,
    Vine3,
    Square,
    AdditiveMix,
    MinMix,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Logistic => "logistic",
            Family::NegLogisticMgpd => "neg_logistic_mgpd",
            Family::DirichletMgpd => "dirichlet_mgpd",
            Family::InvertedLogistic => "inverted_logistic",
            Family::Gaussian => "gaussian",
            Family::StudentT => "student_t",
            Family::Clayton => "clayton",
            Family::InvertedClayton => "inverted_clayton",
            Family::AsymLogistic => "asym_logistic",
            Family::Vine3 => "vine3",
            Family::Square => "square",
            Family::AdditiveMix => "additive_mix",
            Family::MinMix => "min_mix",
        }
    }

    pub fn is_mix(self) -> bool {
        matches!(self, Family::AdditiveMix | Family::MinMix)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Validation(format!("unknown gauge family `{s}`")))
    }
}

/// Map from an unconstrained optimizer coordinate to a parameter domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// `(0, inf)` via `exp`.
    Log,
    /// `(0, 1]` via the logistic function, clamped at `1 - 1e-8`.
    Unit,
    /// `(1, inf)` via `1 + exp`.
    ShiftedLog,
    /// `(-1, 1)` via `tanh`.
    Tanh,
}

impl Transform {
    pub fn to_natural(self, u: f64) -> f64 {
        match self {
            Transform::Log => u.exp(),
            Transform::Unit => (1.0 / (1.0 + (-u).exp())).min(UNIT_CAP),
            Transform::ShiftedLog => 1.0 + u.exp(),
            Transform::Tanh => u.tanh(),
        }
    }

    pub fn to_free(self, v: f64) -> f64 {
        match self {
            Transform::Log => v.ln(),
            Transform::Unit => {
                let v = v.min(UNIT_CAP);
                (v / (1.0 - v)).ln()
            }
            Transform::ShiftedLog => (v - 1.0).ln(),
            Transform::Tanh => v.clamp(-UNIT_CAP, UNIT_CAP).atanh(),
        }
    }
}

/// Groups of variables that can be simultaneously extreme, with a dependence
/// parameter per non-singleton group. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureSpec {
    pub groups: Vec<Vec<usize>>,
}

impl StructureSpec {
    pub fn new(groups: Vec<Vec<usize>>) -> Self {
        let groups = groups
            .into_iter()
            .map(|mut g| {
                g.sort_unstable();
                g
            })
            .collect();
        Self { groups }
    }

    /// All pairs `{i, j}` of `0..d`.
    pub fn pairwise(d: usize) -> Self {
        let mut groups = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                groups.push(vec![i, j]);
            }
        }
        Self { groups }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let mut covered = vec![false; d];
        for (k, g) in self.groups.iter().enumerate() {
            if g.is_empty() {
                return Err(Error::Validation("empty group in structure".into()));
            }
            if g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Validation(format!("group {g:?} has repeated or unsorted indices")));
            }
            if let Some(&j) = g.iter().find(|&&j| j >= d) {
                return Err(Error::Validation(format!("group index {j} out of range for d={d}")));
            }
            if self.groups[..k].contains(g) {
                return Err(Error::Validation(format!("duplicate group {g:?}")));
            }
            for &j in g {
                covered[j] = true;
            }
        }
        if let Some(j) = covered.iter().position(|c| !c) {
            return Err(Error::Validation(format!("index {j} belongs to no group")));
        }
        Ok(())
    }

    /// Number of free dependence parameters (one per non-singleton group).
    pub fn n_free(&self) -> usize {
        self.groups.iter().filter(|g| g.len() > 1).count()
    }

    fn mask(group: &[usize]) -> usize {
        group.iter().fold(0, |m, &j| m | (1 << j))
    }
}

/// Precomputed subset tables for the asymmetric-logistic gauge.
#[derive(Debug, Clone)]
struct AsymTables {
    /// Bit mask per group.
    group_masks: Vec<usize>,
    /// Dependence parameter per group (1 for singletons).
    group_gamma: Vec<f64>,
    /// For each subset `s`, the groups that contain it.
    covers: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
enum Cache {
    None,
    Precision(DMatrix<f64>),
    Asym(AsymTables),
}

/// Result of the marginal minimization.
#[derive(Debug, Clone)]
pub struct MarginalMin {
    pub value: f64,
    pub argmin: Vec<f64>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Gauge {
    family: Family,
    dim: usize,
    params: Vec<f64>,
    structure: Option<StructureSpec>,
    components: Vec<Gauge>,
    rescale: Vec<f64>,
    /// Gaussian only: negative correlations permitted (additive-mix component).
    signed: bool,
    cache: Cache,
}

impl PartialEq for Gauge {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family
            && self.dim == other.dim
            && self.params == other.params
            && self.structure == other.structure
            && self.components == other.components
            && self.rescale == other.rescale
            && self.signed == other.signed
    }
}

fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

fn n_corr(d: usize) -> usize {
    d * (d - 1) / 2
}

/// Correlation matrix from its upper triangle in row-major order.
pub fn correlation_matrix(d: usize, upper: &[f64]) -> DMatrix<f64> {
    let mut m = DMatrix::identity(d, d);
    let mut k = 0;
    for i in 0..d {
        for j in i + 1..d {
            m[(i, j)] = upper[k];
            m[(j, i)] = upper[k];
            k += 1;
        }
    }
    m
}

fn precision(d: usize, upper: &[f64]) -> Result<DMatrix<f64>> {
    let sigma = correlation_matrix(d, upper);
    let chol = sigma.cholesky().ok_or_else(|| domain("correlation matrix is not positive definite"))?;
    Ok(chol.inverse())
}

impl Gauge {
    /// Builds a non-mix gauge, validating the parameter domain.
    pub fn new(family: Family, dim: usize, params: Vec<f64>) -> Result<Self> {
        Self::build(family, dim, params, None, false)
    }

    pub fn logistic(dim: usize, gamma: f64) -> Result<Self> {
        Self::new(Family::Logistic, dim, vec![gamma])
    }

    pub fn inverted_logistic(dim: usize, gamma: f64) -> Result<Self> {
        Self::new(Family::InvertedLogistic, dim, vec![gamma])
    }

    /// Gaussian gauge from the upper triangle of the correlation matrix.
    pub fn gaussian(dim: usize, corr_upper: Vec<f64>) -> Result<Self> {
        Self::new(Family::Gaussian, dim, corr_upper)
    }

    /// Gaussian gauge allowing negative correlations; only valid as an
    /// additive-mix component.
    pub fn signed_gaussian(dim: usize, corr_upper: Vec<f64>) -> Result<Self> {
        Self::build(Family::Gaussian, dim, corr_upper, None, true)
    }

    pub fn clayton(dim: usize) -> Result<Self> {
        Self::new(Family::Clayton, dim, vec![])
    }

    pub fn asym_logistic(dim: usize, structure: StructureSpec, gammas: Vec<f64>) -> Result<Self> {
        Self::build(Family::AsymLogistic, dim, gammas, Some(structure), false)
    }

    pub fn vine3(beta: f64, gamma: f64) -> Result<Self> {
        Self::new(Family::Vine3, 3, vec![beta, gamma])
    }

    pub fn square(theta: f64) -> Result<Self> {
        Self::new(Family::Square, 2, vec![theta])
    }

    /// Representative starting parameters for a family.
    pub fn default_params(family: Family, dim: usize, structure: Option<&StructureSpec>) -> Vec<f64> {
        match family {
            Family::Logistic | Family::InvertedLogistic | Family::Square => vec![0.5],
            Family::NegLogisticMgpd => vec![2.0],
            Family::DirichletMgpd => vec![1.0; dim],
            Family::Gaussian => vec![0.3; n_corr(dim)],
            Family::StudentT => vec![2.0],
            Family::Clayton => vec![],
            Family::InvertedClayton => vec![1.0],
            Family::AsymLogistic => vec![0.5; structure.map_or(0, StructureSpec::n_free)],
            Family::Vine3 => vec![1.0, 1.0],
            Family::AdditiveMix | Family::MinMix => vec![],
        }
    }

    /// Non-mix gauge at its default parameters.
    pub fn with_defaults(family: Family, dim: usize, structure: Option<StructureSpec>) -> Result<Self> {
        let params = Self::default_params(family, dim, structure.as_ref());
        Self::build(family, dim, params, structure, false)
    }

    fn build(
        family: Family,
        dim: usize,
        params: Vec<f64>,
        structure: Option<StructureSpec>,
        signed: bool,
    ) -> Result<Self> {
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(Error::Unsupported(format!("dimension {dim} outside 2..={MAX_DIM}")));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(domain(format!("{family}: non-finite parameter")));
        }
        let expect = |n: usize| -> Result<()> {
            if params.len() == n {
                Ok(())
            } else {
                Err(domain(format!("{family}: expected {n} parameters, got {}", params.len())))
            }
        };
        let in_unit = |v: f64| v > 0.0 && v <= 1.0;
        let mut cache = Cache::None;
        match family {
            Family::Logistic | Family::InvertedLogistic | Family::Square => {
                expect(1)?;
                if !in_unit(params[0]) {
                    return Err(domain(format!("{family}: parameter must lie in (0,1], got {}", params[0])));
                }
                if family == Family::Square && dim != 2 {
                    return Err(Error::Unsupported("square gauge is bivariate".into()));
                }
            }
            Family::NegLogisticMgpd => {
                expect(1)?;
                if params[0] <= 1.0 {
                    return Err(domain(format!("neg_logistic_mgpd: gamma must exceed 1, got {}", params[0])));
                }
            }
            Family::DirichletMgpd => {
                expect(dim)?;
                if params.iter().any(|&t| t <= 0.0) {
                    return Err(domain("dirichlet_mgpd: theta must be positive"));
                }
            }
            Family::Gaussian => {
                expect(n_corr(dim))?;
                if params.iter().any(|&r| r.abs() >= 1.0) {
                    return Err(domain("gaussian: correlations must lie in (-1,1)"));
                }
                if !signed && params.iter().any(|&r| r < 0.0) {
                    return Err(domain("gaussian: negative correlations are only allowed inside an additive mix"));
                }
                cache = Cache::Precision(precision(dim, &params)?);
            }
            Family::StudentT | Family::InvertedClayton => {
                expect(1)?;
                if params[0] <= 0.0 {
                    return Err(domain(format!("{family}: parameter must be positive")));
                }
            }
            Family::Clayton => expect(0)?,
            Family::Vine3 => {
                expect(2)?;
                if dim != 3 {
                    return Err(Error::Unsupported("vine3 gauge is trivariate".into()));
                }
                if params.iter().any(|&p| p <= 0.0) {
                    return Err(domain("vine3: beta and gamma must be positive"));
                }
            }
            Family::AsymLogistic => {
                if dim > MAX_ASYM_DIM {
                    return Err(Error::Unsupported(format!(
                        "asym_logistic evaluation is limited to d <= {MAX_ASYM_DIM}"
                    )));
                }
                let s = structure.as_ref().ok_or_else(|| domain("asym_logistic needs a structure"))?;
                s.validate(dim)?;
                expect(s.n_free())?;
                if !params.iter().all(|&g| in_unit(g)) {
                    return Err(domain("asym_logistic: gamma_C must lie in (0,1]"));
                }
                cache = Cache::Asym(asym_tables(dim, s, &params));
            }
            Family::AdditiveMix | Family::MinMix => {
                return Err(Error::Validation("use additive_mix or min_mix to build mixtures".into()));
            }
        }
        Ok(Self {
            family,
            dim,
            params,
            structure: if family == Family::AsymLogistic { structure } else { None },
            components: Vec::new(),
            rescale: Vec::new(),
            signed: signed && family == Family::Gaussian,
            cache,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The family's own parameters (mix weights for an additive mix).
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn structure(&self) -> Option<&StructureSpec> {
        self.structure.as_ref()
    }

    pub fn components(&self) -> &[Gauge] {
        &self.components
    }

    /// Per-coordinate rescale factors of an additive mix (empty otherwise).
    pub fn rescale(&self) -> &[f64] {
        &self.rescale
    }

    /// Checked evaluation.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: x.len() });
        }
        if x.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(domain("gauge argument must be finite and non-negative"));
        }
        if x.iter().all(|&v| v == 0.0) {
            return Err(domain("gauge argument must be non-zero"));
        }
        Ok(self.value(x))
    }

    /// Unchecked evaluation; `x` must have length `dim` and be non-negative.
    pub fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let p = &self.params;
        let sum: f64 = x.iter().sum();
        let max = || x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = || x.iter().copied().fold(f64::INFINITY, f64::min);
        match self.family {
            Family::Logistic => sum / p[0] + (1.0 - d as f64 / p[0]) * min(),
            Family::NegLogisticMgpd | Family::InvertedClayton => (1.0 + d as f64 * p[0]) * max() - p[0] * sum,
            Family::DirichletMgpd => {
                let tsum: f64 = p.iter().sum();
                let dot: f64 = p.iter().zip(x).map(|(t, v)| t * v).sum();
                (1.0 + tsum) * max() - dot
            }
            Family::InvertedLogistic => {
                let m = max();
                if m == 0.0 {
                    return 0.0;
                }
                let s: f64 = x.iter().map(|v| (v / m).powf(1.0 / p[0])).sum();
                m * s.powf(p[0])
            }
            Family::Gaussian => {
                let Cache::Precision(q) = &self.cache else { unreachable!() };
                let mut s = [0.0; MAX_DIM];
                for (sj, v) in s.iter_mut().zip(x) {
                    *sj = v.sqrt();
                }
                let mut acc = 0.0;
                for i in 0..d {
                    let mut row = 0.0;
                    for j in 0..d {
                        row += q[(i, j)] * s[j];
                    }
                    acc += s[i] * row;
                }
                acc
            }
            Family::StudentT => (1.0 + d as f64 / p[0]) * max() - sum / p[0],
            Family::Clayton => sum,
            Family::Vine3 => vine3_value(p[0], p[1], x),
            Family::Square => {
                let diff = (x[0] - x[1]).abs() / p[0];
                diff.max((x[0] + x[1]) / (2.0 - p[0]))
            }
            Family::AsymLogistic => {
                let Cache::Asym(t) = &self.cache else { unreachable!() };
                asym_value(t, x)
            }
            Family::AdditiveMix => {
                let mut y = [0.0; MAX_DIM];
                for j in 0..d {
                    y[j] = self.rescale[j] * x[j];
                }
                let y = &y[..d];
                let m = self.components.len();
                let mut acc = self.components[m - 1].value(y);
                for (a, c) in self.params.iter().zip(&self.components) {
                    acc += a * c.value(y);
                }
                acc
            }
            Family::MinMix => self.components.iter().map(|c| c.value(x)).fold(f64::INFINITY, f64::min),
        }
    }

    /// Parameter values the likelihood optimizes over, in natural scale.
    /// For an additive mix: component parameters in order, then the weights.
    pub fn free_params(&self) -> Vec<f64> {
        match self.family {
            Family::AdditiveMix | Family::MinMix => {
                let mut v: Vec<f64> = self.components.iter().flat_map(Gauge::free_params).collect();
                v.extend_from_slice(&self.params);
                v
            }
            _ => self.params.clone(),
        }
    }

    pub fn n_free(&self) -> usize {
        self.free_params().len()
    }

    pub fn transforms(&self) -> Vec<Transform> {
        match self.family {
            Family::Logistic | Family::InvertedLogistic | Family::Square | Family::AsymLogistic => {
                vec![Transform::Unit; self.params.len()]
            }
            Family::NegLogisticMgpd => vec![Transform::ShiftedLog],
            Family::DirichletMgpd | Family::StudentT | Family::InvertedClayton | Family::Vine3 => {
                vec![Transform::Log; self.params.len()]
            }
            Family::Gaussian => vec![Transform::Tanh; self.params.len()],
            Family::Clayton => vec![],
            Family::AdditiveMix | Family::MinMix => {
                let mut v: Vec<Transform> = self.components.iter().flat_map(Gauge::transforms).collect();
                v.extend(std::iter::repeat_n(Transform::Log, self.params.len()));
                v
            }
        }
    }

    pub fn param_names(&self) -> Vec<String> {
        match self.family {
            Family::Logistic | Family::InvertedLogistic | Family::NegLogisticMgpd | Family::InvertedClayton => {
                vec!["gamma".into()]
            }
            Family::Square => vec!["theta".into()],
            Family::StudentT => vec!["nu".into()],
            Family::DirichletMgpd => (1..=self.dim).map(|j| format!("theta{j}")).collect(),
            Family::Gaussian => {
                let mut v = Vec::new();
                for i in 1..=self.dim {
                    for j in i + 1..=self.dim {
                        v.push(format!("rho{i}{j}"));
                    }
                }
                v
            }
            Family::Clayton => vec![],
            Family::Vine3 => vec!["beta".into(), "gamma".into()],
            Family::AsymLogistic => self
                .structure
                .as_ref()
                .map(|s| {
                    s.groups
                        .iter()
                        .filter(|g| g.len() > 1)
                        .map(|g| {
                            let idx: Vec<String> = g.iter().map(|j| (j + 1).to_string()).collect();
                            format!("gamma_{}", idx.join(""))
                        })
                        .collect()
                })
                .unwrap_or_default(),
            Family::AdditiveMix | Family::MinMix => {
                let mut v: Vec<String> = Vec::new();
                for (k, c) in self.components.iter().enumerate() {
                    v.extend(c.param_names().into_iter().map(|n| format!("{}{}.{n}", c.family, k + 1)));
                }
                v.extend((1..=self.params.len()).map(|k| format!("a{k}")));
                v
            }
        }
    }

    /// Same structure with new free parameters (see [`Gauge::free_params`]).
    pub fn with_free_params(&self, p: &[f64]) -> Result<Self> {
        if p.len() != self.n_free() {
            return Err(Error::Dimension { expected: self.n_free(), got: p.len() });
        }
        match self.family {
            Family::AdditiveMix | Family::MinMix => {
                let mut offset = 0;
                let mut comps = Vec::with_capacity(self.components.len());
                for c in &self.components {
                    let n = c.n_free();
                    comps.push(c.with_free_params(&p[offset..offset + n])?);
                    offset += n;
                }
                if self.family == Family::AdditiveMix {
                    additive_mix(comps, &p[offset..])
                } else {
                    min_mix_unchecked(comps)
                }
            }
            _ => Self::build(self.family, self.dim, p.to_vec(), self.structure.clone(), self.signed),
        }
    }

    pub fn to_spec(&self) -> GaugeSpec {
        GaugeSpec {
            family: self.family,
            dim: self.dim,
            params: self.params.clone(),
            structure: self.structure.as_ref().map(|s| s.groups.clone()),
            components: self.components.iter().map(Gauge::to_spec).collect(),
            rescale: self.rescale.clone(),
        }
    }

    pub fn from_spec(spec: &GaugeSpec) -> Result<Self> {
        Self::from_spec_inner(spec, false)
    }

    fn from_spec_inner(spec: &GaugeSpec, in_additive: bool) -> Result<Self> {
        match spec.family {
            Family::AdditiveMix | Family::MinMix => {
                let additive = spec.family == Family::AdditiveMix;
                let comps =
                    spec.components.iter().map(|c| Self::from_spec_inner(c, additive)).collect::<Result<Vec<_>>>()?;
                if comps.iter().any(|c| c.dim != spec.dim) {
                    return Err(Error::Validation("mix components must share the mix dimension".into()));
                }
                if additive {
                    if spec.rescale.len() == spec.dim {
                        additive_mix_with_rescale(comps, &spec.params, spec.rescale.clone())
                    } else {
                        additive_mix(comps, &spec.params)
                    }
                } else {
                    min_mix(comps)
                }
            }
            family => {
                let structure = spec.structure.clone().map(StructureSpec::new);
                Self::build(family, spec.dim, spec.params.clone(), structure, in_additive)
            }
        }
    }
}

/// Serialized form of a gauge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSpec {
    pub family: Family,
    pub dim: usize,
    #[serde(default)]
    pub params: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure: Option<Vec<Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<GaugeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rescale: Vec<f64>,
}

impl Serialize for Gauge {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_spec().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Gauge {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = GaugeSpec::deserialize(d)?;
        Gauge::from_spec(&spec).map_err(serde::de::Error::custom)
    }
}

fn vine3_value(beta: f64, gamma: f64, x: &[f64]) -> f64 {
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    let hi = x2.max(x3);
    let lo = x2.min(x3);
    let excess = hi - x2;
    (1.0 + beta) * hi - beta * lo - gamma * x1 - (gamma + 1.0) * (beta + 1.0) * excess
        + (2.0 * gamma + 1.0) * x1.max((beta + 1.0) * excess)
}

/// Trivariate vine-copula gauge.
pub fn vine3_gauge(beta: f64, gamma: f64, x: &[f64]) -> Result<f64> {
    Gauge::vine3(beta, gamma)?.eval(x)
}

fn asym_tables(d: usize, s: &StructureSpec, gammas: &[f64]) -> AsymTables {
    let mut group_masks = Vec::new();
    let mut group_gamma = Vec::new();
    let mut free = gammas.iter();
    for g in &s.groups {
        group_masks.push(StructureSpec::mask(g));
        group_gamma.push(if g.len() > 1 { *free.next().expect("one gamma per group") } else { 1.0 });
    }
    let covers = (0..1usize << d)
        .map(|sub| (0..group_masks.len()).filter(|&k| sub != 0 && group_masks[k] & sub == sub).collect())
        .collect();
    AsymTables { group_masks, group_gamma, covers }
}

/// Minimum over set partitions `pi` and group assignments `C_s ⊇ s` of
/// `sum_s [ sum_{j in s} x_j / gamma_C + min_{j in C} x_j (1 - |s| / gamma_C) ]`,
/// by dynamic programming over subsets.
fn asym_value(t: &AsymTables, x: &[f64]) -> f64 {
    let d = x.len();
    let full = (1usize << d) - 1;
    let mut group_min = [0.0f64; 64];
    for (k, &m) in t.group_masks.iter().enumerate() {
        group_min[k] = (0..d).filter(|j| m >> j & 1 == 1).map(|j| x[j]).fold(f64::INFINITY, f64::min);
    }
    let mut block = [f64::INFINITY; 1 << MAX_ASYM_DIM];
    for s in 1..=full {
        let size = s.count_ones() as f64;
        let ssum: f64 = (0..d).filter(|j| s >> j & 1 == 1).map(|j| x[j]).sum();
        for &k in &t.covers[s] {
            let gam = t.group_gamma[k];
            let v = ssum / gam + group_min[k] * (1.0 - size / gam);
            if v < block[s] {
                block[s] = v;
            }
        }
    }
    let mut best = [f64::INFINITY; 1 << MAX_ASYM_DIM];
    best[0] = 0.0;
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        // every submask of `rest`, joined with the lowest bit
        let mut sub = rest;
        loop {
            let s = sub | low;
            let v = block[s] + best[mask ^ s];
            if v < best[mask] {
                best[mask] = v;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    best[full]
}

/// `min { g(x) : x_j = 1, x_k >= 0 }`.
pub fn marginal_min(g: &Gauge, j: usize) -> Result<MarginalMin> {
    marginal_min_with(g, j, 32)
}

/// [`marginal_min`] with a configurable number of starts for `d >= 3`.
pub fn marginal_min_with(g: &Gauge, j: usize, starts: usize) -> Result<MarginalMin> {
    let d = g.dim();
    if j >= d {
        return Err(Error::Validation(format!("coordinate {j} out of range for d={d}")));
    }
    let embed = |y: &[f64], x: &mut [f64]| {
        let mut it = y.iter();
        for (k, xk) in x.iter_mut().enumerate() {
            *xk = if k == j { 1.0 } else { it.next().unwrap().abs() };
        }
    };
    if d == 2 {
        // one free coordinate t = u / (1 - u), u in [0, 1)
        let f = |u: f64| {
            let t = u / (1.0 - u);
            let mut x = [0.0; 2];
            embed(&[t], &mut x);
            g.value(&x)
        };
        let n = 400;
        let grid: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&u| f(u)).collect();
        let ib = (0..n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        let lo = grid[ib.saturating_sub(1)];
        let hi = grid[(ib + 1).min(n - 1)];
        let (mut u, mut v) = brent_minimize(f, lo, hi, 1e-12, 200);
        if vals[ib] < v {
            u = grid[ib];
            v = vals[ib];
        }
        let t = u / (1.0 - u);
        let mut x = vec![0.0; 2];
        embed(&[t], &mut x);
        return Ok(MarginalMin { value: v, argmin: x, converged: v.is_finite() });
    }
    let nm = NelderMead { max_evals: 3000, ftol: 1e-12, xtol: 1e-10, initial_step: 0.25, restarts: 1 };
    let mut buf = vec![0.0; d];
    let mut best: Option<(f64, Vec<f64>, bool)> = None;
    for s in 0..starts.max(1) {
        let y0: Vec<f64> = halton(s, d - 1).into_iter().map(|h| 2.0 * h).collect();
        let r = nm.minimize(
            |y| {
                embed(y, &mut buf);
                g.value(&buf)
            },
            &y0,
        );
        if best.as_ref().is_none_or(|b| r.fx < b.0) {
            best = Some((r.fx, r.x, r.converged));
        }
    }
    let (value, y, converged) = best.unwrap();
    let mut x = vec![0.0; d];
    embed(&y, &mut x);
    if !value.is_finite() {
        return Err(Error::Numerical(format!("marginal minimization of {} failed", g.family())));
    }
    Ok(MarginalMin { value, argmin: x, converged })
}

/// Coordinatewise supremum of `{x : g(x) <= 1}`: `c_j = 1 / marginal_min(g, j)`.
pub fn coordinatewise_sup(g: &Gauge) -> Result<Vec<f64>> {
    coordinatewise_sup_with(g, 32)
}

fn coordinatewise_sup_with(g: &Gauge, starts: usize) -> Result<Vec<f64>> {
    (0..g.dim())
        .map(|j| {
            let m = marginal_min_with(g, j, starts)?;
            if m.value <= 0.0 {
                return Err(Error::Domain(format!(
                    "gauge {} has non-positive marginal minimum {} in coordinate {j}",
                    g.family(),
                    m.value
                )));
            }
            Ok(1.0 / m.value)
        })
        .collect()
}

/// `a_1 g_1 + ... + a_{m-1} g_{m-1} + g_m`, rescaled to satisfy the
/// exponential-margin constraint.
pub fn additive_mix(components: Vec<Gauge>, weights: &[f64]) -> Result<Gauge> {
    let mut g = additive_mix_with_rescale(components, weights, Vec::new())?;
    let d = g.dim;
    g.rescale = vec![1.0; d];
    g.rescale = coordinatewise_sup_with(&g, 32)?;
    Ok(g)
}

fn additive_mix_with_rescale(components: Vec<Gauge>, weights: &[f64], rescale: Vec<f64>) -> Result<Gauge> {
    let first = components.first().ok_or_else(|| Error::Validation("mix needs a component".into()))?;
    let d = first.dim;
    if components.iter().any(|c| c.dim != d) {
        return Err(Error::Validation("mix components must share a dimension".into()));
    }
    if weights.len() + 1 != components.len() {
        return Err(Error::Validation(format!(
            "additive mix of {} components needs {} weights, got {}",
            components.len(),
            components.len() - 1,
            weights.len()
        )));
    }
    if weights.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(domain("mix weights must be positive"));
    }
    let components = components
        .into_iter()
        .map(|mut c| {
            if c.family == Family::Gaussian {
                c.signed = true;
            }
            c
        })
        .collect();
    Ok(Gauge {
        family: Family::AdditiveMix,
        dim: d,
        params: weights.to_vec(),
        structure: None,
        components,
        rescale,
        signed: false,
        cache: Cache::None,
    })
}

/// Pointwise minimum of gauges that each satisfy the margin constraint.
pub fn min_mix(components: Vec<Gauge>) -> Result<Gauge> {
    for (k, c) in components.iter().enumerate() {
        for j in 0..c.dim() {
            let m = marginal_min(c, j)?;
            if (m.value - 1.0).abs() > 1e-4 {
                return Err(Error::Validation(format!(
                    "min_mix component {k} ({}) violates the margin constraint in coordinate {j}: {}",
                    c.family(),
                    m.value
                )));
            }
        }
    }
    min_mix_unchecked(components)
}

fn min_mix_unchecked(components: Vec<Gauge>) -> Result<Gauge> {
    let first = components.first().ok_or_else(|| Error::Validation("mix needs a component".into()))?;
    let d = first.dim;
    if components.iter().any(|c| c.dim != d) {
        return Err(Error::Validation("mix components must share a dimension".into()));
    }
    Ok(Gauge {
        family: Family::MinMix,
        dim: d,
        params: Vec::new(),
        structure: None,
        components,
        rescale: Vec::new(),
        signed: false,
        cache: Cache::None,
    })
}

/// Angle-dependent gamma shape of the Gaussian dependence structure,
/// `d/2 + (w^{1/2})' Sigma^{-1} w^{-1/2} / 2`.
pub fn gaussian_shape(sigma: &DMatrix<f64>, w: &[f64]) -> Result<f64> {
    let d = w.len();
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(Error::Dimension { expected: d, got: sigma.nrows() });
    }
    if w.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return Err(domain("gaussian_shape needs w strictly inside the simplex"));
    }
    let q = sigma.clone().cholesky().ok_or_else(|| domain("correlation matrix is not positive definite"))?.inverse();
    let mut acc = 0.0;
    for i in 0..d {
        for j in 0..d {
            acc += w[i].sqrt() * q[(i, j)] / w[j].sqrt();
        }
    }
    Ok(d as f64 / 2.0 + acc / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn logistic(g: f64) -> Gauge {
        Gauge::logistic(2, g).unwrap()
    }

    #[test]
    fn catalogue_values() {
        assert_relative_eq!(logistic(0.5).eval(&[1.0, 1.0]).unwrap(), 1.0, epsilon = 1e-14);
        let ind = Gauge::gaussian(2, vec![0.0]).unwrap();
        assert_relative_eq!(ind.eval(&[0.3, 1.7]).unwrap(), 2.0, epsilon = 1e-14);
        let il = Gauge::inverted_logistic(2, 0.5).unwrap();
        assert_relative_eq!(il.eval(&[1.0, 1.0]).unwrap(), 2f64.sqrt(), epsilon = 1e-14);
        let gs = Gauge::gaussian(2, vec![0.5]).unwrap();
        assert_relative_eq!(gs.eval(&[1.0, 1.0]).unwrap(), 4.0 / 3.0, epsilon = 1e-14);
        // explicit bivariate form (x1 + x2 - 2 rho sqrt(x1 x2)) / (1 - rho^2)
        let (a, b) = (0.7, 2.2);
        assert_relative_eq!(gs.eval(&[a, b]).unwrap(), (a + b - (a * b).sqrt()) / 0.75, epsilon = 1e-13);
        assert_relative_eq!(Gauge::clayton(3).unwrap().eval(&[1.0, 2.0, 3.0]).unwrap(), 6.0);
    }

    #[test]
    fn domains_are_enforced() {
        assert!(Gauge::logistic(2, 1.2).is_err());
        assert!(Gauge::logistic(2, 0.0).is_err());
        assert!(Gauge::new(Family::NegLogisticMgpd, 2, vec![0.5]).is_err());
        assert!(Gauge::gaussian(2, vec![-0.3]).is_err());
        assert!(Gauge::signed_gaussian(2, vec![-0.3]).is_ok());
        assert!(Gauge::gaussian(3, vec![0.9, 0.9, -0.9]).is_err());
        assert!(Gauge::new(Family::Vine3, 2, vec![1.0, 1.0]).is_err());
        assert!(logistic(0.5).eval(&[1.0]).is_err());
        assert!(logistic(0.5).eval(&[0.0, 0.0]).is_err());
        assert!(logistic(0.5).eval(&[-1.0, 1.0]).is_err());
        let s = StructureSpec::new(vec![vec![0, 1]]);
        assert!(Gauge::asym_logistic(3, s, vec![0.5]).is_err());
        let s6 = StructureSpec::new(vec![(0..6).collect()]);
        assert!(matches!(Gauge::asym_logistic(6, s6, vec![0.5]), Err(Error::Unsupported(_))));
    }

    #[test]
    fn vine3_at_unit_vector() {
        // excess term vanishes at x2 = x3, leaving (1 + b) - b - g + (2g + 1) = 2 + g
        for &(b, g) in &[(0.5, 0.3), (2.0, 1.5)] {
            assert_relative_eq!(vine3_gauge(b, g, &[1.0, 1.0, 1.0]).unwrap(), 2.0 + g, epsilon = 1e-14);
        }
    }

    #[test]
    fn marginal_minimum_of_known_families() {
        let m = marginal_min(&logistic(0.5), 0).unwrap();
        assert_relative_eq!(m.value, 1.0, epsilon = 1e-8);
        let gs = Gauge::gaussian(2, vec![0.5]).unwrap();
        let m = marginal_min(&gs, 0).unwrap();
        assert_relative_eq!(m.value, 1.0, epsilon = 1e-8);
        assert_relative_eq!(m.argmin[1], 0.25, epsilon = 1e-4);
        let m = marginal_min(&Gauge::clayton(2).unwrap(), 0).unwrap();
        assert_relative_eq!(m.value, 1.0, epsilon = 1e-12);
        assert!(m.argmin[1] < 1e-8);
    }

    #[test]
    fn marginal_minimum_trivariate() {
        let s = StructureSpec::pairwise(3);
        let g = Gauge::asym_logistic(3, s, vec![0.4, 0.4, 0.4]).unwrap();
        for j in 0..3 {
            assert_relative_eq!(marginal_min(&g, j).unwrap().value, 1.0, epsilon = 1e-6);
        }
        let v = Gauge::vine3(0.7, 1.3).unwrap();
        for j in 0..3 {
            assert_relative_eq!(marginal_min(&v, j).unwrap().value, 1.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn doubled_gauge_halves_the_supremum() {
        let g = logistic(0.5);
        let mix = additive_mix(vec![g.clone(), g.clone()], &[1.0]).unwrap();
        for &c in mix.rescale() {
            assert_relative_eq!(c, 0.5, epsilon = 1e-8);
        }
        for x in [[1.0, 0.2], [0.3, 0.9], [2.0, 2.0]] {
            assert_relative_eq!(mix.value(&x), g.value(&x), max_relative = 1e-6);
        }
    }

    #[test]
    fn single_component_mix_is_identity() {
        let g = Gauge::gaussian(2, vec![0.5]).unwrap();
        let mix = additive_mix(vec![g.clone()], &[]).unwrap();
        for x in [[1.0, 0.2], [0.3, 0.9], [2.0, 2.0]] {
            assert_relative_eq!(mix.value(&x), g.value(&x), max_relative = 1e-9);
        }
    }

    #[test]
    fn additive_mix_interpolates_toward_pointy() {
        // Gaussian weighted by a1, logistic last: lowering a1 moves weight to
        // the logistic and g(1,1) falls toward 1
        let gs = Gauge::gaussian(2, vec![0.5]).unwrap();
        let lg = logistic(0.5);
        let expected = [(3.0, 1.071_428_571_428_571), (2.0, 1.018_518_518_518_518), (1.0, 1.0)];
        for (a, want) in expected {
            let mix = additive_mix(vec![gs.clone(), lg.clone()], &[a]).unwrap();
            for j in 0..2 {
                assert_relative_eq!(marginal_min(&mix, j).unwrap().value, 1.0, epsilon = 1e-6);
            }
            assert_relative_eq!(mix.value(&[1.0, 1.0]), want, epsilon = 1e-6);
        }
    }

    #[test]
    fn min_mix_behaviour() {
        let gs = Gauge::gaussian(2, vec![0.5]).unwrap();
        let mm = min_mix(vec![logistic(0.5), gs.clone()]).unwrap();
        assert_relative_eq!(mm.value(&[1.0, 1.0]), 1.0, epsilon = 1e-14);
        let idem = min_mix(vec![gs.clone(), gs.clone()]).unwrap();
        assert_eq!(idem.value(&[0.2, 0.7]), gs.value(&[0.2, 0.7]));
        let mix = additive_mix(vec![gs.clone(), gs.clone()], &[1.0]).unwrap();
        let unscaled = Gauge { rescale: vec![1.0, 1.0], ..mix };
        assert!(min_mix(vec![unscaled]).is_err());
    }

    #[test]
    fn gaussian_shape_values() {
        let s = correlation_matrix(2, &[0.5]);
        assert_relative_eq!(gaussian_shape(&s, &[0.5, 0.5]).unwrap(), 5.0 / 3.0, epsilon = 1e-12);
        let id = correlation_matrix(3, &[0.0, 0.0, 0.0]);
        assert_relative_eq!(gaussian_shape(&id, &[0.2, 0.3, 0.5]).unwrap(), 3.0, epsilon = 1e-12);
        let s9 = correlation_matrix(2, &[0.9]);
        assert!(gaussian_shape(&s9, &[0.999, 0.001]).unwrap() < 0.0);
        assert!(gaussian_shape(&s, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn serde_round_trip() {
        let s = StructureSpec::new(vec![vec![0, 1], vec![2], vec![1, 2]]);
        let al = Gauge::asym_logistic(3, s, vec![0.3, 0.6]).unwrap();
        let gs = Gauge::signed_gaussian(3, vec![0.5, -0.2, 0.1]).unwrap();
        let mix = additive_mix(vec![gs, al.clone()], &[2.0]).unwrap();
        for g in [al, mix] {
            let text = serde_json::to_string(&g).unwrap();
            let back: Gauge = serde_json::from_str(&text).unwrap();
            assert_eq!(g, back);
        }
    }

    #[test]
    fn free_param_round_trip() {
        let gs = Gauge::gaussian(2, vec![0.5]).unwrap();
        let mix = additive_mix(vec![gs, logistic(0.5)], &[2.0]).unwrap();
        assert_eq!(mix.free_params(), vec![0.5, 0.5, 2.0]);
        assert_eq!(mix.transforms(), vec![Transform::Tanh, Transform::Unit, Transform::Log]);
        let m2 = mix.with_free_params(&[0.2, 0.4, 1.0]).unwrap();
        assert_eq!(m2.free_params(), vec![0.2, 0.4, 1.0]);
        for t in [Transform::Log, Transform::Unit, Transform::ShiftedLog, Transform::Tanh] {
            let v = t.to_natural(0.37);
            assert_relative_eq!(t.to_free(v), 0.37, epsilon = 1e-12);
        }
        assert!(Transform::Unit.to_natural(100.0) < 1.0);
    }

    #[test]
    fn family_names_parse() {
        for f in [Family::Logistic, Family::NegLogisticMgpd, Family::AsymLogistic, Family::AdditiveMix] {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        assert!("nope".parse::<Family>().is_err());
    }
}
