//! Radial-angular decomposition, the rolling-window threshold surface
//! `r0(w)` and the empirical gauge `C / r0(w)`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{format_f64, ExpData, Matrix};
use crate::error::{Error, Result};
use crate::special::quantile_sorted;

pub const DEFAULT_TAU: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialAngular {
    pub r: Vec<f64>,
    /// Angles on the unit simplex, one row per observation.
    pub w: Matrix,
}

impl RadialAngular {
    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.w.ncols()
    }
}

/// `r = sum_j x_j`, `w = x / r`.
pub fn decompose(x: &ExpData) -> RadialAngular {
    decompose_rows(x.values()).expect("exponential-margin rows have positive sums")
}

/// As [`decompose`] for any non-negative matrix; rows may sit on the
/// boundary of the orthant but must have a positive sum.
pub fn decompose_rows(m: &Matrix) -> Result<RadialAngular> {
    let (n, d) = (m.nrows(), m.ncols());
    let mut r = Vec::with_capacity(n);
    let mut w = Matrix::zeros(n, d);
    for (i, row) in m.rows().enumerate() {
        let s: f64 = row.iter().sum();
        if !(s > 0.0 && s.is_finite()) || row.iter().any(|v| *v < 0.0) {
            return Err(Error::Validation(format!("row {i} is not a non-negative point with positive sum")));
        }
        r.push(s);
        for (wj, xj) in w.row_mut(i).iter_mut().zip(row) {
            *wj = xj / s;
        }
    }
    Ok(RadialAngular { r, w })
}

/// Rolling-window layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    /// d = 2: number of equally spaced centers on `[0, 1]` in `w_1`.
    pub n_centers: usize,
    /// d = 2: window half-width in `w_1`.
    pub half_width: f64,
    /// d >= 3: block side in each of the first `d - 1` coordinates.
    pub side: f64,
    /// d >= 3: fractional overlap of neighbouring blocks.
    pub overlap: f64,
    /// Fewest points a window may hold before it is enlarged.
    pub min_points: usize,
    /// Enlargement factor for thin windows.
    pub growth: f64,
    pub max_growths: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { n_centers: 50, half_width: 0.05, side: 0.2, overlap: 0.5, min_points: 20, growth: 1.5, max_growths: 8 }
    }
}

impl WindowSpec {
    fn validate(&self) -> Result<()> {
        let ok = self.n_centers >= 2
            && self.half_width > 0.0
            && self.side > 0.0
            && self.side <= 1.0
            && (0.0..1.0).contains(&self.overlap)
            && self.min_points >= 1
            && self.growth > 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid window spec {self:?}")))
        }
    }

    /// Grid coordinates of the window centers along each axis.
    fn axis(&self, d: usize) -> Vec<f64> {
        if d == 2 {
            let m = self.n_centers;
            return (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        }
        let half = self.side / 2.0;
        let stride = self.side * (1.0 - self.overlap);
        let mut v = Vec::new();
        let mut k = 0;
        loop {
            let c = half + k as f64 * stride;
            if c > 1.0 - half + 1e-9 {
                break;
            }
            v.push(c);
            k += 1;
        }
        if v.is_empty() {
            v.push(0.5);
        }
        v
    }

    /// Window centers in the first `d - 1` simplex coordinates.
    pub fn centers(&self, d: usize) -> Vec<Vec<f64>> {
        let axis = self.axis(d);
        center_grid(&axis, d).into_iter().map(|idx| idx.iter().map(|&i| axis[i]).collect()).collect()
    }

    /// Unenlarged window half-width.
    pub fn base_half(&self, d: usize) -> f64 {
        if d == 2 {
            self.half_width
        } else {
            self.side / 2.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdNode {
    /// Grid index along each of the first `d - 1` axes.
    pub index: Vec<usize>,
    /// Center in the first `d - 1` simplex coordinates.
    pub center: Vec<f64>,
    pub value: f64,
    pub count: usize,
    /// Half-width actually used after any enlargement.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ThresholdRepr {
    tau: f64,
    dim: usize,
    window: WindowSpec,
    axis: Vec<f64>,
    nodes: Vec<ThresholdNode>,
}

/// Fitted threshold surface over the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ThresholdRepr", into = "ThresholdRepr")]
pub struct ThresholdModel {
    pub tau: f64,
    pub dim: usize,
    pub window: WindowSpec,
    pub axis: Vec<f64>,
    pub nodes: Vec<ThresholdNode>,
    /// Dense grid lookup into `nodes`.
    lookup: Vec<Option<usize>>,
}

impl From<ThresholdRepr> for ThresholdModel {
    fn from(r: ThresholdRepr) -> Self {
        ThresholdModel::assemble(r.tau, r.dim, r.window, r.axis, r.nodes)
    }
}

impl From<ThresholdModel> for ThresholdRepr {
    fn from(t: ThresholdModel) -> Self {
        ThresholdRepr { tau: t.tau, dim: t.dim, window: t.window, axis: t.axis, nodes: t.nodes }
    }
}

fn flat_index(index: &[usize], m: usize) -> usize {
    index.iter().fold(0, |acc, &i| acc * m + i)
}

fn window_radii(r: &[f64], w: &Matrix, center: &[f64], half: f64, mirror: bool) -> Vec<f64> {
    let d1 = center.len();
    let mut out = Vec::new();
    for (i, &ri) in r.iter().enumerate() {
        let wi = w.row(i);
        if mirror {
            let c = center[0];
            let w1 = wi[0];
            for v in [w1, -w1, 2.0 - w1] {
                if (v - c).abs() <= half {
                    out.push(ri);
                }
            }
        } else if (0..d1).all(|k| (wi[k] - center[k]).abs() <= half) {
            out.push(ri);
        }
    }
    out
}

/// Grid indices of the window centers kept for dimension `d`: all of them
/// for `d = 2`, otherwise those whose blocks can reach the simplex.
fn center_grid(axis: &[f64], d: usize) -> Vec<Vec<usize>> {
    let m = axis.len();
    let d1 = d - 1;
    let stride = if m > 1 { axis[1] - axis[0] } else { 0.0 };
    let limit = 1.0 + (d as f64 - 2.0) * stride + 1e-9;
    let mut centers = Vec::new();
    for flat in 0..m.pow(d1 as u32) {
        let mut idx = vec![0; d1];
        let mut rem = flat;
        for k in (0..d1).rev() {
            idx[k] = rem % m;
            rem /= m;
        }
        let s: f64 = idx.iter().map(|&i| axis[i]).sum();
        if d == 2 || s <= limit {
            centers.push(idx);
        }
    }
    centers
}

/// Whether the first `d - 1` coordinates of `w` lie within `half` of `center`.
pub fn in_window(w: &[f64], center: &[f64], half: f64) -> bool {
    center.iter().zip(w).all(|(c, v)| (v - c).abs() <= half)
}

/// Rolling-window tau-quantile surface of `R | W = w`.
pub fn fit_threshold(ra: &RadialAngular, tau: f64, window: &WindowSpec) -> Result<ThresholdModel> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Validation(format!("tau must lie in (0,1), got {tau}")));
    }
    window.validate()?;
    let d = ra.dim();
    if d < 2 {
        return Err(Error::Validation("threshold surface needs d >= 2".into()));
    }
    let axis = window.axis(d);
    let centers = center_grid(&axis, d);
    let base = window.base_half(d);
    let nodes = centers
        .into_par_iter()
        .map(|idx| {
            let center: Vec<f64> = idx.iter().map(|&i| axis[i]).collect();
            let mut half = base;
            let mut radii = window_radii(&ra.r, &ra.w, &center, half, d == 2);
            let mut growths = 0;
            while radii.len() < window.min_points && growths < window.max_growths {
                half *= window.growth;
                growths += 1;
                radii = window_radii(&ra.r, &ra.w, &center, half, d == 2);
            }
            if radii.len() < window.min_points {
                return Err(Error::ThinWindow { center, count: radii.len() });
            }
            radii.sort_by(|a, b| a.total_cmp(b));
            let value = quantile_sorted(&radii, tau);
            Ok(ThresholdNode { index: idx, center, value, count: radii.len(), half_width: half })
        })
        .collect::<Result<Vec<_>>>()?;
    if nodes.iter().any(|n| !(n.value > 0.0)) {
        return Err(Error::Numerical("threshold surface has a non-positive node".into()));
    }
    Ok(ThresholdModel::assemble(tau, d, window.clone(), axis, nodes))
}

impl ThresholdModel {
    fn assemble(tau: f64, dim: usize, window: WindowSpec, axis: Vec<f64>, nodes: Vec<ThresholdNode>) -> Self {
        let m = axis.len();
        let mut lookup = vec![None; m.pow((dim - 1) as u32)];
        for (k, n) in nodes.iter().enumerate() {
            lookup[flat_index(&n.index, m)] = Some(k);
        }
        Self { tau, dim, window, axis, nodes, lookup }
    }

    /// Threshold surface with the same value everywhere; useful for tests and
    /// for the degenerate median split.
    pub fn constant(dim: usize, tau: f64, value: f64) -> Self {
        let node =
            ThresholdNode { index: vec![0; dim - 1], center: vec![0.5; dim - 1], value, count: 0, half_width: 1.0 };
        Self::assemble(tau, dim, WindowSpec::default(), vec![0.5], vec![node])
    }

    fn node(&self, index: &[usize]) -> Option<&ThresholdNode> {
        self.lookup[flat_index(index, self.axis.len())].map(|k| &self.nodes[k])
    }

    fn nearest(&self, w: &[f64]) -> f64 {
        self.nodes
            .iter()
            .map(|n| {
                let d2: f64 = n.center.iter().zip(w).map(|(c, v)| (c - v).powi(2)).sum();
                (d2, n.value)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|p| p.1)
            .unwrap()
    }

    /// `r0(w)`: multilinear interpolation between window centers, nearest
    /// node outside the center grid.
    pub fn eval(&self, w: &[f64]) -> f64 {
        let d1 = self.dim - 1;
        let a = &self.axis;
        let m = a.len();
        if m == 1 {
            return if self.nodes.len() == 1 { self.nodes[0].value } else { self.nearest(&w[..d1]) };
        }
        let mut lo = [0usize; 16];
        let mut frac = [0.0f64; 16];
        for k in 0..d1 {
            let v = w[k];
            if v < a[0] - 1e-12 || v > a[m - 1] + 1e-12 {
                return self.nearest(&w[..d1]);
            }
            let i = a.partition_point(|&c| c <= v).clamp(1, m - 1) - 1;
            lo[k] = i;
            frac[k] = ((v - a[i]) / (a[i + 1] - a[i])).clamp(0.0, 1.0);
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; d1];
        for corner in 0..(1usize << d1) {
            let mut weight = 1.0;
            for k in 0..d1 {
                let up = corner >> k & 1 == 1;
                idx[k] = lo[k] + up as usize;
                weight *= if up { frac[k] } else { 1.0 - frac[k] };
            }
            if weight == 0.0 {
                continue;
            }
            match self.node(&idx) {
                Some(n) => acc += weight * n.value,
                None => return self.nearest(&w[..d1]),
            }
        }
        acc
    }

    /// CSV with the node centers, values, window counts and half-widths.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..self.dim).map(|k| format!("w{k}")).collect();
        header.extend(["r0".into(), "count".into(), "half_width".into()]);
        out.write_record(&header)?;
        for n in &self.nodes {
            let mut rec: Vec<String> = n.center.iter().map(|v| format_f64(*v)).collect();
            rec.push(format_f64(n.value));
            rec.push(n.count.to_string());
            rec.push(format_f64(n.half_width));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn eval_r0(t: &ThresholdModel, w: &[f64]) -> f64 {
    t.eval(w)
}

/// Observations above the threshold surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSet {
    /// Row indices into the parent sample.
    pub indices: Vec<usize>,
    pub r: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub r0: Vec<f64>,
    pub rprime: Vec<f64>,
    /// Size of the parent sample.
    pub n_total: usize,
}

impl ExceedanceSet {
    pub fn n0(&self) -> usize {
        self.r.len()
    }

    pub fn dim(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    /// Empirical `P(R' > 1)`.
    pub fn exceedance_rate(&self) -> f64 {
        self.n0() as f64 / self.n_total as f64
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            indices: idx.iter().map(|&i| self.indices[i]).collect(),
            r: idx.iter().map(|&i| self.r[i]).collect(),
            w: idx.iter().map(|&i| self.w[i].clone()).collect(),
            r0: idx.iter().map(|&i| self.r0[i]).collect(),
            rprime: idx.iter().map(|&i| self.rprime[i]).collect(),
            n_total: self.n_total,
        }
    }
}

pub fn exceedances(ra: &RadialAngular, t: &ThresholdModel) -> ExceedanceSet {
    let mut set = ExceedanceSet {
        indices: Vec::new(),
        r: Vec::new(),
        w: Vec::new(),
        r0: Vec::new(),
        rprime: Vec::new(),
        n_total: ra.len(),
    };
    for i in 0..ra.len() {
        let w = ra.w.row(i);
        let r0 = t.eval(w);
        let r = ra.r[i];
        if r > r0 {
            set.indices.push(i);
            set.r.push(r);
            set.w.push(w.to_vec());
            set.r0.push(r0);
            set.rprime.push(r / r0);
        }
    }
    if set.n0() == 0 {
        log::warn!("no observation exceeds the threshold surface");
    }
    set
}

/// Points of a regular grid on the simplex with spacing `1 / steps`.
pub fn simplex_grid(d: usize, steps: usize) -> Vec<Vec<f64>> {
    fn rec(d: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == d - 1 {
            let mut p: Vec<f64> = cur.iter().map(|&k| k as f64 / steps as f64).collect();
            p.push(left as f64 / steps as f64);
            out.push(p);
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(d, left - k, steps, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, steps, steps, &mut Vec::new(), &mut out);
    out
}

fn default_steps(d: usize) -> usize {
    match d {
        2 => 2000,
        3 => 100,
        4 => 40,
        _ => 16,
    }
}

/// Non-parametric gauge estimate `g(w) = C / r0(w)`, with `C` chosen so that
/// the implied limit-set boundary `w r0(w) / C` has coordinatewise maximum 1.
#[derive(Debug, Clone)]
pub struct EmpiricalGauge {
    pub c_hat: f64,
    /// Direction attaining `c_hat`.
    pub argmax: Vec<f64>,
    threshold: ThresholdModel,
}

fn boundary_extent(t: &ThresholdModel, w: &[f64]) -> f64 {
    let r0 = t.eval(w);
    w.iter().map(|wj| wj * r0).fold(0.0, f64::max)
}

/// Pattern search on the simplex along the directions `e_i - e_j`.
fn refine_on_simplex(t: &ThresholdModel, start: &[f64], step: f64) -> (f64, Vec<f64>) {
    let d = start.len();
    let mut w = start.to_vec();
    let mut best = boundary_extent(t, &w);
    let mut h = step;
    while h > 1e-13 {
        let mut moved = false;
        for i in 0..d {
            for j in 0..d {
                if i == j || w[j] <= 0.0 {
                    continue;
                }
                let s = h.min(w[j]);
                let mut v = w.clone();
                v[i] += s;
                v[j] -= s;
                let f = boundary_extent(t, &v);
                if f > best {
                    best = f;
                    w = v;
                    moved = true;
                }
            }
        }
        if !moved {
            h *= 0.5;
        }
    }
    (best, w)
}

pub fn empirical_gauge(t: &ThresholdModel) -> EmpiricalGauge {
    let steps = default_steps(t.dim);
    let mut scored: Vec<(f64, Vec<f64>)> =
        simplex_grid(t.dim, steps).into_iter().map(|w| (boundary_extent(t, &w), w)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (c_hat, argmax) = scored
        .iter()
        .take(8)
        .map(|(_, w)| refine_on_simplex(t, w, 1.0 / steps as f64))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("simplex grid is non-empty");
    EmpiricalGauge { c_hat, argmax, threshold: t.clone() }
}

impl EmpiricalGauge {
    pub fn eval(&self, w: &[f64]) -> f64 {
        self.c_hat / self.threshold.eval(w)
    }

    /// Limit-set boundary point in direction `w`.
    pub fn boundary(&self, w: &[f64]) -> Vec<f64> {
        let s = self.threshold.eval(w) / self.c_hat;
        w.iter().map(|v| v * s).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1};

    fn iid_exp(n: usize, d: usize, seed: u64) -> ExpData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n * d).map(|_| Exp1.sample(&mut rng)).collect();
        ExpData::new(Matrix::new(n, d, v).unwrap(), Provenance::Synthetic("iid".into())).unwrap()
    }

    #[test]
    fn decomposition() {
        let x = ExpData::new(
            Matrix::from_rows(&[vec![2.0, 2.0], vec![3.0, 1.0]]).unwrap(),
            Provenance::Synthetic("t".into()),
        )
        .unwrap();
        let ra = decompose(&x);
        assert_eq!(ra.r, vec![4.0, 4.0]);
        assert_eq!(ra.w.row(0), &[0.5, 0.5]);
        assert_eq!(ra.w.row(1), &[0.75, 0.25]);
        let edge = decompose_rows(&Matrix::from_rows(&[vec![3.0, 1.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(edge.r, vec![4.0]);
        assert_eq!(edge.w.row(0), &[0.75, 0.25, 0.0]);
        assert!(decompose_rows(&Matrix::from_rows(&[vec![0.0, 0.0]]).unwrap()).is_err());
        let x = iid_exp(1000, 3, 1);
        let ra = decompose(&x);
        for i in 0..1000 {
            let s: f64 = ra.w.row(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            for j in 0..3 {
                assert!((ra.r[i] * ra.w.get(i, j) - x.values().get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolation_rules() {
        let x = iid_exp(4000, 2, 2);
        let t = fit_threshold(&decompose(&x), 0.9, &WindowSpec::default()).unwrap();
        assert_eq!(t.nodes.len(), 50);
        let (a, b) = (&t.nodes[10], &t.nodes[11]);
        assert_relative_eq!(t.eval(&[a.center[0], 1.0 - a.center[0]]), a.value, epsilon = 1e-12);
        let mid = 0.5 * (a.center[0] + b.center[0]);
        assert_relative_eq!(t.eval(&[mid, 1.0 - mid]), 0.5 * (a.value + b.value), epsilon = 1e-12);
    }

    #[test]
    fn trivariate_nearest_fallback() {
        let x = iid_exp(20_000, 3, 3);
        let t = fit_threshold(&decompose(&x), 0.9, &WindowSpec::default()).unwrap();
        // w1 below the first center: nearest node is (0.1, 0.3)
        let n = t.nodes.iter().find(|n| (n.center[0] - 0.1).abs() < 1e-9 && (n.center[1] - 0.3).abs() < 1e-9);
        let n = n.unwrap();
        assert_eq!(t.eval(&[0.02, 0.3, 0.68]), n.value);
        assert_eq!(t.eval(&[n.center[0], n.center[1], 1.0 - n.center[0] - n.center[1]]), n.value);
    }

    #[test]
    fn iid_surface_matches_global_quantile() {
        // W is independent of R only for the sum of iid exponentials
        let x = iid_exp(100_000, 2, 4);
        let ra = decompose(&x);
        let t = fit_threshold(&ra, 0.95, &WindowSpec::default()).unwrap();
        let global = crate::special::quantile(&ra.r, 0.95);
        for n in &t.nodes {
            assert!((n.value / global - 1.0).abs() < 0.05, "node {:?}: {} vs {global}", n.center, n.value);
        }
    }

    #[test]
    fn exceedance_rate_near_one_minus_tau() {
        let x = iid_exp(5000, 2, 5);
        let ra = decompose(&x);
        let t = fit_threshold(&ra, 0.95, &WindowSpec::default()).unwrap();
        let exc = exceedances(&ra, &t);
        assert!((exc.exceedance_rate() - 0.05).abs() < 0.01, "rate {}", exc.exceedance_rate());
        assert!(exc.rprime.iter().all(|&v| v > 1.0));
    }

    #[test]
    fn constant_surface_median_split_and_empty_set() {
        let x = iid_exp(4000, 2, 6);
        let ra = decompose(&x);
        let med = crate::special::quantile(&ra.r, 0.5);
        let exc = exceedances(&ra, &ThresholdModel::constant(2, 0.5, med));
        assert!((exc.n0() as f64 - 2000.0).abs() <= 1.0);
        let top = ra.r.iter().copied().fold(0.0, f64::max);
        assert_eq!(exceedances(&ra, &ThresholdModel::constant(2, 0.5, top + 1.0)).n0(), 0);
    }

    #[test]
    fn monotone_in_tau() {
        let x = iid_exp(5000, 3, 7);
        let ra = decompose(&x);
        let lo = fit_threshold(&ra, 0.9, &WindowSpec::default()).unwrap();
        let hi = fit_threshold(&ra, 0.95, &WindowSpec::default()).unwrap();
        for (a, b) in lo.nodes.iter().zip(&hi.nodes) {
            assert_eq!(a.center, b.center);
            if a.half_width == b.half_width {
                assert!(a.value <= b.value);
            }
        }
    }

    #[test]
    fn thin_window_is_an_error() {
        let x = iid_exp(30, 2, 8);
        let spec = WindowSpec { min_points: 25, max_growths: 0, ..WindowSpec::default() };
        assert!(matches!(fit_threshold(&decompose(&x), 0.9, &spec), Err(Error::ThinWindow { .. })));
    }

    #[test]
    fn empirical_gauge_normalization() {
        let x = iid_exp(20_000, 2, 9);
        let ra = decompose(&x);
        let t = fit_threshold(&ra, 0.95, &WindowSpec::default()).unwrap();
        let eg = empirical_gauge(&t);
        let grid = simplex_grid(2, 2000);
        let top = grid.iter().flat_map(|w| eg.boundary(w)).fold(0.0, f64::max);
        assert_relative_eq!(top, 1.0, epsilon = 1e-9);
        // doubling every radius leaves the estimate unchanged
        let ra2 = RadialAngular { r: ra.r.iter().map(|r| 2.0 * r).collect(), w: ra.w.clone() };
        let eg2 = empirical_gauge(&fit_threshold(&ra2, 0.95, &WindowSpec::default()).unwrap());
        for w in [[0.2, 0.8], [0.5, 0.5]] {
            assert_relative_eq!(eg.eval(&w), eg2.eval(&w), max_relative = 1e-12);
        }
    }

    #[test]
    fn serde_round_trip_keeps_lookup() {
        let x = iid_exp(3000, 3, 10);
        let t = fit_threshold(&decompose(&x), 0.9, &WindowSpec::default()).unwrap();
        let back: ThresholdModel = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(t, back);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let a: f64 = rng.random();
            let b: f64 = rng.random::<f64>() * (1.0 - a);
            let w = [a, b, 1.0 - a - b];
            assert_eq!(t.eval(&w), back.eval(&w));
        }
    }

    #[test]
    fn grid_points_lie_on_simplex() {
        let g = simplex_grid(3, 10);
        assert_eq!(g.len(), 66);
        assert!(g.iter().all(|p| (p.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }
}
