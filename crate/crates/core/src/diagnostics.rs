//! Model checks: PP and exponential QQ coordinates, empirical against
//! fitted gauge, and shape estimates with the rate held fixed.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::format_f64;
use crate::error::{Error, Result};
use crate::fit::{nll_rates, trunc_gamma_cdf, FittedModel};
use crate::gauges::Gauge;
use crate::optim::brent_minimize;
use crate::radial::{empirical_gauge, in_window, simplex_grid, ExceedanceSet, ThresholdModel, WindowSpec};

pub const LOCAL_MIN_POINTS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PPData {
    /// `(i / (n0 + 1), sorted model probability)`.
    pub points: Vec<(f64, f64)>,
    pub ks_stat: f64,
}

/// Asymptotic 5% Kolmogorov-Smirnov critical value.
pub fn ks_critical_5pct(n: usize) -> f64 {
    1.36 / (n as f64).sqrt()
}

/// Fitted truncated-gamma probabilities of the exceedance radii.
pub fn model_probabilities(fit: &FittedModel, exc: &ExceedanceSet) -> Result<Vec<f64>> {
    exc.r
        .iter()
        .zip(&exc.w)
        .zip(&exc.r0)
        .map(|((&r, w), &r0)| trunc_gamma_cdf(r.max(r0), fit.alpha, fit.gauge.value(w), r0))
        .collect()
}

pub fn pp_points(fit: &FittedModel, exc: &ExceedanceSet) -> Result<PPData> {
    let n0 = exc.n0();
    if n0 < 10 {
        return Err(Error::Validation(format!("PP diagnostics need at least 10 exceedances, got {n0}")));
    }
    let mut p = model_probabilities(fit, exc)?;
    p.sort_by(|a, b| a.total_cmp(b));
    let n = n0 as f64;
    let ks_stat = p
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max);
    let points = p.into_iter().enumerate().map(|(i, v)| ((i + 1) as f64 / (n + 1.0), v)).collect();
    Ok(PPData { points, ks_stat })
}

/// `-ln(1 - p)` with `p = 1` mapped to the largest double below 1.
pub fn to_exponential_scale(p: f64) -> f64 {
    let p = if p >= 1.0 { 1.0 - f64::EPSILON / 2.0 } else { p };
    -(-p).ln_1p()
}

pub fn qq_exponential(fit: &FittedModel, exc: &ExceedanceSet) -> Result<Vec<(f64, f64)>> {
    Ok(pp_points(fit, exc)?
        .points
        .into_iter()
        .map(|(a, b)| (to_exponential_scale(a), to_exponential_scale(b)))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayRow {
    pub w: Vec<f64>,
    pub empirical: f64,
    pub fitted: f64,
    /// `w / g_hat(w)`.
    pub empirical_boundary: Vec<f64>,
    /// `w / g(w)`.
    pub fitted_boundary: Vec<f64>,
}

/// Empirical and parametric gauge on a simplex grid with spacing `1 / steps`.
pub fn gauge_overlay(t: &ThresholdModel, g: &Gauge, steps: usize) -> Result<Vec<OverlayRow>> {
    if g.dim() != t.dim {
        return Err(Error::Dimension { expected: t.dim, got: g.dim() });
    }
    let eg = empirical_gauge(t);
    Ok(simplex_grid(t.dim, steps.max(1))
        .into_iter()
        .map(|w| {
            let empirical = eg.eval(&w);
            let fitted = g.value(&w);
            OverlayRow {
                empirical_boundary: w.iter().map(|v| v / empirical).collect(),
                fitted_boundary: w.iter().map(|v| v / fitted).collect(),
                w,
                empirical,
                fitted,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEstimate {
    pub alpha: f64,
    pub se: Option<f64>,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

/// One-parameter MLE of the shape with the rate fixed at `g(w)` for every
/// exceedance, with a Wald 95% interval.
pub fn fit_shape_fixed_rate(exc: &ExceedanceSet, g: &Gauge) -> Result<ShapeEstimate> {
    let n = exc.n0();
    if n == 0 {
        return Err(Error::FitFailure("no exceedances for the shape fit".into()));
    }
    let rates: Vec<f64> = exc.w.iter().map(|w| g.value(w)).collect();
    let f = |la: f64| nll_rates(la.exp(), &rates, exc);
    let (la, fx) = brent_minimize(f, (1e-3f64).ln(), (1e3f64).ln(), 1e-12, 500);
    if !fx.is_finite() {
        return Err(Error::FitFailure("shape likelihood is not finite".into()));
    }
    let alpha = la.exp();
    let h = 1e-4 * alpha.max(1.0);
    let curv = (nll_rates(alpha + h, &rates, exc) - 2.0 * fx + nll_rates(alpha - h, &rates, exc)) / (h * h);
    let se = (curv > 0.0 && curv.is_finite()).then(|| 1.0 / curv.sqrt());
    let (lo, hi) = se.map_or((f64::NAN, f64::NAN), |s| (alpha - 1.96 * s, alpha + 1.96 * s));
    Ok(ShapeEstimate { alpha, se, lo, hi, n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalShape {
    pub center: Vec<f64>,
    pub estimate: ShapeEstimate,
}

/// Shape estimates in each window of `windows`; windows with fewer than 30
/// exceedances are skipped.
pub fn local_shape_fit(exc: &ExceedanceSet, windows: &WindowSpec, g: &Gauge) -> Result<Vec<LocalShape>> {
    let d = exc.dim();
    if g.dim() != d {
        return Err(Error::Dimension { expected: d, got: g.dim() });
    }
    let half = windows.base_half(d);
    let fits: Vec<Option<LocalShape>> = windows
        .centers(d)
        .into_par_iter()
        .map(|center| {
            let idx: Vec<usize> = (0..exc.n0()).filter(|&i| in_window(&exc.w[i], &center, half)).collect();
            if idx.len() < LOCAL_MIN_POINTS {
                log::info!("skipping local shape window at {center:?}: {} exceedances", idx.len());
                return None;
            }
            let estimate = fit_shape_fixed_rate(&exc.select(&idx), g).ok()?;
            Some(LocalShape { center, estimate })
        })
        .collect();
    Ok(fits.into_iter().flatten().collect())
}

pub fn write_pairs_csv<W: Write>(writer: W, header: [&str; 2], pairs: &[(f64, f64)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(header)?;
    for (a, b) in pairs {
        out.write_record([format_f64(*a), format_f64(*b)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_overlay_csv<W: Write>(writer: W, rows: &[OverlayRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let d = rows.first().map_or(0, |r| r.w.len());
    let mut header: Vec<String> = (1..=d).map(|j| format!("w{j}")).collect();
    header.extend(["g_empirical".into(), "g_fitted".into()]);
    header.extend((1..=d).map(|j| format!("empirical_x{j}")));
    header.extend((1..=d).map(|j| format!("fitted_x{j}")));
    out.write_record(&header)?;
    for r in rows {
        let mut rec: Vec<String> = r.w.iter().map(|v| format_f64(*v)).collect();
        rec.push(format_f64(r.empirical));
        rec.push(format_f64(r.fitted));
        rec.extend(r.empirical_boundary.iter().map(|v| format_f64(*v)));
        rec.extend(r.fitted_boundary.iter().map(|v| format_f64(*v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_local_shape_csv<W: Write>(writer: W, rows: &[LocalShape]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    let d1 = rows.first().map_or(0, |r| r.center.len());
    let mut header: Vec<String> = (1..=d1).map(|j| format!("w{j}")).collect();
    header.extend(["n", "alpha", "se", "lo", "hi"].map(String::from));
    out.write_record(&header)?;
    for r in rows {
        let e = &r.estimate;
        let mut rec: Vec<String> = r.center.iter().map(|v| format_f64(*v)).collect();
        rec.push(e.n.to_string());
        rec.extend([e.alpha, e.se.unwrap_or(f64::NAN), e.lo, e.hi].map(format_f64));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::{fit_mle, FitConfig};
    use crate::radial::{decompose, fit_threshold};
    use crate::simulators::{gamma_radial_sample, truncgamma_exceedances};

    fn clayton_fit(seed: u64) -> (ExceedanceSet, FittedModel) {
        let g = Gauge::clayton(2).unwrap();
        let exc = truncgamma_exceedances(&g, 2.0, 5.0, 500, seed).unwrap();
        let fit = fit_mle(&exc, &g, &FitConfig::default()).unwrap();
        (exc, fit)
    }

    #[test]
    fn pp_and_qq_are_sorted_and_linked() {
        let (exc, fit) = clayton_fit(1);
        let pp = pp_points(&fit, &exc).unwrap();
        assert!(pp.points.windows(2).all(|p| p[0].0 < p[1].0 && p[0].1 <= p[1].1));
        assert!(pp.points.iter().all(|&(a, b)| (0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b)));
        let qq = qq_exponential(&fit, &exc).unwrap();
        for (p, q) in pp.points.iter().zip(&qq) {
            assert_eq!(to_exponential_scale(p.0), q.0);
            assert_eq!(to_exponential_scale(p.1), q.1);
        }
        let n0 = exc.n0() as f64;
        assert!(qq.last().unwrap().0 > (n0 + 1.0).ln() - 1.0);
        assert!(pp.ks_stat < 2.0 * ks_critical_5pct(exc.n0()));
    }

    #[test]
    fn degenerate_radii_give_zero_probabilities() {
        let (mut exc, fit) = clayton_fit(2);
        exc.r = exc.r0.clone();
        let pp = pp_points(&fit, &exc).unwrap();
        assert!(pp.points.iter().all(|p| p.1 == 0.0));
        assert!((pp.ks_stat - 1.0).abs() < 1e-12);
        exc.r.truncate(5);
        exc.w.truncate(5);
        exc.r0.truncate(5);
        assert!(pp_points(&fit, &exc).is_err());
    }

    #[test]
    fn overlay_columns_and_boundaries() {
        let x = gamma_radial_sample(&Gauge::clayton(2).unwrap(), 2.0, 100_000, 3).unwrap();
        let t = fit_threshold(&decompose(&x), 0.95, &WindowSpec::default()).unwrap();
        let g = Gauge::logistic(2, 0.6).unwrap();
        let rows = gauge_overlay(&t, &g, 100).unwrap();
        for r in &rows {
            assert_eq!(r.fitted, g.value(&r.w));
            assert!(r.fitted_boundary.iter().all(|v| (0.0..=1.0 + 1e-9).contains(v)));
            assert!(r.empirical_boundary.iter().all(|v| (0.0..=1.0 + 1e-9).contains(v)));
        }
    }

    #[test]
    fn single_window_equals_global_fit() {
        let g = Gauge::logistic(2, 0.5).unwrap();
        let exc = truncgamma_exceedances(&g, 1.7, 3.0, 2000, 4).unwrap();
        let global = fit_shape_fixed_rate(&exc, &g).unwrap();
        let wide = WindowSpec { n_centers: 2, half_width: 2.0, ..WindowSpec::default() };
        let local = local_shape_fit(&exc, &wide, &g).unwrap();
        assert_eq!(local.len(), 2);
        for l in local {
            assert!((l.estimate.alpha - global.alpha).abs() < 1e-6);
        }
        assert!(global.lo < 1.7 && 1.7 < global.hi);
    }

    #[test]
    fn thin_windows_are_skipped() {
        let g = Gauge::clayton(2).unwrap();
        let exc = truncgamma_exceedances(&g, 2.0, 3.0, 100, 5).unwrap();
        let local = local_shape_fit(&exc, &WindowSpec::default(), &g).unwrap();
        assert!(local.is_empty());
    }
}
