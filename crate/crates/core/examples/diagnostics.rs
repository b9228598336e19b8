//! PP/QQ goodness of fit, the gauge overlay and local shape estimates for a
//! fitted model.

use geomext::diagnostics::{gauge_overlay, ks_critical_5pct, local_shape_fit, pp_points, qq_exponential};
use geomext::fit::{fit_mle, FitConfig};
use geomext::gauges::Gauge;
use geomext::radial::{decompose, exceedances, fit_threshold, WindowSpec};
use geomext::simulators::{sample, CopulaSpec};

fn main() -> geomext::error::Result<()> {
    let x = sample(&CopulaSpec::InvertedLogistic { dim: 2, gamma: 0.5 }, 10_000, 9)?;
    let window = WindowSpec::default();
    let ra = decompose(&x);
    let t = fit_threshold(&ra, 0.95, &window)?;
    let exc = exceedances(&ra, &t);
    let fit = fit_mle(&exc, &Gauge::inverted_logistic(2, 0.5)?, &FitConfig::default())?;

    let pp = pp_points(&fit, &exc)?;
    println!("KS = {:.4} (5% critical {:.4})", pp.ks_stat, ks_critical_5pct(exc.n0()));
    let qq = qq_exponential(&fit, &exc)?;
    println!("largest QQ pair: {:?}", qq.last());

    for row in gauge_overlay(&t, &fit.gauge, 10)? {
        println!("w = {:?}  empirical = {:.3}  fitted = {:.3}", row.w, row.empirical, row.fitted);
    }
    for s in local_shape_fit(&exc, &window, &fit.gauge)?.iter().step_by(10) {
        println!("center {:?}: alpha = {:.3} [{:.3}, {:.3}]", s.center, s.estimate.alpha, s.estimate.lo, s.estimate.hi);
    }
    Ok(())
}
