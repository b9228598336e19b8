//! Probability of a joint-exceedance rectangle beyond the data, with the
//! conditioning level chosen automatically, compared with a Monte Carlo
//! oracle from the true distribution.

use geomext::fit::{fit_mle, FitConfig};
use geomext::gauges::Gauge;
use geomext::predict::{estimate_set_probability, max_valid_k, Rectangle, RegionSpec};
use geomext::radial::{decompose, exceedances, fit_threshold, WindowSpec};
use geomext::simulators::{oracle_probability, sample, CopulaSpec};

fn main() -> geomext::error::Result<()> {
    let spec = CopulaSpec::Logistic { dim: 2, gamma: 0.4 };
    let x = sample(&spec, 5000, 13)?;
    let ra = decompose(&x);
    let t = fit_threshold(&ra, 0.95, &WindowSpec::default())?;
    let exc = exceedances(&ra, &t);
    let fit = fit_mle(&exc, &Gauge::logistic(2, 0.5)?, &FitConfig::default())?;

    let rect = Rectangle::new(vec![10.0, 10.0], vec![f64::INFINITY; 2])?;
    let sel = max_valid_k(&rect, &t)?;
    println!("k = {:.3} (min boundary ratio {:.3}, clamped {})", sel.k, sel.min_ratio, sel.clamped);
    let region = RegionSpec::Rectangle(rect);
    let est = estimate_set_probability(&fit, &exc, &t, &region, sel.k, 20_000, 1)?;
    println!("model  P = {:.3e} (mc se {:.1e}, {} hits)", est.value, est.mc_se, est.hits);
    let oracle = oracle_probability(&spec, &region, 2_000_000, 2)?;
    println!("oracle P = {:.3e} (mc se {:.1e})", oracle.estimate, oracle.mc_se);
    Ok(())
}
