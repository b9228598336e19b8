//! Fits several parametric gauges to the same exceedances and selects one by
//! AIC.

use geomext::fit::{fit_mle, select_model, FitConfig};
use geomext::gauges::Gauge;
use geomext::radial::{decompose, exceedances, fit_threshold, WindowSpec};
use geomext::simulators::{sample, CopulaSpec};

fn main() -> geomext::error::Result<()> {
    let x = sample(&CopulaSpec::Gaussian { dim: 2, corr: vec![0.5] }, 10_000, 3)?;
    let ra = decompose(&x);
    let t = fit_threshold(&ra, 0.95, &WindowSpec::default())?;
    let exc = exceedances(&ra, &t);

    let templates = [Gauge::logistic(2, 0.5)?, Gauge::inverted_logistic(2, 0.5)?, Gauge::gaussian(2, vec![0.0])?];
    let cfg = FitConfig::default();
    let fits: Vec<_> = templates.iter().map(|g| fit_mle(&exc, g, &cfg)).collect::<Result<_, _>>()?;
    for f in &fits {
        println!(
            "{:>18}  {:?}  nll = {:.2}  aic = {:.2}  se = {:?}",
            f.gauge.family().name(),
            f.estimates(),
            f.nll,
            f.aic,
            f.se
        );
    }
    let best = select_model(&fits).expect("at least one fit");
    println!("selected: {}", fits[best].gauge.family().name());
    Ok(())
}
