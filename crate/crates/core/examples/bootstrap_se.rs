//! Circular block bootstrap standard errors for the full threshold-and-fit
//! pipeline, next to the Hessian-based ones.

use geomext::fit::{block_bootstrap_se, fit_mle, BootstrapConfig, FitConfig};
use geomext::gauges::Gauge;
use geomext::radial::{decompose, exceedances, fit_threshold, WindowSpec};
use geomext::simulators::{sample, CopulaSpec};

fn main() -> geomext::error::Result<()> {
    let x = sample(&CopulaSpec::Logistic { dim: 2, gamma: 0.6 }, 5000, 21)?;
    let window = WindowSpec::default();
    let ra = decompose(&x);
    let t = fit_threshold(&ra, 0.95, &window)?;
    let exc = exceedances(&ra, &t);
    let template = Gauge::logistic(2, 0.5)?;
    let cfg = FitConfig::default();
    let fit = fit_mle(&exc, &template, &cfg)?;
    println!("estimates   {:?}", fit.estimates());
    println!("hessian se  {:?}", fit.se);

    let boot = BootstrapConfig { block_len: 50, replicates: 50, seed: 5 };
    let b = block_bootstrap_se(&x, &template, 0.95, &window, &cfg, &boot)?;
    println!("bootstrap se {:?} ({} replicates, {} failed)", b.se, b.replicates, b.failures);
    Ok(())
}
