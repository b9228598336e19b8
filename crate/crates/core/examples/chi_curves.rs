//! Model-based and empirical tail dependence `chi(u)` for a pair and a triple
//! of variables.

use geomext::fit::{fit_mle, FitConfig};
use geomext::gauges::Gauge;
use geomext::predict::{chi_empirical, chi_model};
use geomext::radial::{decompose, exceedances, fit_threshold, WindowSpec};
use geomext::simulators::{sample, CopulaSpec};

fn main() -> geomext::error::Result<()> {
    let x = sample(&CopulaSpec::Gaussian { dim: 3, corr: vec![0.6, 0.4, 0.5] }, 20_000, 4)?;
    let ra = decompose(&x);
    let t = fit_threshold(&ra, 0.95, &WindowSpec::default())?;
    let exc = exceedances(&ra, &t);
    let fit = fit_mle(&exc, &Gauge::gaussian(3, vec![0.0; 3])?, &FitConfig::default())?;

    let u = [0.9, 0.95, 0.99, 0.999];
    for subset in [vec![0, 1], vec![0, 1, 2]] {
        println!("subset {subset:?}");
        let model = chi_model(&fit, &exc, &t, &subset, &u, 20_000, 8)?;
        let emp = chi_empirical(&x, &subset, &u)?;
        for p in &model {
            println!("  model     u = {:.3}  chi = {:.4} [{:.4}, {:.4}]", p.u, p.chi, p.lo, p.hi);
        }
        for p in &emp {
            println!("  empirical u = {:.3}  chi = {:.4} [{:.4}, {:.4}]", p.u, p.chi, p.lo, p.hi);
        }
    }
    Ok(())
}
