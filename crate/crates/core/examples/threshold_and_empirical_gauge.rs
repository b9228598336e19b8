//! Quantile-regression threshold on the angular simplex, exceedance count and
//! the empirical gauge implied by the threshold.

use geomext::radial::{decompose, empirical_gauge, exceedances, fit_threshold, WindowSpec};
use geomext::simulators::{sample, CopulaSpec};

fn main() -> geomext::error::Result<()> {
    let x = sample(&CopulaSpec::Logistic { dim: 2, gamma: 0.5 }, 20_000, 7)?;
    let ra = decompose(&x);
    let t = fit_threshold(&ra, 0.95, &WindowSpec::default())?;
    let exc = exceedances(&ra, &t);
    println!("{} exceedances of {} ({:.4})", exc.n0(), x.nrows(), exc.exceedance_rate());

    let g = empirical_gauge(&t);
    println!("C_hat = {:.4} at w = {:?}", g.c_hat, g.argmax);
    for w1 in [0.05, 0.2, 0.5, 0.8, 0.95] {
        let w = [w1, 1.0 - w1];
        println!("w1 = {w1:.2}  r0 = {:.4}  g_hat = {:.4}", t.eval(&w), g.eval(&w));
    }
    Ok(())
}
