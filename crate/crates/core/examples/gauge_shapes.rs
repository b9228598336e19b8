//! Evaluates each catalog gauge along the unit simplex and prints the
//! limit-set boundary `w / g(w)` for a handful of directions.

use geomext::gauges::{additive_mix, Gauge, StructureSpec};

fn main() -> geomext::error::Result<()> {
    let gauges = vec![
        ("logistic", Gauge::logistic(2, 0.5)?),
        ("inverted_logistic", Gauge::inverted_logistic(2, 0.5)?),
        ("gaussian", Gauge::gaussian(2, vec![0.6])?),
        ("clayton", Gauge::clayton(2)?),
        ("square", Gauge::square(0.3)?),
        ("mix", additive_mix(vec![Gauge::logistic(2, 0.5)?, Gauge::clayton(2)?], &[0.4])?),
    ];
    for (name, g) in &gauges {
        print!("{name:>18}");
        for w1 in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let w = [w1, 1.0 - w1];
            let gw = g.eval(&w)?;
            print!("  ({:.3},{:.3})", w[0] / gw, w[1] / gw);
        }
        println!();
    }

    let asym = Gauge::asym_logistic(3, StructureSpec::pairwise(3), vec![0.4, 0.6, 0.8])?;
    println!("asym_logistic g(1,1,1) = {:.4}", asym.eval(&[1.0, 1.0, 1.0])?);
    println!("asym_logistic g(2,2,2) = {:.4}", asym.eval(&[2.0, 2.0, 2.0])?);
    Ok(())
}
