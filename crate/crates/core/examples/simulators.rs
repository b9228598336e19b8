//! Draws from the study copulas on exponential margins and the gamma-radial
//! construction with a known gauge.

use geomext::gauges::Gauge;
use geomext::simulators::{gamma_radial_sample, sample, true_gauge, CopulaSpec};

fn main() -> geomext::error::Result<()> {
    let specs = [
        CopulaSpec::Logistic { dim: 2, gamma: 0.5 },
        CopulaSpec::InvertedClayton { dim: 2, gamma: 1.0 },
        CopulaSpec::StudentT { dim: 2, corr: vec![0.5], nu: 4.0 },
        CopulaSpec::AsymLogistic {
            dim: 3,
            groups: vec![vec![0, 1], vec![1, 2], vec![0, 2]],
            gammas: vec![0.4, 0.4, 0.4],
        },
        CopulaSpec::CompositeIii { clayton: 1.0, logistic: 0.5 },
    ];
    for spec in &specs {
        let x = sample(spec, 50_000, 1)?;
        let means: Vec<f64> =
            (0..x.dim()).map(|j| x.values().column(j).iter().sum::<f64>() / x.nrows() as f64).collect();
        let g = true_gauge(spec).ok().map(|g| g.family().name());
        println!("{:>18}  column means {:.3?}  gauge {:?}", spec.name(), means, g);
    }

    let g = Gauge::clayton(2)?;
    let y = gamma_radial_sample(&g, 2.0, 5, 3)?;
    for r in y.values().rows() {
        println!("{r:.3?}");
    }
    Ok(())
}
