use proptest::prelude::*;

use geomext::diagnostics::{pp_points, qq_exponential, to_exponential_scale};
use geomext::fit::{fit_mle, trunc_gamma_cdf, trunc_gamma_quantile, FitConfig};
use geomext::gauges::{additive_mix, correlation_matrix, gaussian_shape, marginal_min, Family, Gauge, StructureSpec};
use geomext::predict::{estimate_set_probability, max_valid_k, simulate_conditional, Rectangle, RegionSpec};
use geomext::radial::{decompose, empirical_gauge, eval_r0, exceedances, fit_threshold, simplex_grid, WindowSpec};
use geomext::simulators::{gamma_radial_sample, sample, truncgamma_exceedances, CopulaSpec};

fn gauge_strategy() -> impl Strategy<Value = Gauge> {
    prop_oneof![
        (2usize..5, 0.05f64..1.0).prop_map(|(d, g)| Gauge::logistic(d, g).unwrap()),
        (2usize..5, 0.05f64..1.0).prop_map(|(d, g)| Gauge::inverted_logistic(d, g).unwrap()),
        (2usize..5, 1.05f64..6.0).prop_map(|(d, g)| Gauge::new(Family::NegLogisticMgpd, d, vec![g]).unwrap()),
        prop::collection::vec(0.2f64..5.0, 2..5).prop_map(|t| Gauge::new(Family::DirichletMgpd, t.len(), t).unwrap()),
        (0.0f64..0.95).prop_map(|r| Gauge::gaussian(2, vec![r]).unwrap()),
        (0.0f64..0.45).prop_map(|r| Gauge::gaussian(3, vec![r; 3]).unwrap()),
        (2usize..5, 0.3f64..10.0).prop_map(|(d, n)| Gauge::new(Family::StudentT, d, vec![n]).unwrap()),
        (2usize..5).prop_map(|d| Gauge::clayton(d).unwrap()),
        (2usize..5, 0.1f64..6.0).prop_map(|(d, g)| Gauge::new(Family::InvertedClayton, d, vec![g]).unwrap()),
        prop::collection::vec(0.05f64..1.0, 3)
            .prop_map(|g| Gauge::asym_logistic(3, StructureSpec::pairwise(3), g).unwrap()),
        (0.2f64..4.0, 0.2f64..4.0).prop_map(|(b, g)| Gauge::vine3(b, g).unwrap()),
        (0.05f64..1.0).prop_map(|t| Gauge::square(t).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gauges_are_homogeneous(g in gauge_strategy(), raw in prop::collection::vec(0.01f64..5.0, 4), ti in 0usize..3) {
        let x = &raw[..g.dim()];
        let t = [0.1, 1.0, 10.0][ti];
        let tx: Vec<f64> = x.iter().map(|v| v * t).collect();
        let (a, b) = (g.value(&tx), t * g.value(x));
        prop_assert!((a - b).abs() <= 1e-10 * b.abs(), "{a} vs {b}");
        prop_assert!(g.value(x) > 0.0);
    }

    #[test]
    fn single_group_asym_logistic_is_logistic(gamma in 0.05f64..1.0, d in 2usize..5, raw in prop::collection::vec(0.0f64..3.0, 4)) {
        let s = StructureSpec::new(vec![(0..d).collect()]);
        let a = Gauge::asym_logistic(d, s, vec![gamma]).unwrap();
        let l = Gauge::logistic(d, gamma).unwrap();
        let x = &raw[..d];
        prop_assert!((a.value(x) - l.value(x)).abs() <= 1e-12 * (1.0 + l.value(x)));
    }

    #[test]
    fn truncated_gamma_round_trip(p in 0.001f64..0.999, shape in 0.2f64..15.0, rate in 0.2f64..4.0, r0 in 0.1f64..20.0) {
        let q = trunc_gamma_quantile(p, shape, rate, r0).unwrap();
        prop_assert!(q >= r0);
        prop_assert!((trunc_gamma_cdf(q, shape, rate, r0).unwrap() - p).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn additive_mix_meets_the_marginal_constraint(r in 0.0f64..0.9, g in 0.1f64..1.0, a in 0.2f64..5.0) {
        let mix = additive_mix(vec![Gauge::gaussian(2, vec![r]).unwrap(), Gauge::logistic(2, g).unwrap()], &[a]).unwrap();
        for j in 0..2 {
            prop_assert!((marginal_min(&mix, j).unwrap().value - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn exceedance_proportion_near_one_minus_tau(kind in 0usize..5, seed in 0u64..1000) {
        let spec = [
            CopulaSpec::Logistic { dim: 2, gamma: 0.4 },
            CopulaSpec::InvertedLogistic { dim: 2, gamma: 0.7 },
            CopulaSpec::Gaussian { dim: 2, corr: vec![0.8] },
            CopulaSpec::Clayton { dim: 2, gamma: 2.0 },
            CopulaSpec::StudentT { dim: 2, corr: vec![0.5], nu: 3.0 },
        ][kind].clone();
        let x = sample(&spec, 5000, seed).unwrap();
        let ra = decompose(&x);
        let t = fit_threshold(&ra, 0.95, &WindowSpec::default()).unwrap();
        let rate = exceedances(&ra, &t).exceedance_rate();
        prop_assert!((rate - 0.05).abs() < 0.01, "{}: rate {rate}", spec.name());
    }

    #[test]
    fn threshold_nodes_increase_with_tau(seed in 0u64..1000, lo in 0.8f64..0.9, gap in 0.01f64..0.08) {
        let x = sample(&CopulaSpec::Gaussian { dim: 2, corr: vec![0.5] }, 5000, seed).unwrap();
        let ra = decompose(&x);
        let a = fit_threshold(&ra, lo, &WindowSpec::default()).unwrap();
        let b = fit_threshold(&ra, lo + gap, &WindowSpec::default()).unwrap();
        for (p, q) in a.nodes.iter().zip(&b.nodes) {
            prop_assert!(p.value <= q.value);
        }
    }

    #[test]
    fn empirical_boundary_lies_in_the_unit_box(seed in 0u64..1000) {
        let x = sample(&CopulaSpec::Logistic { dim: 3, gamma: 0.5 }, 6000, seed).unwrap();
        let t = fit_threshold(&decompose(&x), 0.95, &WindowSpec::default()).unwrap();
        let e = empirical_gauge(&t);
        for w in simplex_grid(3, 37) {
            let b = e.boundary(&w);
            prop_assert!(b.iter().all(|&v| (0.0..=1.0 + 1e-9).contains(&v)));
        }
        let top = e.boundary(&e.argmax).into_iter().fold(0.0, f64::max);
        prop_assert!((top - 1.0).abs() < 1e-9);
    }

    #[test]
    fn prediction_invariants(seed in 0u64..1000) {
        let x = sample(&CopulaSpec::Logistic { dim: 2, gamma: 0.4 }, 4000, seed).unwrap();
        let ra = decompose(&x);
        let t = fit_threshold(&ra, 0.95, &WindowSpec::default()).unwrap();
        let exc = exceedances(&ra, &t);
        let fit = fit_mle(&exc, &Gauge::logistic(2, 0.5).unwrap(), &FitConfig { hessian: false, ..FitConfig::default() }).unwrap();
        let k = 1.7;
        let s = simulate_conditional(&fit, &exc, 500, k, seed).unwrap();
        for row in s.points.rows() {
            let r: f64 = row.iter().sum();
            let w: Vec<f64> = row.iter().map(|v| v / r).collect();
            prop_assert!(r > k * eval_r0(&t, &w) * (1.0 - 1e-12));
        }
        let rect = Rectangle::new(vec![7.0, 7.0], vec![f64::INFINITY; 2]).unwrap();
        let sel = max_valid_k(&rect, &t).unwrap();
        let region = RegionSpec::Rectangle(rect);
        let e = estimate_set_probability(&fit, &exc, &t, &region, sel.k, 2000, seed).unwrap();
        let c = e.components;
        prop_assert_eq!(e.value, c.conditional * c.ratio * c.base);
        let again = estimate_set_probability(&fit, &exc, &t, &region, sel.k, 2000, seed).unwrap();
        prop_assert_eq!(e, again);
    }

    #[test]
    fn qq_is_the_exponential_transform_of_pp(seed in 0u64..1000) {
        let g = Gauge::logistic(2, 0.4).unwrap();
        let exc = truncgamma_exceedances(&g, 2.0, 3.0, 300, seed).unwrap();
        let fit = fit_mle(&exc, &g, &FitConfig { hessian: false, ..FitConfig::default() }).unwrap();
        let pp = pp_points(&fit, &exc).unwrap();
        let qq = qq_exponential(&fit, &exc).unwrap();
        prop_assert!(pp.points.windows(2).all(|p| p[0].1 <= p[1].1));
        for (p, q) in pp.points.iter().zip(&qq) {
            prop_assert!((0.0..=1.0).contains(&p.1));
            prop_assert_eq!(to_exponential_scale(p.1), q.1);
            prop_assert_eq!(to_exponential_scale(p.0), q.0);
        }
    }
}

#[test]
fn gaussian_shape_is_d_for_identity_and_continuous() {
    for d in 2..5 {
        let s = correlation_matrix(d, &vec![0.0; d * (d - 1) / 2]);
        let w = vec![1.0 / d as f64; d];
        assert!((gaussian_shape(&s, &w).unwrap() - d as f64).abs() < 1e-12);
    }
    let s = correlation_matrix(2, &[0.6]);
    let mut prev = gaussian_shape(&s, &[0.05, 0.95]).unwrap();
    for i in 51..=950 {
        let w1 = i as f64 / 1000.0;
        let v = gaussian_shape(&s, &[w1, 1.0 - w1]).unwrap();
        assert!((v - prev).abs() < 0.05 * prev.abs(), "jump at {w1}");
        prev = v;
    }
}

#[test]
fn empirical_gauge_recovers_a_linear_gauge() {
    let g = Gauge::clayton(2).unwrap();
    let x = gamma_radial_sample(&g, 2.0, 100_000, 4).unwrap();
    let t = fit_threshold(&decompose(&x), 0.95, &WindowSpec::default()).unwrap();
    let e = empirical_gauge(&t);
    let mut gaps = Vec::new();
    for node in &t.nodes {
        let w1 = node.center[0];
        if !(0.05..=0.95).contains(&w1) {
            continue;
        }
        let w = [w1, 1.0 - w1];
        let ratio = e.eval(&w) / g.value(&w);
        assert!((0.9..=1.1).contains(&ratio), "ratio {ratio} at {w1}");
        gaps.push((ratio - 1.0).abs());
    }
    assert!(gaps.len() > 30);
    assert!(gaps.iter().sum::<f64>() / (gaps.len() as f64) < 0.15);
}

#[test]
fn exceedance_proportion_converges_under_refinement() {
    let fine =
        |hw: f64, side: f64, nc: usize| WindowSpec { half_width: hw, side, n_centers: nc, ..WindowSpec::default() };
    let ladder = [(5000, fine(0.05, 0.2, 50)), (50_000, fine(0.02, 0.08, 100)), (200_000, fine(0.01, 0.04, 200))];
    let specs = [
        CopulaSpec::Logistic { dim: 2, gamma: 0.4 },
        CopulaSpec::Gaussian { dim: 2, corr: vec![0.8] },
        CopulaSpec::Logistic { dim: 3, gamma: 0.4 },
        CopulaSpec::AsymLogistic { dim: 3, groups: vec![vec![0, 1], vec![0, 2], vec![1, 2]], gammas: vec![0.4; 3] },
    ];
    for spec in &specs {
        let errors: Vec<f64> = ladder
            .iter()
            .map(|(n, win)| {
                let ra = decompose(&sample(spec, *n, 3).unwrap());
                let t = fit_threshold(&ra, 0.95, win).unwrap();
                (exceedances(&ra, &t).exceedance_rate() - 0.05).abs()
            })
            .collect();
        let sd = (0.05f64 * 0.95 / 200_000.0).sqrt();
        if spec.dim() == 2 {
            assert!(errors[2] <= 3.0 * sd, "{}: {errors:?}", spec.name());
        } else {
            assert!(errors[0] > errors[1] && errors[1] > errors[2], "{}: {errors:?}", spec.name());
        }
    }
}
