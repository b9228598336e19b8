//! Gamma-function numerics used by the likelihood, the diagnostics and the
//! conditional simulator.
//!
//! The regularized incomplete gamma functions are evaluated with the classic
//! regime split: power series for `x < a + 1`, modified Lentz continued
//! fraction otherwise. Upper-tail quantities are also available on the log
//! scale so that very deep truncation points do not underflow.

use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

const MAX_ITER: usize = 100_000;
const EPS: f64 = 1e-16;
const TINY: f64 = 1e-300;

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `-x + a ln x - ln Γ(a)`, the log of the common prefactor.
fn ln_prefactor(a: f64, x: f64) -> f64 {
    -x + a * x.ln() - ln_gamma(a)
}

/// Series for the lower regularized function, valid (and fast) for `x < a + 1`.
fn lower_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * ln_prefactor(a, x).exp()
}

/// Log of the continued fraction for the upper regularized function, `x >= a + 1`.
fn ln_upper_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    ln_prefactor(a, x) + h.ln()
}

/// Lower regularized incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        1.0
    } else if x < a + 1.0 {
        lower_series(a, x)
    } else {
        1.0 - ln_upper_cf(a, x).exp()
    }
}

/// Upper regularized incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        1.0
    } else if x.is_infinite() {
        0.0
    } else if x < a + 1.0 {
        1.0 - lower_series(a, x)
    } else {
        ln_upper_cf(a, x).exp()
    }
}

/// `ln Q(a, x)`, accurate far into the upper tail.
pub fn ln_gamma_q(a: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        0.0
    } else if x.is_infinite() {
        f64::NEG_INFINITY
    } else if x < a + 1.0 {
        (-lower_series(a, x)).ln_1p()
    } else {
        ln_upper_cf(a, x)
    }
}

/// Log density of the unit-rate gamma distribution with shape `a` at `x > 0`.
pub fn ln_gamma_density(a: f64, x: f64) -> f64 {
    (a - 1.0) * x.ln() - x - ln_gamma(a)
}

/// Type-7 empirical quantile (linear interpolation between order statistics)
/// of an already sorted slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Type-7 quantile of an unsorted sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, p)
}

/// Upper tail of the standard normal, `1 - Φ(z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

/// Two-sample Kolmogorov-Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic p-value of the Kolmogorov distribution at `sqrt(n_eff) * d`.
pub fn kolmogorov_pvalue(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut fact = 1.0f64;
        for n in 1..30 {
            assert_relative_eq!(ln_gamma(n as f64), fact.ln(), epsilon = 1e-12, max_relative = 1e-13);
            fact *= n as f64;
        }
        assert_relative_eq!(ln_gamma(0.5), PI.sqrt().ln(), epsilon = 1e-14);
        assert_relative_eq!(ln_gamma(1e-3), 6.907_178_885_383_854, epsilon = 1e-12);
    }

    #[test]
    fn exponential_case() {
        for &x in &[1e-3, 0.5, 1.0, 2.0, 10.0, 40.0] {
            assert_relative_eq!(gamma_q(1.0, x), (-x).exp(), max_relative = 1e-13);
            assert_relative_eq!(ln_gamma_q(1.0, x), -x, epsilon = 1e-12);
        }
    }

    #[test]
    fn shape_two_closed_form() {
        // e^{-5}(1 + 5)
        assert_relative_eq!(gamma_q(2.0, 5.0), 0.040_427_681_994_512_8, epsilon = 1e-15);
    }

    #[test]
    fn limits() {
        assert_eq!(gamma_q(2.5, 0.0), 1.0);
        assert_eq!(gamma_q(2.5, f64::INFINITY), 0.0);
        assert!(gamma_q(2.5, 1e-12) > 1.0 - 1e-12);
        assert!(gamma_q(2.5, 800.0) < 1e-300);
    }

    #[test]
    fn p_plus_q_is_one() {
        for &a in &[0.3, 1.0, 2.7, 15.0, 120.0] {
            for &x in &[0.01, 0.5, 3.0, 14.0, 130.0] {
                assert_relative_eq!(gamma_p(a, x) + gamma_q(a, x), 1.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn ln_q_deep_tail_stays_finite() {
        let v = ln_gamma_q(2.0, 1000.0);
        // ln(e^{-1000}(1 + 1000))
        assert_relative_eq!(v, -1000.0 + 1001f64.ln(), epsilon = 1e-10);
    }

    #[test]
    fn type7_quantile() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_relative_eq!(quantile_sorted(&v, 0.9), 4.6, epsilon = 1e-12);
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert!(kolmogorov_pvalue(0.5) > 0.9);
        assert!(kolmogorov_pvalue(2.0) < 0.001);
    }
}
