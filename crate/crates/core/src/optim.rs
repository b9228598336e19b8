//! Derivative-free minimization: Nelder-Mead simplex search with restarts,
//! Brent's method in one dimension, Halton start points and central
//! finite-difference Hessians.

use nalgebra::DMatrix;

#[derive(Debug, Clone)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Convergence on the spread of simplex values.
    pub ftol: f64,
    /// Convergence on the simplex diameter.
    pub xtol: f64,
    pub initial_step: f64,
    /// Number of fresh-simplex restarts from the incumbent.
    pub restarts: usize,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self { max_evals: 4000, ftol: 1e-10, xtol: 1e-8, initial_step: 0.5, restarts: 2 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn minimize<F>(&self, mut f: F, x0: &[f64]) -> OptimResult
    where
        F: FnMut(&[f64]) -> f64,
    {
        let mut evals = 0;
        let mut best = self.run(&mut f, x0, self.initial_step, &mut evals);
        for _ in 0..self.restarts {
            if evals >= self.max_evals {
                break;
            }
            let next = self.run(&mut f, &best.x, self.initial_step * 0.1, &mut evals);
            let improved = best.fx - next.fx;
            let done = improved.abs() <= self.ftol * (1.0 + best.fx.abs());
            if next.fx <= best.fx {
                best = next;
            }
            if done {
                break;
            }
        }
        best.evals = evals;
        best
    }

    fn run<F>(&self, f: &mut F, x0: &[f64], step: f64, evals: &mut usize) -> OptimResult
    where
        F: FnMut(&[f64]) -> f64,
    {
        let n = x0.len();
        let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        if n == 0 {
            let fx = eval(x0, evals);
            return OptimResult { x: vec![], fx, evals: *evals, converged: true };
        }

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        simplex.push(x0.to_vec());
        for i in 0..n {
            let mut v = x0.to_vec();
            let h = if v[i].abs() > 1e-8 { step * v[i].abs().max(0.1) } else { step * 0.5 };
            v[i] += h;
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, evals)).collect();

        let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
        let mut converged = false;
        while *evals < self.max_evals {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = (values[n] - values[0]).abs();
            let diameter = simplex
                .iter()
                .skip(1)
                .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if values[0].is_finite()
                && spread <= self.ftol * (1.0 + values[0].abs())
                && diameter <= self.xtol * (1.0 + norm_inf(&simplex[0]))
            {
                converged = true;
                break;
            }

            let mut centroid = vec![0.0; n];
            for v in simplex.iter().take(n) {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / n as f64;
                }
            }
            let along =
                |t: f64| -> Vec<f64> { centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect() };

            let xr = along(alpha);
            let fr = eval(&xr, evals);
            if fr < values[0] {
                let xe = along(gamma);
                let fe = eval(&xe, evals);
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
                continue;
            }
            let (xc, fc) = if fr < values[n] {
                let xc = along(rho);
                let fc = eval(&xc, evals);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = eval(&xc, evals);
                (xc, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
            // shrink toward the best vertex
            let best = simplex[0].clone();
            for i in 1..=n {
                for (x, b) in simplex[i].iter_mut().zip(&best) {
                    *x = b + sigma * (*x - b);
                }
                values[i] = eval(&simplex[i], evals);
            }
        }

        let (imin, _) = values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty simplex");
        OptimResult { x: simplex[imin].clone(), fx: values[imin], evals: *evals, converged }
    }
}

fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Brent's method for a unimodal function on `[a, b]`.
pub fn brent_minimize<F>(mut f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const GOLD: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLD * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if m >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= m { a - x } else { b - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

const PRIMES: [u32; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// `i`-th point (1-based internally) of the Halton sequence in `[0,1)^dim`.
pub fn halton(i: usize, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton sequence limited to {} dimensions", PRIMES.len());
    (0..dim)
        .map(|k| {
            let base = PRIMES[k] as usize;
            let mut f = 1.0;
            let mut r = 0.0;
            let mut idx = i + 1;
            while idx > 0 {
                f /= base as f64;
                r += f * (idx % base) as f64;
                idx /= base;
            }
            r
        })
        .collect()
}

/// Central finite-difference Hessian of `f` at `x` with per-coordinate steps.
pub fn fd_hessian<F>(mut f: F, x: &[f64], steps: &[f64]) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x.len();
    let f0 = f(x);
    let mut h = DMatrix::zeros(n, n);
    let mut at = |shifts: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, s) in shifts {
            y[i] += s;
        }
        f(&y)
    };
    for i in 0..n {
        let hi = steps[i];
        let fp = at(&[(i, hi)]);
        let fm = at(&[(i, -hi)]);
        h[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = steps[j];
            let fpp = at(&[(i, hi), (j, hj)]);
            let fpm = at(&[(i, hi), (j, -hj)]);
            let fmp = at(&[(i, -hi), (j, hj)]);
            let fmm = at(&[(i, -hi), (j, -hj)]);
            let v = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj);
            h[(i, j)] = v;
            h[(j, i)] = v;
        }
    }
    h
}

/// Standard errors from the inverse of a negative log-likelihood Hessian;
/// `None` when the matrix is not positive definite or has non-finite entries.
pub fn se_from_hessian(h: &DMatrix<f64>) -> Option<Vec<f64>> {
    if h.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let chol = h.clone().cholesky()?;
    let inv = chol.inverse();
    let se: Vec<f64> = (0..h.nrows()).map(|i| inv[(i, i)].sqrt()).collect();
    se.iter().all(|v| v.is_finite()).then_some(se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rosenbrock() {
        let nm = NelderMead { max_evals: 20_000, ..Default::default() };
        let r = nm.minimize(|x| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2), &[-1.2, 1.0]);
        assert!(r.converged);
        assert_relative_eq!(r.x[0], 1.0, epsilon = 1e-5);
        assert_relative_eq!(r.x[1], 1.0, epsilon = 1e-5);
    }

    #[test]
    fn infinite_walls_are_respected() {
        let nm = NelderMead::default();
        let r = nm.minimize(|x| if x[0] < 0.0 { f64::INFINITY } else { (x[0] - 2.0).powi(2) }, &[1.0]);
        assert_relative_eq!(r.x[0], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn brent_parabola() {
        let (x, fx) = brent_minimize(|x| (x - 0.3).powi(2) + 1.0, -2.0, 5.0, 1e-10, 200);
        assert_relative_eq!(x, 0.3, epsilon = 1e-8);
        assert_relative_eq!(fx, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn halton_first_points() {
        assert_eq!(halton(0, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(1, 1), vec![0.25]);
    }

    #[test]
    fn quadratic_hessian_gives_exact_se() {
        // f = 0.5 x^T A x, A = [[4, 1], [1, 2]]
        let a: DMatrix<f64> = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let f = |x: &[f64]| 0.5 * (4.0 * x[0] * x[0] + 2.0 * x[0] * x[1] + 2.0 * x[1] * x[1]);
        let h = fd_hessian(f, &[0.3, -0.2], &[1e-4, 1e-4]);
        let se = se_from_hessian(&h).unwrap();
        let inv = a.try_inverse().unwrap();
        assert_relative_eq!(se[0], inv[(0, 0)].sqrt(), epsilon = 1e-6);
        assert_relative_eq!(se[1], inv[(1, 1)].sqrt(), epsilon = 1e-6);
    }

    #[test]
    fn indefinite_hessian_is_flagged() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(se_from_hessian(&h).is_none());
    }
}
