//! Box-constrained BFGS ascent for the marginal log-likelihood.
//!
//! Small and self-contained: the objective has four parameters, the line
//! search is backtracking Armijo, and bound handling is projection with a
//! Hessian reset whenever a step is clipped. The objective may fail
//! (covariance not factorizable); failed evaluations are treated as
//! rejected steps.

use nalgebra::{DMatrix, DVector};

pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    fn project(&self, x: &mut DVector<f64>) -> bool {
        let mut clipped = false;
        for i in 0..x.len() {
            let v = x[i].clamp(self.lower[i], self.upper[i]);
            if v != x[i] {
                clipped = true;
                x[i] = v;
            }
        }
        clipped
    }
}

pub struct AscentResult {
    pub x: DVector<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-16;
const CURVATURE_GUARD: f64 = 1e-12;

/// Maximize `f` starting from `x0`. `eval(x, want_grad)` returns the value
/// and, when requested, the gradient; `None` marks an infeasible point.
/// Returns `None` only if the starting point itself is infeasible.
pub fn maximize<F>(
    mut eval: F,
    x0: &[f64],
    bounds: &Bounds,
    max_iterations: usize,
    value_tol: f64,
    grad_tol: f64,
) -> Option<AscentResult>
where
    F: FnMut(&DVector<f64>, bool) -> Option<(f64, Option<DVector<f64>>)>,
{
    let dim = x0.len();
    let mut x = DVector::from_column_slice(x0);
    bounds.project(&mut x);

    let (mut f, g) = eval(&x, true)?;
    let mut g = g.expect("gradient requested");
    let mut h = DMatrix::<f64>::identity(dim, dim);
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iterations {
        iterations += 1;
        if g.amax() < grad_tol {
            converged = true;
            break;
        }

        // Ascent direction from the inverse-Hessian approximation of -f.
        let mut p = &h * &g;
        if g.dot(&p) <= 0.0 {
            p = g.clone();
            h = DMatrix::identity(dim, dim);
        }

        // Backtracking line search with projection.
        let mut t = 1.0;
        let mut accepted: Option<(DVector<f64>, f64, bool)> = None;
        while t >= MIN_STEP {
            let mut x_new = &x + &p * t;
            let clipped = bounds.project(&mut x_new);
            let s = &x_new - &x;
            if s.amax() == 0.0 {
                break;
            }
            if let Some((f_new, _)) = eval(&x_new, false) {
                if f_new.is_finite() && f_new >= f + ARMIJO_C1 * g.dot(&s) {
                    accepted = Some((x_new, f_new, clipped));
                    break;
                }
            }
            t *= 0.5;
        }

        let (x_new, f_new, clipped) = match accepted {
            Some(a) => a,
            None => {
                // No improving step exists along this direction.
                converged = true;
                break;
            }
        };

        let g_new = match eval(&x_new, true) {
            Some((_, Some(g))) => g,
            _ => {
                x = x_new;
                f = f_new;
                break;
            }
        };

        if clipped {
            h = DMatrix::identity(dim, dim);
        } else {
            // BFGS update on the minimization of -f: y = g_old - g_new.
            let s = &x_new - &x;
            let y = &g - &g_new;
            let sy = s.dot(&y);
            if sy > CURVATURE_GUARD * s.norm() * y.norm() {
                let rho = 1.0 / sy;
                let hy = &h * &y;
                let yhy = y.dot(&hy);
                // H <- H - rho (H y s^T + s y^T H) + rho^2 (y^T H y) s s^T + rho s s^T
                let ssym = &s * s.transpose();
                h -= rho * (&hy * s.transpose() + &s * hy.transpose());
                h += (rho * rho * yhy + rho) * ssym;
            }
        }

        let df = (f_new - f).abs();
        x = x_new;
        f = f_new;
        g = g_new;
        if df < value_tol {
            converged = true;
            break;
        }
    }

    Some(AscentResult {
        x,
        value: f,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unbounded(dim: usize) -> Bounds {
        Bounds {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    #[test]
    fn maximizes_concave_quadratic() {
        // f(x) = -(x0-1)^2 - 2(x1+2)^2
        let eval = |x: &DVector<f64>, want: bool| {
            let f = -(x[0] - 1.0).powi(2) - 2.0 * (x[1] + 2.0).powi(2);
            let g = if want {
                Some(DVector::from_vec(vec![
                    -2.0 * (x[0] - 1.0),
                    -4.0 * (x[1] + 2.0),
                ]))
            } else {
                None
            };
            Some((f, g))
        };
        let res = maximize(eval, &[5.0, 5.0], &unbounded(2), 100, 1e-12, 1e-8).unwrap();
        assert!(res.converged);
        assert!((res.x[0] - 1.0).abs() < 1e-6);
        assert!((res.x[1] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn respects_bounds() {
        //  max of -(x-3)^2 on [-1, 1] is at x = 1.
        let eval = |x: &DVector<f64>, want: bool| {
            let f = -(x[0] - 3.0).powi(2);
            let g = want.then(|| DVector::from_vec(vec![-2.0 * (x[0] - 3.0)]));
            Some((f, g))
        };
        let bounds = Bounds {
            lower: vec![-1.0],
            upper: vec![1.0],
        };
        let res = maximize(eval, &[-0.5], &bounds, 100, 1e-12, 1e-8).unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_start_returns_none() {
        let eval = |_: &DVector<f64>, _: bool| -> Option<(f64, Option<DVector<f64>>)> { None };
        assert!(maximize(eval, &[0.0], &unbounded(1), 10, 1e-8, 1e-6).is_none());
    }

    #[test]
    fn rosenbrock_like_banana() {
        // Maximize -((1-x)^2 + 100 (y - x^2)^2); optimum (1, 1).
        let eval = |x: &DVector<f64>, want: bool| {
            let (a, b) = (x[0], x[1]);
            let f = -((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2));
            let g = want.then(|| {
                DVector::from_vec(vec![
                    2.0 * (1.0 - a) + 400.0 * a * (b - a * a),
                    -200.0 * (b - a * a),
                ])
            });
            Some((f, g))
        };
        let res = maximize(eval, &[-1.2, 1.0], &unbounded(2), 500, 1e-14, 1e-9).unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-4, "x = {}", res.x[0]);
        assert!((res.x[1] - 1.0).abs() < 1e-4, "y = {}", res.x[1]);
    }
}
