//! Unconstrained quasi-Newton minimisation (BFGS with Armijo backtracking).

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimises `f`, which returns the value and gradient; an infinite or NaN value marks
/// an infeasible point and makes the line search shrink the step.
pub fn bfgs<F>(mut f: F, x0: &[f64], grad_tol: f64, max_iter: usize) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let n = x0.len();
    let mut x = DVector::from_column_slice(x0);
    let (mut fx, g0) = f(x.as_slice());
    let mut g = DVector::from_vec(g0);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    while iterations < max_iter {
        if g.norm() < grad_tol {
            break;
        }
        iterations += 1;
        let mut p = -(&h * &g);
        if p.dot(&g) >= 0.0 {
            h = DMatrix::identity(n, n);
            p = -g.clone();
        }
        let slope = p.dot(&g);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + step * &p;
            let (ft, gt) = f(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * step * slope {
                accepted = Some((trial, ft, DVector::from_vec(gt)));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            break;
        };
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - rho * &s * y.transpose();
            let right = &i - rho * &y * s.transpose();
            h = left * &h * right + rho * &s * s.transpose();
        }
        x = xn;
        fx = fn_;
        g = gn;
    }
    let gradient_norm = g.norm();
    Minimum {
        x: x.as_slice().to_vec(),
        value: fx,
        gradient_norm,
        iterations,
        converged: gradient_norm < grad_tol,
    }
}

/// Central-difference gradient, used to audit analytic gradients.
pub fn numerical_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step * (1.0 + x[i].abs());
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
