//! Bracketed scalar root finding: bisection safeguarded with secant steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub bracket: (f64, f64),
    pub iterations: usize,
}

/// Widens `[lo, hi]` symmetrically until `f` changes sign, never beyond `[-limit, limit]`.
///
/// Returns the bracket and the function values at its ends.
pub fn expand_bracket<F>(f: &mut F, lo: f64, hi: f64, limit: f64) -> Result<(f64, f64, f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) {
        return Err(Error::NoRoot(format!("empty bracket [{lo}, {hi}]")));
    }
    let (mut lo, mut hi) = (lo.max(-limit), hi.min(limit));
    let mut flo = f(lo)?;
    let mut fhi = f(hi)?;
    loop {
        if flo == 0.0 || fhi == 0.0 || flo.signum() != fhi.signum() {
            return Ok((lo, hi, flo, fhi));
        }
        if lo <= -limit && hi >= limit {
            return Err(Error::NoRoot(format!(
                "no sign change on [{lo}, {hi}]: f = ({flo:e}, {fhi:e})"
            )));
        }
        let width = hi - lo;
        if lo > -limit {
            lo = (lo - width).max(-limit);
            flo = f(lo)?;
        }
        if hi < limit {
            hi = (hi + width).min(limit);
            fhi = f(hi)?;
        }
    }
}

/// Finds a root of `f` in `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs.
///
/// Each iteration tries a secant step through the bracket ends and falls back to
/// bisection whenever the secant point leaves the bracket or the bracket failed to
/// halve on the previous iteration.
pub fn bisect_secant<F>(f: &mut F, lo: f64, hi: f64, flo: f64, fhi: f64, tol: f64, max_iter: usize) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    if flo == 0.0 {
        return Ok(Root {
            x: lo,
            fx: 0.0,
            bracket: (lo, lo),
            iterations: 0,
        });
    }
    if fhi == 0.0 {
        return Ok(Root {
            x: hi,
            fx: 0.0,
            bracket: (hi, hi),
            iterations: 0,
        });
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return Err(Error::NoRoot(format!(
            "bracket [{lo}, {hi}] has f = ({flo:e}, {fhi:e})"
        )));
    }
    let (mut a, mut b, mut fa, mut fb) = (lo, hi, flo, fhi);
    let mut last_width = b - a;
    let mut force_bisect = false;
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for iter in 1..=max_iter {
        let mid = 0.5 * (a + b);
        let secant = b - fb * (b - a) / (fb - fa);
        let c = if !force_bisect && secant.is_finite() && secant > a && secant < b {
            secant
        } else {
            mid
        };
        let fc = f(c)?;
        if !fc.is_finite() {
            return Err(Error::NoRoot(format!("non-finite function value at {c}")));
        }
        if fc.abs() < best.1.abs() {
            best = (c, fc);
        }
        if fc == 0.0 {
            return Ok(Root {
                x: c,
                fx: 0.0,
                bracket: (c, c),
                iterations: iter,
            });
        }
        if fc.signum() == fa.signum() {
            a = c;
            fa = fc;
        } else {
            b = c;
            fb = fc;
        }
        let width = b - a;
        force_bisect = width > 0.5 * last_width;
        last_width = width;
        if width <= tol {
            // Report the end with the smaller residual; both lie within tol of the root.
            let (x, fx) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
            return Ok(Root {
                x,
                fx,
                bracket: (a, b),
                iterations: iter,
            });
        }
    }
    Err(Error::NoRoot(format!(
        "no convergence after {max_iter} iterations; bracket [{a}, {b}], best x = {} with f = {:e}",
        best.0, best.1
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok<F: Fn(f64) -> f64>(g: F) -> impl FnMut(f64) -> Result<f64> {
        move |x| Ok(g(x))
    }

    #[test]
    fn finds_cube_root_of_two() {
        let mut f = ok(|x| x * x * x - 2.0);
        let root = bisect_secant(&mut f, 0.0, 2.0, -2.0, 6.0, 1e-12, 200).unwrap();
        assert!((root.x - 2f64.cbrt()).abs() < 1e-11);
    }

    #[test]
    fn handles_flat_then_steep() {
        let mut f = ok(|x: f64| (x - 0.3).powi(3) * 1e-3 + (x - 0.3) * 1e-9);
        let root = bisect_secant(&mut f, -10.0, 10.0, f64::NAN, f64::NAN, 1e-10, 500);
        assert!(root.is_err());
        let (lo, hi) = (-10.0, 10.0);
        let flo = (lo - 0.3f64).powi(3) * 1e-3 + (lo - 0.3) * 1e-9;
        let fhi = (hi - 0.3f64).powi(3) * 1e-3 + (hi - 0.3) * 1e-9;
        let root = bisect_secant(&mut f, lo, hi, flo, fhi, 1e-10, 500).unwrap();
        assert!((root.x - 0.3).abs() < 1e-9);
    }

    #[test]
    fn expands_until_sign_change() {
        let mut f = ok(|x| x - 3.5);
        let (lo, hi, flo, fhi) = expand_bracket(&mut f, -1.0, 1.0, 10.0).unwrap();
        assert!(lo <= 3.5 && hi >= 3.5);
        assert!(flo < 0.0 && fhi > 0.0);
    }

    #[test]
    fn expansion_stops_at_limit() {
        let mut f = ok(|x| x - 12.0);
        assert!(matches!(expand_bracket(&mut f, -1.0, 1.0, 10.0), Err(Error::NoRoot(_))));
    }
}
