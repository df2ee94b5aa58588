//! Uniform time grids and the quadrature rules used on them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `t_j = j * horizon / m` for `j = 0..=m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub m: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, m: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "grid horizon must be finite and positive, got {horizon}"
            )));
        }
        if m < 4 {
            return Err(Error::InvalidConfig(format!("grid size {m} is below 4")));
        }
        Ok(Self { horizon, m })
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.m as f64
    }

    pub fn len(&self) -> usize {
        self.m + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, j: usize) -> f64 {
        if j == self.m {
            self.horizon
        } else {
            j as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.m).map(|j| self.t(j)).collect()
    }

    /// Cell index `j` and fraction `s` with `x = t_j + s * step`, `0 <= s <= 1`.
    pub fn locate(&self, x: f64) -> Result<(usize, f64)> {
        if !(x >= 0.0) || x > self.horizon * (1.0 + 1e-12) {
            return Err(Error::Horizon {
                x,
                horizon: self.horizon,
            });
        }
        let pos = (x / self.step()).min(self.m as f64);
        let j = (pos.floor() as usize).min(self.m - 1);
        Ok((j, (pos - j as f64).clamp(0.0, 1.0)))
    }

    /// Linear interpolation of nodal values at `x`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> Result<f64> {
        let (j, s) = self.locate(x)?;
        Ok(values[j] + s * (values[j + 1] - values[j]))
    }

    /// Cubic Hermite interpolation from nodal values and derivatives.
    pub fn hermite(&self, values: &[f64], derivs: &[f64], x: f64) -> Result<f64> {
        let (j, s) = self.locate(x)?;
        let d = self.step();
        let s2 = s * s;
        let s3 = s2 * s;
        Ok((2.0 * s3 - 3.0 * s2 + 1.0) * values[j]
            + (s3 - 2.0 * s2 + s) * d * derivs[j]
            + (-2.0 * s3 + 3.0 * s2) * values[j + 1]
            + (s3 - s2) * d * derivs[j + 1])
    }
}

/// Running trapezoid integral of nodal values, starting at 0.
pub fn cumulative_trapezoid(values: &[f64], step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * step * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Trapezoid integral of nodal values over `[0, x]`, interpolating linearly inside the last cell.
pub fn trapezoid_to(grid: &TimeGrid, values: &[f64], x: f64) -> Result<f64> {
    let (j, s) = grid.locate(x)?;
    let d = grid.step();
    let full: f64 = values[..=j].windows(2).map(|w| 0.5 * d * (w[0] + w[1])).sum();
    let end = values[j] + s * (values[j + 1] - values[j]);
    Ok(full + 0.5 * s * d * (values[j] + end))
}

/// Composite Simpson rule with `panels` (rounded up to even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let n = (panels.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}
