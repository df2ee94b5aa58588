//! Odds functions `R(t, z) = exp{G(t, z)}` and their time derivatives `r(t, z)`.
//!
//! Two families ship: a log-logistic form `(t/alpha)^kappa * exp(gamma'z)` with a
//! closed-form inverse, and a monotone cubic (PCHIP) table per covariate profile
//! that leaves the time shape unrestricted.

use serde::{Deserialize, Serialize};

use crate::covariates::CovariateProfile;
use crate::error::{Error, Result};

/// Anything that can play the role of `R` and `r` in the model algebra.
pub trait OddsFn {
    fn odds(&self, t: f64, z: &CovariateProfile) -> f64;
    fn density(&self, t: f64, z: &CovariateProfile) -> f64;
}

impl<T: OddsFn + ?Sized> OddsFn for &T {
    fn odds(&self, t: f64, z: &CovariateProfile) -> f64 {
        (**self).odds(t, z)
    }
    fn density(&self, t: f64, z: &CovariateProfile) -> f64 {
        (**self).density(t, z)
    }
}

fn linear_predictor(gamma: &[f64], z: &CovariateProfile) -> f64 {
    if gamma.is_empty() {
        return 0.0;
    }
    if gamma.len() != z.values.len() {
        return f64::NAN;
    }
    gamma.iter().zip(&z.values).map(|(g, v)| g * v).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLogistic {
    pub alpha: f64,
    pub kappa: f64,
    #[serde(default)]
    pub gamma: Vec<f64>,
}

impl LogLogistic {
    pub fn new(alpha: f64, kappa: f64, gamma: Vec<f64>) -> Self {
        Self { alpha, kappa, gamma }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidModel(format!(
                "log-logistic alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Domain(format!(
                "log-logistic kappa must be positive, got {}",
                self.kappa
            )));
        }
        if self.gamma.iter().any(|g| !g.is_finite()) {
            return Err(Error::InvalidModel("non-finite gamma".into()));
        }
        Ok(())
    }

    fn inverse(&self, target: f64, z: &CovariateProfile) -> f64 {
        self.alpha * (target * (-linear_predictor(&self.gamma, z)).exp()).powf(1.0 / self.kappa)
    }
}

impl OddsFn for LogLogistic {
    fn odds(&self, t: f64, z: &CovariateProfile) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        (self.kappa * (t / self.alpha).ln() + linear_predictor(&self.gamma, z)).exp()
    }

    fn density(&self, t: f64, z: &CovariateProfile) -> f64 {
        let scale = linear_predictor(&self.gamma, z).exp() * self.kappa / self.alpha;
        if t <= 0.0 {
            return if self.kappa == 1.0 {
                scale
            } else if self.kappa > 1.0 {
                0.0
            } else {
                f64::INFINITY
            };
        }
        scale * (t / self.alpha).powf(self.kappa - 1.0)
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl Pchip {
    pub fn new(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 || knots.len() != values.len() {
            return Err(Error::InvalidModel(
                "spline needs at least two knots with matching values".into(),
            ));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("spline table has non-finite entries".into()));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidModel("spline knots must be strictly increasing".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidModel("spline values must be nondecreasing".into()));
        }
        let n = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (values[k + 1] - values[k]) / h[k]).collect();
        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes[0] = delta[0];
            slopes[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    slopes[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { knots, values, slopes })
    }

    fn segment(&self, t: f64) -> usize {
        match self
            .knots
            .binary_search_by(|k| k.partial_cmp(&t).unwrap_or(std::cmp::Ordering::Less))
        {
            Ok(i) => i.min(self.knots.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.knots.len() - 2),
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let last = self.knots.len() - 1;
        if t >= self.knots[last] {
            return self.values[last] + self.slopes[last] * (t - self.knots[last]);
        }
        if t <= self.knots[0] {
            return self.values[0];
        }
        let k = self.segment(t);
        let h = self.knots[k + 1] - self.knots[k];
        let s = (t - self.knots[k]) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        self.values[k] * (2.0 * s3 - 3.0 * s2 + 1.0)
            + h * self.slopes[k] * (s3 - 2.0 * s2 + s)
            + self.values[k + 1] * (-2.0 * s3 + 3.0 * s2)
            + h * self.slopes[k + 1] * (s3 - s2)
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let last = self.knots.len() - 1;
        if t >= self.knots[last] {
            return self.slopes[last];
        }
        if t < self.knots[0] {
            return 0.0;
        }
        let k = self.segment(t);
        let h = self.knots[k + 1] - self.knots[k];
        let s = (t - self.knots[k]) / h;
        let s2 = s * s;
        (self.values[k] * (6.0 * s2 - 6.0 * s)
            + h * self.slopes[k] * (3.0 * s2 - 4.0 * s + 1.0)
            + self.values[k + 1] * (-6.0 * s2 + 6.0 * s)
            + h * self.slopes[k + 1] * (3.0 * s2 - 2.0 * s))
            / h
    }

    /// Smallest `t` with `value(t) = target`, or `None` if the curve never reaches it.
    pub fn inverse(&self, target: f64) -> Option<f64> {
        let last = self.knots.len() - 1;
        if target <= self.values[0] {
            return Some(self.knots[0]);
        }
        if target >= self.values[last] {
            if self.slopes[last] > 0.0 {
                return Some(self.knots[last] + (target - self.values[last]) / self.slopes[last]);
            }
            return if target == self.values[last] {
                Some(self.knots[last])
            } else {
                None
            };
        }
        let k = self.values.partition_point(|&v| v < target).saturating_sub(1);
        let (mut lo, mut hi) = (self.knots[k], self.knots[k + 1]);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.value(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1.0) {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SplineSpec {
    knots: Vec<f64>,
    tables: Vec<Vec<f64>>,
    #[serde(default)]
    gamma: Vec<f64>,
}

/// Tabulated monotone odds: `R(t, z) = B_j(t) * exp(gamma'z)` where `j` is the
/// profile's support index (or the single table when only one is given).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SplineSpec", into = "SplineSpec")]
pub struct MonotoneSpline {
    knots: Vec<f64>,
    tables: Vec<Vec<f64>>,
    gamma: Vec<f64>,
    curves: Vec<Pchip>,
}

impl TryFrom<SplineSpec> for MonotoneSpline {
    type Error = Error;

    fn try_from(spec: SplineSpec) -> Result<Self> {
        MonotoneSpline::new(spec.knots, spec.tables, spec.gamma)
    }
}

impl From<MonotoneSpline> for SplineSpec {
    fn from(s: MonotoneSpline) -> Self {
        SplineSpec {
            knots: s.knots,
            tables: s.tables,
            gamma: s.gamma,
        }
    }
}

impl MonotoneSpline {
    pub fn new(knots: Vec<f64>, tables: Vec<Vec<f64>>, gamma: Vec<f64>) -> Result<Self> {
        if tables.is_empty() {
            return Err(Error::InvalidModel("spline needs at least one table".into()));
        }
        if knots.first() != Some(&0.0) {
            return Err(Error::InvalidModel("spline knots must start at t = 0".into()));
        }
        let curves = tables
            .iter()
            .map(|values| {
                if values.first() != Some(&0.0) {
                    return Err(Error::InvalidModel("spline tables must start at R(0) = 0".into()));
                }
                Pchip::new(knots.clone(), values.clone())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            knots,
            tables,
            gamma,
            curves,
        })
    }

    fn curve(&self, z: &CovariateProfile) -> Option<&Pchip> {
        if self.curves.len() == 1 {
            return self.curves.first();
        }
        z.index.and_then(|i| self.curves.get(i))
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn inverse(&self, target: f64, z: &CovariateProfile) -> Option<f64> {
        let curve = self.curve(z)?;
        curve.inverse(target * (-linear_predictor(&self.gamma, z)).exp())
    }
}

impl OddsFn for MonotoneSpline {
    fn odds(&self, t: f64, z: &CovariateProfile) -> f64 {
        match self.curve(z) {
            Some(c) => c.value(t.max(0.0)) * linear_predictor(&self.gamma, z).exp(),
            None => f64::NAN,
        }
    }

    fn density(&self, t: f64, z: &CovariateProfile) -> f64 {
        match self.curve(z) {
            Some(c) => c.derivative(t.max(0.0)) * linear_predictor(&self.gamma, z).exp(),
            None => f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OddsFunction {
    LogLogistic(LogLogistic),
    Spline(MonotoneSpline),
}

impl OddsFunction {
    pub fn log_logistic(alpha: f64, kappa: f64, gamma: Vec<f64>) -> Self {
        OddsFunction::LogLogistic(LogLogistic::new(alpha, kappa, gamma))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            OddsFunction::LogLogistic(ll) => ll.validate(),
            OddsFunction::Spline(_) => Ok(()),
        }
    }

    /// Solves `R(t, z) = target` for `t`.
    pub fn inverse(&self, target: f64, z: &CovariateProfile) -> Result<f64> {
        if !(target >= 0.0) {
            return Err(Error::Domain(format!("odds target {target} is negative")));
        }
        let t = match self {
            OddsFunction::LogLogistic(ll) => Some(ll.inverse(target, z)),
            OddsFunction::Spline(s) => s.inverse(target, z),
        };
        match t {
            Some(t) if t.is_finite() => Ok(t),
            _ => {
                let hi = match self {
                    OddsFunction::Spline(s) => *s.knots().last().unwrap_or(&0.0),
                    OddsFunction::LogLogistic(_) => f64::INFINITY,
                };
                Err(Error::Inversion {
                    target,
                    lo: 0.0,
                    hi,
                    r_lo: self.odds(0.0, z),
                    r_hi: self.odds(hi, z),
                })
            }
        }
    }
}

impl OddsFn for OddsFunction {
    fn odds(&self, t: f64, z: &CovariateProfile) -> f64 {
        match self {
            OddsFunction::LogLogistic(ll) => ll.odds(t, z),
            OddsFunction::Spline(s) => s.odds(t, z),
        }
    }

    fn density(&self, t: f64, z: &CovariateProfile) -> f64 {
        match self {
            OddsFunction::LogLogistic(ll) => ll.density(t, z),
            OddsFunction::Spline(s) => s.density(t, z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z0() -> CovariateProfile {
        CovariateProfile::indexed(vec![0.0], 0)
    }

    #[test]
    fn log_logistic_matches_closed_form() {
        let f = OddsFunction::log_logistic(2.0, 1.5, vec![0.5]);
        let z = CovariateProfile::new(vec![1.0]);
        let t: f64 = 3.0;
        let expect = (t / 2.0).powf(1.5) * 0.5f64.exp();
        assert!((f.odds(t, &z) - expect).abs() < 1e-12);
        let dexpect = 1.5 / 2.0 * (t / 2.0).powf(0.5) * 0.5f64.exp();
        assert!((f.density(t, &z) - dexpect).abs() < 1e-12);
        assert_eq!(f.odds(0.0, &z), 0.0);
        let back = f.inverse(expect, &z).unwrap();
        assert!((back - t).abs() < 1e-12);
    }

    #[test]
    fn pchip_interpolates_and_stays_monotone() {
        let p = Pchip::new(vec![0.0, 1.0, 2.0, 4.0], vec![0.0, 0.5, 2.0, 2.5]).unwrap();
        for (k, v) in [(0.0, 0.0), (1.0, 0.5), (2.0, 2.0), (4.0, 2.5)] {
            assert!((p.value(k) - v).abs() < 1e-14);
        }
        let mut prev = -1.0;
        for i in 0..=800 {
            let t = i as f64 * 0.005;
            let v = p.value(t);
            assert!(v >= prev - 1e-15);
            assert!(p.derivative(t) >= -1e-15);
            prev = v;
        }
    }

    #[test]
    fn pchip_derivative_matches_finite_difference() {
        let p = Pchip::new(vec![0.0, 0.5, 1.5, 3.0], vec![0.0, 0.4, 1.0, 3.0]).unwrap();
        for &t in &[0.1, 0.7, 1.2, 2.2, 2.9, 3.5] {
            let h = 1e-6;
            let fd = (p.value(t + h) - p.value(t - h)) / (2.0 * h);
            assert!((fd - p.derivative(t)).abs() < 1e-6, "t={t}");
        }
    }

    #[test]
    fn spline_inverse_round_trips() {
        let s = OddsFunction::Spline(
            MonotoneSpline::new(vec![0.0, 1.0, 2.0, 4.0], vec![vec![0.0, 0.8, 1.5, 4.0]], vec![]).unwrap(),
        );
        for &t in &[0.05, 0.5, 1.3, 2.7, 4.0, 6.0] {
            let y = s.odds(t, &z0());
            let back = s.inverse(y, &z0()).unwrap();
            assert!((back - t).abs() < 1e-10, "t={t} back={back}");
        }
    }

    #[test]
    fn spline_rejects_nonzero_origin() {
        assert!(MonotoneSpline::new(vec![0.0, 1.0], vec![vec![0.1, 1.0]], vec![]).is_err());
        assert!(MonotoneSpline::new(vec![0.5, 1.0], vec![vec![0.0, 1.0]], vec![]).is_err());
    }

    #[test]
    fn per_profile_tables_need_an_index() {
        let s = MonotoneSpline::new(vec![0.0, 1.0], vec![vec![0.0, 1.0], vec![0.0, 2.0]], vec![]).unwrap();
        assert_eq!(s.odds(1.0, &CovariateProfile::indexed(vec![1.0], 1)), 2.0);
        assert!(s.odds(1.0, &CovariateProfile::new(vec![1.0])).is_nan());
    }
}
