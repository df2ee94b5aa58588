//! Exact algebra of the general proportional odds model
//! `logit S(t | A, Z) = beta * A - G(t, Z)` written through `R = exp(G)`:
//!
//! * `S(t | a, z) = e^{beta a} / (e^{beta a} + R(t, z))`
//! * `lambda(t | a, z) = r(t, z) / (e^{beta a} + R(t, z))`

use serde::{Deserialize, Serialize};

use crate::covariates::CovariateProfile;
use crate::error::{Error, Result};
use crate::odds::{OddsFn, OddsFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsModel {
    pub beta: f64,
    pub odds: OddsFunction,
    /// Follow-up horizon; `f64::INFINITY` means no administrative censoring.
    pub tau: f64,
}

/// Treatment multiplier `e^{beta a}`.
#[inline]
pub fn treatment_weight(beta: f64, a: u8) -> f64 {
    if a == 0 {
        1.0
    } else {
        beta.exp()
    }
}

impl OddsModel {
    pub fn new(beta: f64, odds: OddsFunction, tau: f64) -> Result<Self> {
        let model = Self { beta, odds, tau };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() {
            return Err(Error::InvalidModel(format!("beta = {} is not finite", self.beta)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidModel(format!("tau = {} must be positive", self.tau)));
        }
        self.odds.validate()
    }

    /// Checks `R(0, z) = 0`, monotonicity and (in strict mode) `r > 0` on `(0, tau]`
    /// at `points` equally spaced times for each profile.
    pub fn check_profiles(&self, profiles: &[CovariateProfile], strict: bool, points: usize) -> Result<()> {
        let horizon = if self.tau.is_finite() { self.tau } else { 10.0 };
        for z in profiles {
            let r0 = self.odds.odds(0.0, z);
            if r0 != 0.0 {
                return Err(Error::InvalidModel(format!("R(0, {}) = {r0}, must be 0", z.label())));
            }
            let mut prev = 0.0;
            for i in 1..=points {
                let t = horizon * i as f64 / points as f64;
                let big_r = self.odds.odds(t, z);
                let small_r = self.odds.density(t, z);
                if !big_r.is_finite() || !small_r.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "non-finite odds at t = {t} for {}",
                        z.label()
                    )));
                }
                if big_r < prev || small_r < 0.0 {
                    return Err(Error::InvalidModel(format!(
                        "odds decrease at t = {t} for {}",
                        z.label()
                    )));
                }
                if strict && !(small_r > 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "r(t, z) = 0 at t = {t} for {} (strict mode requires r > 0 on (0, tau])",
                        z.label()
                    )));
                }
                prev = big_r;
            }
        }
        Ok(())
    }

    fn odds_at(&self, t: f64, z: &CovariateProfile) -> Result<f64> {
        let r = self.odds.odds(t, z);
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidModel(format!(
                "R({t}, {}) = {r} is not a finite nonnegative value",
                z.label()
            )));
        }
        Ok(r)
    }

    pub fn survival(&self, t: f64, a: u8, z: &CovariateProfile) -> Result<f64> {
        let e = treatment_weight(self.beta, a);
        let r = self.odds_at(t, z)?;
        Ok(e / (e + r))
    }

    pub fn hazard(&self, t: f64, a: u8, z: &CovariateProfile) -> Result<f64> {
        let e = treatment_weight(self.beta, a);
        let big_r = self.odds_at(t, z)?;
        let small_r = self.odds.density(t, z);
        if !small_r.is_finite() {
            return Err(Error::InvalidModel(format!(
                "r({t}, {}) = {small_r} is not finite",
                z.label()
            )));
        }
        Ok(small_r / (e + big_r))
    }

    /// `log{(e^{beta a} + R) / e^{beta a}}`, i.e. `-log S` in closed form.
    pub fn cumulative_hazard(&self, t: f64, a: u8, z: &CovariateProfile) -> Result<f64> {
        let e = treatment_weight(self.beta, a);
        let r = self.odds_at(t, z)?;
        Ok((r / e).ln_1p())
    }

    /// `logit S(t | 1, z) - logit S(t | 0, z)`.
    pub fn log_odds_ratio(&self, t: f64, z: &CovariateProfile) -> Result<f64> {
        let r = self.odds_at(t, z)?;
        if !(r > 0.0) {
            return Err(Error::DegenerateOdds { t, odds: r });
        }
        let logit = |a: u8| {
            let e = treatment_weight(self.beta, a);
            let s = e / (e + r);
            let f = r / (e + r);
            s.ln() - f.ln()
        };
        Ok(logit(1) - logit(0))
    }

    /// Inverts the survival function at `u`, capping the draw at `tau`.
    pub fn sample_event_time(&self, a: u8, z: &CovariateProfile, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!("uniform draw {u} is outside (0, 1)")));
        }
        let e = treatment_weight(self.beta, a);
        let target = e * (1.0 - u) / u;
        if self.tau.is_finite() && self.odds_at(self.tau, z)? <= target {
            return Ok(self.tau);
        }
        let t = self.odds.inverse(target, z)?;
        Ok(t.min(self.tau))
    }
}
