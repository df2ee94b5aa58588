//! Censoring laws `C | A, Z`, independent of `T` given `(A, Z)`.

use serde::{Deserialize, Serialize};

use crate::covariates::CovariateProfile;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum CensoringModel {
    /// No random censoring; only the administrative cap at `tau` applies.
    None,
    /// Exponential censoring with a rate per treatment arm, `[rate(a=0), rate(a=1)]`.
    Exponential { rate: [f64; 2] },
}

impl CensoringModel {
    pub fn validate(&self) -> Result<()> {
        if let CensoringModel::Exponential { rate } = self {
            if rate.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "censoring rates must be finite and nonnegative, got {rate:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn hazard(&self, _t: f64, a: u8, _z: &CovariateProfile) -> f64 {
        match self {
            CensoringModel::None => 0.0,
            CensoringModel::Exponential { rate } => rate[a as usize],
        }
    }

    pub fn cumulative_hazard(&self, t: f64, a: u8, z: &CovariateProfile) -> f64 {
        self.hazard(t, a, z) * t
    }

    pub fn survival(&self, t: f64, a: u8, z: &CovariateProfile) -> f64 {
        (-self.cumulative_hazard(t, a, z)).exp()
    }

    /// Draws `C` by inversion from `u` in (0, 1); `f64::INFINITY` when never censored.
    pub fn sample(&self, a: u8, _z: &CovariateProfile, u: f64) -> f64 {
        match self {
            CensoringModel::None => f64::INFINITY,
            CensoringModel::Exponential { rate } => {
                let rate = rate[a as usize];
                if rate > 0.0 {
                    -u.ln() / rate
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}
