//! Single-observation log-likelihood and the score for `beta` with `R` held fixed.

use crate::censoring::CensoringModel;
use crate::data::Observation;
use crate::error::{Error, Result};
use crate::model::treatment_weight;
use crate::odds::OddsFn;
use crate::treatment::TreatmentModel;

/// Which `beta`-free factors to include in [`log_likelihood`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LikelihoodTerms {
    pub censoring: bool,
    pub treatment: bool,
}

impl LikelihoodTerms {
    pub const FAILURE_ONLY: Self = Self {
        censoring: false,
        treatment: false,
    };
    pub const ALL: Self = Self {
        censoring: true,
        treatment: true,
    };
}

/// `delta log{r / (e + R)} + log{e / (e + R)}` plus, when requested,
/// `(1 - delta) log lambda_c - Lambda_c` and `log f(A, Z)`.
///
/// Returns `-inf` for an event at a time where `r(X, Z) = 0`.
pub fn log_likelihood<R: OddsFn + ?Sized>(
    obs: &Observation,
    beta: f64,
    odds: &R,
    censoring: &CensoringModel,
    treatment: Option<&TreatmentModel>,
    terms: LikelihoodTerms,
) -> Result<f64> {
    let e = treatment_weight(beta, obs.a);
    let big_r = odds.odds(obs.x, &obs.z);
    if !big_r.is_finite() || big_r < 0.0 {
        return Err(Error::InvalidModel(format!("R({}) = {big_r}", obs.x)));
    }
    let mut ll = (e / (e + big_r)).ln();
    if obs.delta == 1 {
        let small_r = odds.density(obs.x, &obs.z);
        if !(small_r > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        ll += (small_r / (e + big_r)).ln();
    }
    if terms.censoring {
        if obs.delta == 0 {
            ll += censoring.hazard(obs.x, obs.a, &obs.z).ln();
        }
        ll -= censoring.cumulative_hazard(obs.x, obs.a, &obs.z);
    }
    if terms.treatment {
        let tm = treatment
            .ok_or_else(|| Error::InvalidConfig("treatment term requested without a treatment model".into()))?;
        ll += tm.log_density(obs.a, &obs.z);
    }
    Ok(ll)
}

/// `-int A S(t | A, Z) dM(t)` for one observation, in closed form:
/// `-A [delta S(X) - (1 - S(X))]`, using `int_0^X S lambda dt = 1 - S(X)`.
pub fn naive_score<R: OddsFn + ?Sized>(obs: &Observation, beta: f64, odds: &R) -> Result<f64> {
    if obs.a == 0 {
        return Ok(0.0);
    }
    let e = treatment_weight(beta, obs.a);
    let big_r = odds.odds(obs.x, &obs.z);
    if !big_r.is_finite() || big_r < 0.0 {
        return Err(Error::InvalidModel(format!("R({}) = {big_r}", obs.x)));
    }
    let s = e / (e + big_r);
    let jump = if obs.delta == 1 { s } else { 0.0 };
    Ok(-(jump - (1.0 - s)))
}
