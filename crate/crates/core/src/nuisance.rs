//! Nuisance functions `(R, r, S_c, pi)` as oracles or fitted working models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::censoring::CensoringModel;
use crate::covariates::CovariateProfile;
use crate::data::{arms_present, Observation};
use crate::error::{Error, Result};
use crate::model::OddsModel;
use crate::odds::{LogLogistic, OddsFn, OddsFunction};
use crate::optim::{bfgs, numerical_gradient};
use crate::treatment::{expit, Propensity, TreatmentModel, PROPENSITY_CLAMP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Oracle,
    Fitted,
    Misspecified,
}

/// How a replicate obtains its nuisance functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NuisanceMode {
    #[default]
    Oracle,
    Fitted,
    /// Fitted, with the propensity forced to 0.5.
    WrongPropensity,
    /// Fitted, with the log-logistic shape forced to `kappa = 1`.
    WrongOdds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSet {
    pub odds: OddsFunction,
    pub censoring: CensoringModel,
    pub propensity: Propensity,
    pub provenance: Provenance,
}

impl OddsFn for NuisanceSet {
    fn odds(&self, t: f64, z: &CovariateProfile) -> f64 {
        self.odds.odds(t, z)
    }
    fn density(&self, t: f64, z: &CovariateProfile) -> f64 {
        self.odds.density(t, z)
    }
}

impl NuisanceSet {
    pub fn censor_survival(&self, t: f64, a: u8, z: &CovariateProfile) -> f64 {
        self.censoring.survival(t, a, z)
    }

    pub fn censor_hazard(&self, t: f64, a: u8, z: &CovariateProfile) -> f64 {
        self.censoring.hazard(t, a, z)
    }

    /// Propensity; fitted values are clamped to `[1e-6, 1 - 1e-6]`.
    pub fn propensity(&self, z: &CovariateProfile) -> f64 {
        let p = self.propensity.eval(z);
        match self.provenance {
            Provenance::Oracle => p,
            _ => p.clamp(PROPENSITY_CLAMP, 1.0 - PROPENSITY_CLAMP),
        }
    }

    /// Checks the type invariants on `profiles` at `points` times in `(0, horizon]`.
    pub fn validate(&self, profiles: &[CovariateProfile], horizon: f64, points: usize) -> Result<()> {
        self.odds.validate()?;
        self.censoring.validate()?;
        self.propensity.validate()?;
        for z in profiles {
            if self.odds(0.0, z) != 0.0 {
                return Err(Error::InvalidModel(format!("R(0, {}) is not 0", z.label())));
            }
            let p = self.propensity(z);
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::PositivityViolation(format!("pi({}) = {p}", z.label())));
            }
            for a in 0..=1u8 {
                if self.censor_survival(0.0, a, z) != 1.0 {
                    return Err(Error::InvalidModel("S_c(0) is not 1".into()));
                }
            }
            let (mut prev_r, mut prev_s) = (0.0, [1.0, 1.0]);
            for i in 1..=points {
                let t = horizon * i as f64 / points as f64;
                let big_r = self.odds(t, z);
                if !big_r.is_finite() || big_r < prev_r {
                    return Err(Error::InvalidModel(format!(
                        "R is not finite and nondecreasing at t = {t}"
                    )));
                }
                prev_r = big_r;
                for a in 0..=1u8 {
                    let s = self.censor_survival(t, a, z);
                    if s > prev_s[a as usize] {
                        return Err(Error::InvalidModel(format!("S_c increases at t = {t}")));
                    }
                    prev_s[a as usize] = s;
                }
            }
        }
        Ok(())
    }
}

/// Passes the truth through unchanged.
pub fn oracle_nuisances(model: &OddsModel, censoring: &CensoringModel, treatment: &TreatmentModel) -> NuisanceSet {
    NuisanceSet {
        odds: model.odds.clone(),
        censoring: censoring.clone(),
        propensity: treatment.propensity.clone(),
        provenance: Provenance::Oracle,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityFit {
    pub intercept: f64,
    pub slope: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl PropensityFit {
    pub fn propensity(&self) -> Propensity {
        Propensity::Logistic {
            intercept: self.intercept,
            slope: self.slope.clone(),
        }
    }
}

const PROPENSITY_MAX_ITER: usize = 100;
const SEPARATION_BOUND: f64 = 50.0;

/// Logistic regression of `A` on `(1, Z)` by Newton's method.
pub fn fit_propensity(data: &[Observation]) -> Result<PropensityFit> {
    let (has0, has1) = arms_present(data);
    if !(has0 && has1) {
        return Err(Error::PositivityViolation("only one treatment arm is present".into()));
    }
    let k = data[0].z.dim();
    let p = k + 1;
    let n = data.len() as f64;
    let design = |o: &Observation| {
        let mut x = Vec::with_capacity(p);
        x.push(1.0);
        x.extend_from_slice(&o.z.values);
        x
    };
    let mut coef = DVector::<f64>::zeros(p);
    for iter in 1..=PROPENSITY_MAX_ITER {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for o in data {
            let x = DVector::from_vec(design(o));
            let pi = expit(coef.dot(&x));
            grad += (o.a as f64 - pi) * &x;
            hess += pi * (1.0 - pi) * &x * x.transpose();
        }
        let step = hess
            .clone()
            .cholesky()
            .map(|c| c.solve(&grad))
            .or_else(|| hess.lu().solve(&grad));
        let Some(step) = step else {
            return Err(Error::FitFailure {
                what: "propensity".into(),
                reason: format!("singular information matrix at iteration {iter}"),
            });
        };
        // Under separation the gradient vanishes while Newton steps stay of order one,
        // so a small gradient alone is not convergence.
        let gradient_norm = grad.norm() / n;
        if gradient_norm < 1e-8 && step.norm() < 1e-6 {
            return Ok(PropensityFit {
                intercept: coef[0],
                slope: coef.as_slice()[1..].to_vec(),
                iterations: iter - 1,
                gradient_norm,
            });
        }
        coef += step;
        if coef.iter().any(|c| !c.is_finite() || c.abs() > SEPARATION_BOUND) {
            return Err(Error::FitFailure {
                what: "propensity".into(),
                reason: format!(
                    "coefficients diverge (|coef| > {SEPARATION_BOUND}) at iteration {iter}: {:?}; \
                     the arms are (quasi-)separated by Z",
                    coef.as_slice()
                ),
            });
        }
    }
    Err(Error::FitFailure {
        what: "propensity".into(),
        reason: format!("no convergence in {PROPENSITY_MAX_ITER} Newton iterations"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsFit {
    pub beta_pre: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub gamma: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub converged: bool,
    /// Largest gap between the analytic and central-difference gradient at the optimum.
    pub gradient_check: f64,
}

impl OddsFit {
    pub fn odds(&self) -> OddsFunction {
        OddsFunction::LogLogistic(LogLogistic::new(self.alpha, self.kappa, self.gamma.clone()))
    }
}

/// Mean negative failure-time log-likelihood and gradient in
/// `theta = (beta, log alpha, kappa, gamma)`, or without `kappa` when it is fixed.
fn odds_objective(data: &[Observation], theta: &[f64], fixed_kappa: Option<f64>) -> (f64, Vec<f64>) {
    let beta = theta[0];
    let log_alpha = theta[1];
    let (kappa, gamma_at) = match fixed_kappa {
        Some(k) => (k, 2),
        None => (theta[2], 3),
    };
    let gamma = &theta[gamma_at..];
    let mut grad = vec![0.0; theta.len()];
    if !(kappa > 0.0) {
        return (f64::INFINITY, grad);
    }
    let n = data.len() as f64;
    let mut ll = 0.0;
    for o in data {
        let a = o.a as f64;
        let d = o.delta as f64;
        let eta = beta * a;
        if o.x <= 0.0 {
            if o.delta == 1 {
                return (f64::INFINITY, grad);
            }
            // R(0) = 0 contributes log(e / e) = 0
            continue;
        }
        let log_x = o.x.ln();
        let lin: f64 = gamma.iter().zip(&o.z.values).map(|(g, v)| g * v).sum();
        let u = kappa * (log_x - log_alpha) + lin;
        // log(e^eta + e^u)
        let lse = eta.max(u) + (-(eta - u).abs()).exp().ln_1p();
        ll += d * (kappa.ln() + u - log_x) + eta - (1.0 + d) * lse;
        let p_u = (u - lse).exp();
        let p_eta = 1.0 - p_u;
        let du = d - (1.0 + d) * p_u;
        grad[0] += a * (1.0 - (1.0 + d) * p_eta);
        grad[1] += du * (-kappa);
        if fixed_kappa.is_none() {
            grad[2] += d / kappa + du * (log_x - log_alpha);
        }
        for (j, v) in o.z.values.iter().enumerate().take(gamma.len()) {
            grad[gamma_at + j] += du * v;
        }
    }
    (-ll / n, grad.iter().map(|g| -g / n).collect())
}

/// Maximum-likelihood log-logistic working model for `R`, jointly with a preliminary `beta`.
pub fn fit_odds_parametric(data: &[Observation], fixed_kappa: Option<f64>) -> Result<OddsFit> {
    if let Some(k) = fixed_kappa {
        if !(k > 0.0) {
            return Err(Error::Domain(format!("fixed kappa {k} must be positive")));
        }
    }
    let events: Vec<f64> = data.iter().filter(|o| o.delta == 1).map(|o| o.x).collect();
    if events.is_empty() {
        return Err(Error::FitFailure {
            what: "odds".into(),
            reason: "no observed events".into(),
        });
    }
    let k = data[0].z.dim();
    let mut sorted = events.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2].max(1e-8);
    let mut x0 = vec![0.0, median.ln()];
    if fixed_kappa.is_none() {
        x0.push(1.0);
    }
    x0.extend(std::iter::repeat_n(0.0, k));
    let min = bfgs(|th| odds_objective(data, th, fixed_kappa), &x0, 1e-7, 1000);
    if !min.converged || !min.value.is_finite() {
        return Err(Error::FitFailure {
            what: "odds".into(),
            reason: format!(
                "quasi-Newton stopped after {} iterations with gradient norm {:e}",
                min.iterations, min.gradient_norm
            ),
        });
    }
    let analytic = odds_objective(data, &min.x, fixed_kappa).1;
    let numeric = numerical_gradient(|th| odds_objective(data, th, fixed_kappa).0, &min.x, 1e-6);
    let gradient_check = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let (kappa, gamma_at) = match fixed_kappa {
        Some(k) => (k, 2),
        None => (min.x[2], 3),
    };
    if !(kappa > 0.0) {
        return Err(Error::Domain(format!("fitted kappa {kappa} is not positive")));
    }
    Ok(OddsFit {
        beta_pre: min.x[0],
        alpha: min.x[1].exp(),
        kappa,
        gamma: min.x[gamma_at..].to_vec(),
        log_likelihood: -min.value * data.len() as f64,
        iterations: min.iterations,
        gradient_norm: min.gradient_norm,
        converged: min.converged,
        gradient_check,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringFit {
    pub rate: [f64; 2],
    pub censored: [usize; 2],
    pub exposure: [f64; 2],
}

/// Exponential-per-arm censoring MLE; censorings at the administrative cap do not count.
pub fn fit_censoring(data: &[Observation], horizon: f64) -> Result<CensoringFit> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("no observations".into()));
    }
    let mut censored = [0usize; 2];
    let mut exposure = [0.0; 2];
    for o in data {
        let a = o.a as usize;
        exposure[a] += o.x;
        if o.delta == 0 && o.x < horizon {
            censored[a] += 1;
        }
    }
    let rate = [0, 1].map(|a| {
        if censored[a] == 0 || exposure[a] <= 0.0 {
            0.0
        } else {
            censored[a] as f64 / exposure[a]
        }
    });
    Ok(CensoringFit {
        rate,
        censored,
        exposure,
    })
}

impl CensoringFit {
    pub fn model(&self) -> CensoringModel {
        if self.rate == [0.0, 0.0] {
            CensoringModel::None
        } else {
            CensoringModel::Exponential { rate: self.rate }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propensity: Option<PropensityFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub odds: Option<OddsFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub censoring: Option<CensoringFit>,
}

/// Builds the nuisance set for `mode`; the truth objects supply the oracle and the horizon.
pub fn build_nuisances(
    mode: NuisanceMode,
    data: &[Observation],
    model: &OddsModel,
    censoring: &CensoringModel,
    treatment: &TreatmentModel,
) -> Result<(NuisanceSet, FitReport)> {
    if mode == NuisanceMode::Oracle {
        return Ok((oracle_nuisances(model, censoring, treatment), FitReport::default()));
    }
    let cens = fit_censoring(data, model.tau)?;
    let fixed_kappa = (mode == NuisanceMode::WrongOdds).then_some(1.0);
    let odds = fit_odds_parametric(data, fixed_kappa)?;
    let (propensity, prop_fit) = if mode == NuisanceMode::WrongPropensity {
        (Propensity::Constant { value: 0.5 }, None)
    } else {
        let fit = fit_propensity(data)?;
        (fit.propensity(), Some(fit))
    };
    let provenance = if mode == NuisanceMode::Fitted {
        Provenance::Fitted
    } else {
        Provenance::Misspecified
    };
    Ok((
        NuisanceSet {
            odds: odds.odds(),
            censoring: cens.model(),
            propensity,
            provenance,
        },
        FitReport {
            propensity: prop_fit,
            odds: Some(odds),
            censoring: Some(cens),
        },
    ))
}
