//! Treatment assignment `A | Z ~ Bernoulli(pi(Z))` and the covariate law `f_Z`.

use serde::{Deserialize, Serialize};

use crate::covariates::{CovariateLaw, CovariateProfile};
use crate::error::{Error, Result};

/// Bounds applied to fitted propensities.
pub const PROPENSITY_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Propensity {
    Constant {
        value: f64,
    },
    /// `pi(z) = expit(intercept + slope'z)`.
    Logistic {
        intercept: f64,
        slope: Vec<f64>,
    },
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Propensity {
    pub fn eval(&self, z: &CovariateProfile) -> f64 {
        match self {
            Propensity::Constant { value } => *value,
            Propensity::Logistic { intercept, slope } => {
                let eta = intercept + slope.iter().zip(&z.values).map(|(b, v)| b * v).sum::<f64>();
                expit(eta)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Propensity::Constant { value } if !(0.0..=1.0).contains(value) => Err(Error::InvalidModel(format!(
                "constant propensity {value} is outside [0, 1]"
            ))),
            Propensity::Logistic { intercept, slope }
                if !intercept.is_finite() || slope.iter().any(|s| !s.is_finite()) =>
            {
                Err(Error::InvalidModel("non-finite logistic propensity".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Joint law of `(A, Z)`, factorised as `pi(z)^a (1 - pi(z))^(1-a) f_Z(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentModel {
    pub propensity: Propensity,
    pub law: CovariateLaw,
}

impl TreatmentModel {
    pub fn new(propensity: Propensity, law: CovariateLaw) -> Result<Self> {
        propensity.validate()?;
        law.validate()?;
        Ok(Self { propensity, law })
    }

    pub fn propensity(&self, z: &CovariateProfile) -> f64 {
        self.propensity.eval(z)
    }

    /// Errors unless `0 < pi(z) < 1` on every support point.
    pub fn check_positivity(&self) -> Result<()> {
        for z in self.law.profiles() {
            let p = self.propensity(&z);
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::PositivityViolation(format!("pi({}) = {p}", z.label())));
            }
        }
        Ok(())
    }

    /// `log f(a, z)`; the `f_Z` part is included only for support points of the law.
    pub fn log_density(&self, a: u8, z: &CovariateProfile) -> f64 {
        let p = self.propensity(z);
        let treat = if a == 1 { p.ln() } else { (1.0 - p).ln() };
        let cov = z
            .index
            .or_else(|| self.law.find(&z.values))
            .map(|i| self.law.probs[i].ln())
            .unwrap_or(0.0);
        treat + cov
    }

    /// Exact `E[b(A, Z)]` over the discrete law.
    pub fn expectation<F: Fn(u8, &CovariateProfile) -> f64>(&self, b: F) -> f64 {
        self.law
            .profiles()
            .iter()
            .zip(&self.law.probs)
            .map(|(z, pz)| {
                let p = self.propensity(z);
                pz * (p * b(1, z) + (1.0 - p) * b(0, z))
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_is_stable() {
        assert_eq!(expit(0.0), 0.5);
        assert!(expit(800.0) <= 1.0);
        assert!(expit(-800.0) >= 0.0);
        assert!((expit(2.0) + expit(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn positivity_check() {
        let law = CovariateLaw::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        let ok = TreatmentModel::new(Propensity::Constant { value: 0.4 }, law.clone()).unwrap();
        assert!(ok.check_positivity().is_ok());
        let bad = TreatmentModel::new(Propensity::Constant { value: 1.0 }, law).unwrap();
        assert!(matches!(bad.check_positivity(), Err(Error::PositivityViolation(_))));
    }

    #[test]
    fn expectation_is_exact_sum() {
        let law = CovariateLaw::new(vec![vec![-1.0], vec![2.0]], vec![0.25, 0.75]).unwrap();
        let tm = TreatmentModel::new(
            Propensity::Logistic {
                intercept: 0.1,
                slope: vec![0.5],
            },
            law,
        )
        .unwrap();
        let p1 = expit(0.1 - 0.5);
        let p2 = expit(0.1 + 1.0);
        let expect = 0.25 * p1 + 0.75 * p2;
        assert!((tm.expectation(|a, _| a as f64) - expect).abs() < 1e-15);
        assert!((tm.expectation(|_, _| 3.0) - 3.0).abs() < 1e-15);
    }
}
