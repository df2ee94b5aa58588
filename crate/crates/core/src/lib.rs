//! Efficient-score estimation of the survival odds ratio `beta` in the general
//! proportional odds model `logit S(t | A, Z) = beta * A - G(t, Z)`.
//!
//! The crate is organised bottom-up: model algebra and simulation, nuisance
//! functions, the integro-differential solver for the projection index `h0`,
//! score-based estimation, and Monte-Carlo checks of the tangent-space geometry.

pub mod censoring;
pub mod covariates;
pub mod data;
pub mod error;
pub mod grid;
pub mod ide;
pub mod likelihood;
pub mod model;
pub mod nuisance;
pub mod odds;
pub mod optim;
pub mod rng;
pub mod roots;
pub mod score;
pub mod tangent;
pub mod treatment;

pub use censoring::CensoringModel;
pub use covariates::{CovariateLaw, CovariateProfile, ProfileKey};
pub use data::{generate_dataset, DataGenerator, Observation};
pub use error::{Error, Result};
pub use model::OddsModel;
pub use odds::{LogLogistic, MonotoneSpline, OddsFn, OddsFunction};
pub use treatment::{Propensity, TreatmentModel};
