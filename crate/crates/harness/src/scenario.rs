//! Scenario files: the data-generating truth plus the Monte-Carlo design.

use std::path::Path;

use podds_core::ide::BoundaryRule;
use podds_core::nuisance::NuisanceMode;
use podds_core::score::{Compensator, EstimatorKind, EstimatorOptions};
use podds_core::{CensoringModel, DataGenerator, OddsModel, TreatmentModel};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

const S1: &str = include_str!("../scenarios/s1.json");
const S1_N500: &str = include_str!("../scenarios/s1_n500.json");
const S2: &str = include_str!("../scenarios/s2.json");
const S3_SPLINE: &str = include_str!("../scenarios/s3_spline.json");

/// Names accepted by [`Scenario::builtin`].
pub const BUILTIN: [&str; 4] = ["s1", "s1-n500", "s2", "s3-spline"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub model: OddsModel,
    pub censoring: CensoringModel,
    pub treatment: TreatmentModel,
    pub n: usize,
    pub replicates: usize,
    /// Grid size `M` for the `h0` solver.
    pub grid: usize,
    pub estimators: Vec<EstimatorKind>,
    #[serde(default)]
    pub nuisance: NuisanceMode,
    pub seed: u64,
    #[serde(default)]
    pub boundary: BoundaryRule,
    #[serde(default)]
    pub compensator: Compensator,
    /// Largest accepted IDE residual at `beta_hat`.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    podds_core::ide::DEFAULT_TOLERANCE
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn builtin(name: &str) -> Result<Self> {
        let text = match name {
            "s1" => S1,
            "s1-n500" => S1_N500,
            "s2" => S2,
            "s3-spline" => S3_SPLINE,
            other => {
                return Err(HarnessError::Config(format!(
                    "no built-in scenario {other:?}; expected one of {BUILTIN:?}"
                )))
            }
        };
        Self::from_json(text)
    }

    /// A file path if it exists, else a built-in name.
    pub fn resolve(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.exists() {
            Self::load(path)
        } else {
            Self::builtin(spec)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(HarnessError::Config("n must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(HarnessError::Config("replicates must be at least 1".into()));
        }
        if self.grid < 4 {
            return Err(HarnessError::Config(format!(
                "grid must be at least 4, got {}",
                self.grid
            )));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::Config("no estimators requested".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(HarnessError::Config(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !self.model.tau.is_finite() {
            return Err(HarnessError::Config("tau must be finite".into()));
        }
        self.generator()
            .and_then(|_| Ok(self.treatment.check_positivity()?))
            .map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn generator(&self) -> Result<DataGenerator> {
        Ok(DataGenerator::new(
            self.model.clone(),
            self.censoring.clone(),
            self.treatment.clone(),
        )?)
    }

    pub fn estimator_options(&self) -> EstimatorOptions {
        let mut opts = EstimatorOptions {
            compensator: self.compensator,
            ..EstimatorOptions::default()
        };
        opts.solver.rule = self.boundary;
        opts.solver.tolerance = self.tolerance;
        opts
    }

    /// Estimators in a fixed order with duplicates removed.
    pub fn kinds(&self) -> Vec<EstimatorKind> {
        let mut kinds = self.estimators.clone();
        kinds.sort();
        kinds.dedup();
        kinds
    }
}
