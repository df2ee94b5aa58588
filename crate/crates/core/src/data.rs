//! Observed data `(X, delta, A, Z)` and simulation under the model.

use std::io::{self, Write};

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::censoring::CensoringModel;
use crate::covariates::CovariateProfile;
use crate::error::{Error, Result};
use crate::model::OddsModel;
use crate::treatment::TreatmentModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub delta: u8,
    pub a: u8,
    pub z: CovariateProfile,
}

impl Observation {
    pub fn new(x: f64, delta: u8, a: u8, z: CovariateProfile) -> Result<Self> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "observed time {x} must be finite and >= 0"
            )));
        }
        if delta > 1 || a > 1 {
            return Err(Error::InvalidConfig(format!(
                "delta = {delta} and a = {a} must be 0 or 1"
            )));
        }
        Ok(Self { x, delta, a, z })
    }

    /// At-risk indicator `Y(t) = 1{X >= t}`.
    pub fn at_risk(&self, t: f64) -> bool {
        self.x >= t
    }

    /// Counting process `N(t) = 1{X <= t, delta = 1}`.
    pub fn counted(&self, t: f64) -> bool {
        self.delta == 1 && self.x <= t
    }
}

/// Everything needed to draw i.i.d. copies of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataGenerator {
    pub model: OddsModel,
    pub censoring: CensoringModel,
    pub treatment: TreatmentModel,
}

/// Independent stream for subject `index` under `seed`.
pub fn subject_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

impl DataGenerator {
    pub fn new(model: OddsModel, censoring: CensoringModel, treatment: TreatmentModel) -> Result<Self> {
        model.validate()?;
        censoring.validate()?;
        treatment.propensity.validate()?;
        treatment.law.validate()?;
        Ok(Self {
            model,
            censoring,
            treatment,
        })
    }

    /// Draws subject `index`; `z` overrides the covariate draw when given.
    pub fn draw(&self, seed: u64, index: u64, z: Option<&CovariateProfile>) -> Result<Observation> {
        let mut rng = subject_rng(seed, index);
        let u_z: f64 = rng.random();
        let u_a: f64 = rng.random();
        let u_t: f64 = rng.sample(Open01);
        let u_c: f64 = rng.sample(Open01);
        let z = match z {
            Some(z) => z.clone(),
            None => self.treatment.law.profile(self.treatment.law.draw_index(u_z)),
        };
        let a = u8::from(u_a < self.treatment.propensity(&z));
        let t = self.model.sample_event_time(a, &z, u_t)?;
        let c = self.censoring.sample(a, &z, u_c);
        let tau = self.model.tau;
        // sample_event_time returns tau exactly when the event falls beyond follow-up
        let event_before_tau = t < tau;
        let x = t.min(c).min(tau);
        let delta = u8::from(event_before_tau && t <= c);
        Ok(Observation { x, delta, a, z })
    }

    /// Draws `n` i.i.d. observations; subject `i` uses its own substream, so the result
    /// does not depend on how the work is scheduled.
    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<Observation>> {
        if n == 0 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.draw(seed, i, None))
            .collect()
    }

    /// Draws `n` observations with `Z` held at `z`.
    pub fn generate_given(&self, n: usize, seed: u64, z: &CovariateProfile) -> Result<Vec<Observation>> {
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.draw(seed, i, Some(z)))
            .collect()
    }
}

pub fn generate_dataset(
    n: usize,
    model: &OddsModel,
    censoring: &CensoringModel,
    treatment: &TreatmentModel,
    seed: u64,
) -> Result<Vec<Observation>> {
    DataGenerator::new(model.clone(), censoring.clone(), treatment.clone())?.generate(n, seed)
}

/// Writes `x,delta,a,z1..zk` rows.
pub fn write_csv<W: Write>(data: &[Observation], mut out: W) -> io::Result<()> {
    let k = data.first().map(|o| o.z.dim()).unwrap_or(0);
    let mut header = String::from("x,delta,a");
    for j in 1..=k {
        header.push_str(&format!(",z{j}"));
    }
    writeln!(out, "{header}")?;
    for o in data {
        write!(out, "{},{},{}", o.x, o.delta, o.a)?;
        for v in &o.z.values {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn arms_present(data: &[Observation]) -> (bool, bool) {
    (data.iter().any(|o| o.a == 0), data.iter().any(|o| o.a == 1))
}
