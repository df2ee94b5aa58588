//! Baseline covariate profiles and finite discrete covariate laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One value of the baseline covariate vector `Z`.
///
/// In discrete designs `index` points into the support of a [`CovariateLaw`];
/// conditional expectations given `Z` are then exact finite sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateProfile {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<usize>,
}

impl CovariateProfile {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, index: None }
    }

    pub fn indexed(values: Vec<f64>, index: usize) -> Self {
        Self {
            values,
            index: Some(index),
        }
    }

    /// First covariate, or 0 for an empty vector.
    pub fn z1(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn key(&self) -> ProfileKey {
        ProfileKey(self.values.iter().map(|v| v.to_bits()).collect())
    }

    pub fn label(&self) -> String {
        let body = self.values.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",");
        match self.index {
            Some(i) => format!("#{i}[{body}]"),
            None => format!("[{body}]"),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Bitwise identity of a covariate vector, used to group subjects sharing a profile.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProfileKey(Vec<u64>);

/// Finite discrete distribution of `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateLaw {
    pub support: Vec<Vec<f64>>,
    pub probs: Vec<f64>,
}

impl CovariateLaw {
    pub fn new(support: Vec<Vec<f64>>, probs: Vec<f64>) -> Result<Self> {
        let law = Self { support, probs };
        law.validate()?;
        Ok(law)
    }

    /// Single support point with probability one.
    pub fn degenerate(values: Vec<f64>) -> Self {
        Self {
            support: vec![values],
            probs: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() {
            return Err(Error::InvalidModel("covariate support is empty".into()));
        }
        if self.support.len() != self.probs.len() {
            return Err(Error::InvalidModel(format!(
                "covariate support has {} points but {} probabilities",
                self.support.len(),
                self.probs.len()
            )));
        }
        let dim = self.support[0].len();
        for (i, z) in self.support.iter().enumerate() {
            if z.len() != dim {
                return Err(Error::InvalidModel(format!(
                    "support point {i} has dimension {} (expected {dim})",
                    z.len()
                )));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidModel(format!("support point {i} has non-finite entries")));
            }
        }
        if self.probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidModel("support probabilities must be positive".into()));
        }
        let total: f64 = self.probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "support probabilities sum to {total}, not 1"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.support[0].len()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn profile(&self, index: usize) -> CovariateProfile {
        CovariateProfile::indexed(self.support[index].clone(), index)
    }

    pub fn profiles(&self) -> Vec<CovariateProfile> {
        (0..self.len()).map(|i| self.profile(i)).collect()
    }

    /// Inverse-CDF draw of a support index from `u` in [0, 1).
    pub fn draw_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.len() - 1
    }

    /// Matches a covariate vector against the support, returning its index.
    pub fn find(&self, values: &[f64]) -> Option<usize> {
        self.support
            .iter()
            .position(|z| z.len() == values.len() && z.iter().zip(values).all(|(a, b)| (a - b).abs() < 1e-12))
    }
}
