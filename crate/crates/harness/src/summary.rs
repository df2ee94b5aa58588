//! Aggregate statistics over replicates.

use std::collections::BTreeMap;
use std::fmt::Write;

use podds_core::nuisance::NuisanceMode;
use podds_core::score::EstimatorKind;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::runner::ReplicateRow;
use crate::scenario::Scenario;

/// Two-sided 95% normal quantile.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Largest failure share a scenario tolerates before it is reported as failed.
pub const MAX_FAILURE_RATE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindSummary {
    pub kind: EstimatorKind,
    pub replicates: usize,
    pub successes: usize,
    pub failures: usize,
    pub mean_beta_hat: Option<f64>,
    pub bias: Option<f64>,
    /// Sample standard deviation of `beta_hat` across successful replicates.
    pub mc_sd: Option<f64>,
    pub mean_se: Option<f64>,
    /// Share of Wald 95% intervals covering the true `beta`.
    pub coverage: Option<f64>,
    /// `Var(beta_hat) / Var(beta_hat_naive)`.
    pub variance_ratio: Option<f64>,
    pub failure_counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub scenario: String,
    pub beta: f64,
    pub n: usize,
    pub replicates: usize,
    pub grid: usize,
    pub seed: u64,
    pub nuisance: NuisanceMode,
    pub kinds: Vec<KindSummary>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn sample_sd(xs: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let m = mean(xs)?;
    let ss: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    Some((ss / (xs.len() - 1) as f64).sqrt())
}

fn summarize(kind: EstimatorKind, beta: f64, replicates: usize, rows: &[&ReplicateRow]) -> KindSummary {
    let ok: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.is_ok())
        .filter_map(|r| Some((r.beta_hat?, r.se_hat?)))
        .collect();
    let mut failure_counts = BTreeMap::new();
    for r in rows.iter().filter(|r| !r.is_ok()) {
        *failure_counts.entry(r.status.clone()).or_insert(0) += 1;
    }
    let betas: Vec<f64> = ok.iter().map(|p| p.0).collect();
    let ses: Vec<f64> = ok.iter().map(|p| p.1).collect();
    let covered = ok.iter().filter(|(b, se)| (b - beta).abs() <= Z_975 * se).count();
    let mean_beta_hat = mean(&betas);
    KindSummary {
        kind,
        replicates,
        successes: ok.len(),
        failures: rows.len() - ok.len(),
        mean_beta_hat,
        bias: mean_beta_hat.map(|m| m - beta),
        mc_sd: sample_sd(&betas),
        mean_se: mean(&ses),
        coverage: (!ok.is_empty()).then(|| covered as f64 / ok.len() as f64),
        variance_ratio: None,
        failure_counts,
    }
}

impl SummaryTable {
    pub fn from_rows(scenario: &Scenario, rows: &[ReplicateRow]) -> Self {
        let beta = scenario.model.beta;
        let mut kinds: Vec<KindSummary> = scenario
            .kinds()
            .into_iter()
            .map(|kind| {
                let mine: Vec<&ReplicateRow> = rows.iter().filter(|r| r.kind == kind).collect();
                summarize(kind, beta, scenario.replicates, &mine)
            })
            .collect();
        let naive_sd = kinds
            .iter()
            .find(|k| k.kind == EstimatorKind::Naive)
            .and_then(|k| k.mc_sd);
        for k in &mut kinds {
            k.variance_ratio = match (k.mc_sd, naive_sd) {
                (Some(sd), Some(base)) if base > 0.0 => Some((sd / base).powi(2)),
                _ => None,
            };
        }
        Self {
            scenario: scenario.name.clone(),
            beta,
            n: scenario.n,
            replicates: scenario.replicates,
            grid: scenario.grid,
            seed: scenario.seed,
            nuisance: scenario.nuisance,
            kinds,
        }
    }

    pub fn get(&self, kind: EstimatorKind) -> Option<&KindSummary> {
        self.kinds.iter().find(|k| k.kind == kind)
    }

    /// Errors when any estimator failed in more than [`MAX_FAILURE_RATE`] of replicates.
    pub fn check_failures(&self) -> Result<()> {
        for k in &self.kinds {
            if k.failures as f64 > MAX_FAILURE_RATE * k.replicates as f64 {
                return Err(HarnessError::TooManyFailures {
                    scenario: self.scenario.clone(),
                    kind: k.kind.to_string(),
                    failures: k.failures,
                    replicates: k.replicates,
                });
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario {}  beta = {:.6}  n = {}  replicates = {}  M = {}  seed = {}  nuisance = {:?}",
            self.scenario, self.beta, self.n, self.replicates, self.grid, self.seed, self.nuisance
        );
        let _ = writeln!(
            s,
            "{:<10} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}",
            "kind", "ok", "mean", "bias", "mc_sd", "mean_se", "coverage", "var_ratio", "failed"
        );
        for k in &self.kinds {
            let _ = writeln!(
                s,
                "{:<10} {:>8} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9} {:>8}",
                k.kind.as_str(),
                k.successes,
                fmt(k.mean_beta_hat),
                fmt(k.bias),
                fmt(k.mc_sd),
                fmt(k.mean_se),
                fmt(k.coverage),
                fmt(k.variance_ratio),
                k.failures
            );
            for (cat, count) in &k.failure_counts {
                let _ = writeln!(s, "{:<10}   {count} x {cat}", "");
            }
        }
        s
    }
}
