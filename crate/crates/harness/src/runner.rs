//! Replicated Monte-Carlo runs of a scenario.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use podds_core::ide::H0Solution;
use podds_core::nuisance::build_nuisances;
use podds_core::rng::replicate_seed;
use podds_core::score::{grid_for, solve_beta, EstimatorKind};
use podds_core::{DataGenerator, Observation};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{error_kind, HarnessError, Result};
use crate::scenario::Scenario;
use crate::summary::SummaryTable;

/// One estimator on one replicate; failures keep their category and message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRow {
    pub rep: usize,
    pub seed: u64,
    pub kind: EstimatorKind,
    pub beta_hat: Option<f64>,
    pub se_hat: Option<f64>,
    pub iters: Option<usize>,
    pub ide_residual: Option<f64>,
    pub status: String,
    pub error: String,
}

impl ReplicateRow {
    fn failed(rep: usize, seed: u64, kind: EstimatorKind, err: &podds_core::Error) -> Self {
        Self {
            rep,
            seed,
            kind,
            beta_hat: None,
            se_hat: None,
            iters: None,
            ide_residual: None,
            status: error_kind(err).to_string(),
            error: err.to_string(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Estimates every requested kind on an already simulated dataset.
pub fn estimate_dataset(scenario: &Scenario, data: &[Observation], rep: usize, seed: u64) -> Vec<ReplicateRow> {
    let kinds = scenario.kinds();
    let prepared = build_nuisances(
        scenario.nuisance,
        data,
        &scenario.model,
        &scenario.censoring,
        &scenario.treatment,
    )
    .and_then(|(nuis, _)| Ok((nuis, grid_for(data, scenario.model.tau, scenario.grid)?)));
    let (nuis, grid) = match prepared {
        Ok(p) => p,
        Err(e) => return kinds.iter().map(|&k| ReplicateRow::failed(rep, seed, k, &e)).collect(),
    };
    let opts = scenario.estimator_options();
    kinds
        .iter()
        .map(|&kind| match solve_beta(data, &nuis, &grid, kind, &opts) {
            Ok(r) => ReplicateRow {
                rep,
                seed,
                kind,
                beta_hat: Some(r.beta_hat),
                se_hat: Some(r.se_hat),
                iters: Some(r.iterations),
                ide_residual: r.ide_residual,
                status: "ok".into(),
                error: String::new(),
            },
            Err(e) => ReplicateRow::failed(rep, seed, kind, &e),
        })
        .collect()
}

pub fn run_replicate(scenario: &Scenario, generator: &DataGenerator, rep: usize) -> Vec<ReplicateRow> {
    let seed = replicate_seed(scenario.seed, rep as u64);
    match generator.generate(scenario.n, seed) {
        Ok(data) => estimate_dataset(scenario, &data, rep, seed),
        Err(e) => scenario
            .kinds()
            .iter()
            .map(|&k| ReplicateRow::failed(rep, seed, k, &e))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRun {
    pub rows: Vec<ReplicateRow>,
    pub summary: SummaryTable,
}

/// Runs all replicates on `jobs` worker threads. Rows come back in replicate order
/// whatever the schedule, so the aggregate is independent of `jobs`.
pub fn run_scenario(scenario: &Scenario, jobs: usize) -> Result<ScenarioRun> {
    scenario.validate()?;
    let generator = scenario.generator()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let rows: Vec<ReplicateRow> = pool.install(|| {
        (0..scenario.replicates)
            .into_par_iter()
            .map(|rep| run_replicate(scenario, &generator, rep))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    let summary = SummaryTable::from_rows(scenario, &rows);
    Ok(ScenarioRun { rows, summary })
}

pub fn write_rows<W: Write>(rows: &[ReplicateRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| HarnessError::io("replicates.csv", e))?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ReplicateRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// `profile,t,h0,dh0,residual` for every profile of the solution.
pub fn write_h0_profiles<W: Write>(solution: &H0Solution, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["profile", "t", "h0", "dh0", "residual"])?;
    for p in solution.profiles.values() {
        let label = p.profile.label();
        for j in 0..p.grid.len() {
            w.write_record(&[
                label.clone(),
                p.grid.t(j).to_string(),
                p.h[j].to_string(),
                p.dh[j].to_string(),
                p.residual_profile[j].to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| HarnessError::io("h0_profiles.csv", e))?;
    Ok(())
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

/// Writes `replicates.csv`, `summary.json` and `summary.txt` into `dir`.
pub fn write_outputs(run: &ScenarioRun, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let csv_path = dir.join("replicates.csv");
    write_rows(&run.rows, create(&csv_path)?)?;
    let json_path = dir.join("summary.json");
    let mut json = create(&json_path)?;
    serde_json::to_writer_pretty(&mut json, &run.summary)?;
    writeln!(json).map_err(|e| HarnessError::io(&json_path, e))?;
    json.flush().map_err(|e| HarnessError::io(&json_path, e))?;
    let txt_path = dir.join("summary.txt");
    std::fs::write(&txt_path, run.summary.to_text()).map_err(|e| HarnessError::io(&txt_path, e))?;
    Ok(vec![csv_path, json_path, txt_path])
}
