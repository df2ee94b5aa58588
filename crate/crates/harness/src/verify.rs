//! Verification suites with machine-readable reports.

use podds_core::grid::TimeGrid;
use podds_core::ide::{
    coefficients, efficient_target, integrate, manufactured_forcing, observed_orders, projection_condition_residual,
    solve_h0_unchecked, BoundaryRule, H0Solution, ProjectionResidual, SolverOptions,
};
use podds_core::nuisance::{oracle_nuisances, NuisanceSet};
use podds_core::rng::replicate_seed;
use podds_core::score::EstimatorKind;
use podds_core::tangent::{oracle_h0, orthogonality_battery, shipped_tower_functions, InnerProductResult};
use podds_core::{CovariateProfile, OddsModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Algebra,
    Ide,
    Orthogonality,
    Towerlaw,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Algebra, Suite::Ide, Suite::Orthogonality, Suite::Towerlaw];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Algebra => "algebra",
            Suite::Ide => "ide",
            Suite::Orthogonality => "orthogonality",
            Suite::Towerlaw => "towerlaw",
        }
    }

    /// Scenario used when none is given.
    pub fn default_scenario(&self) -> &'static str {
        match self {
            Suite::Algebra | Suite::Ide => "s1",
            Suite::Orthogonality | Suite::Towerlaw => "s2",
        }
    }
}

/// One thresholded quantity. `pass` is decided by the suite, since some checks are
/// upper bounds and others lower bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value >= threshold,
        }
    }

    fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            pass: value > threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub scenarios: Vec<String>,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner_products: Vec<InnerProductResult>,
}

impl SuiteReport {
    fn new(suite: Suite, scenarios: Vec<String>, seed: u64, checks: Vec<Check>) -> Self {
        Self {
            suite,
            scenarios,
            seed,
            pass: checks.iter().all(|c| c.pass),
            checks,
            inner_products: Vec::new(),
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub seed: u64,
    /// Grid size for `h0`.
    pub grid: usize,
    /// Monte-Carlo sample size.
    pub n: usize,
    /// Overrides the suite's default scenario.
    pub scenario: Option<Scenario>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            grid: 2000,
            n: 100_000,
            scenario: None,
        }
    }
}

pub const ALGEBRA_POINTS: usize = 64;
pub const EXACT_TOL: f64 = 1e-12;
pub const HAZARD_FD_TOL: f64 = 1e-6;
pub const REFINEMENT: [usize; 4] = [250, 500, 1000, 2000];
pub const MIN_ORDER: f64 = 2.0;
pub const PROJECTION_TOL: f64 = 1e-4;
pub const SE_MULTIPLE: f64 = 4.0;
pub const TOWER_TIME: f64 = 1.0;
pub const KS_PER_CELL: usize = 10_000;
/// Asymptotic 1% critical value of `sqrt(n) D_n`.
pub const KS_CRITICAL_1PCT: f64 = 1.6276;

pub fn run_suite(suite: Suite, config: &VerifyConfig) -> Result<SuiteReport> {
    match suite {
        Suite::Algebra => {
            let models = match &config.scenario {
                Some(s) => vec![s.clone()],
                None => ["s1", "s2", "s3-spline"]
                    .iter()
                    .map(|n| Scenario::builtin(n))
                    .collect::<Result<_>>()?,
            };
            algebra_suite(&models, config.seed)
        }
        Suite::Ide => ide_suite(&pick(suite, config)?, config.grid),
        Suite::Orthogonality => orthogonality_suite(&pick(suite, config)?, config),
        Suite::Towerlaw => tower_suite(&pick(suite, config)?, config),
    }
}

fn pick(suite: Suite, config: &VerifyConfig) -> Result<Scenario> {
    match &config.scenario {
        Some(s) => Ok(s.clone()),
        None => Scenario::builtin(suite.default_scenario()),
    }
}

/// Worst-case deviations of the exact identities over random `(t, z)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlgebraErrors {
    pub log_odds_ratio: f64,
    pub survival_identity: f64,
    /// `|hazard - FD| / (1 + |hazard|)`.
    pub hazard_fd: f64,
}

pub fn algebra_errors(scenario: &Scenario, points: usize, seed: u64) -> Result<AlgebraErrors> {
    let model: &OddsModel = &scenario.model;
    let profiles = scenario.treatment.law.profiles();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-5 * model.tau;
    let mut out = AlgebraErrors::default();
    for _ in 0..points {
        let t = (model.tau * rng.random::<f64>()).clamp(2.0 * step, model.tau - 2.0 * step);
        let z = &profiles[rng.random_range(0..profiles.len())];
        let lor = model.log_odds_ratio(t, z)?;
        out.log_odds_ratio = out.log_odds_ratio.max((lor - model.beta).abs());
        for a in [0u8, 1] {
            let s = model.survival(t, a, z)?;
            let big_lambda = model.cumulative_hazard(t, a, z)?;
            out.survival_identity = out.survival_identity.max(((-big_lambda).exp() - s).abs());
            let hz = model.hazard(t, a, z)?;
            let fd = -(model.survival(t + step, a, z)?.ln() - model.survival(t - step, a, z)?.ln()) / (2.0 * step);
            out.hazard_fd = out.hazard_fd.max((hz - fd).abs() / (1.0 + hz.abs()));
        }
    }
    Ok(out)
}

pub fn algebra_suite(scenarios: &[Scenario], seed: u64) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for s in scenarios {
        let e = algebra_errors(s, ALGEBRA_POINTS, seed)?;
        checks.push(Check::at_most(
            format!("{}:log_odds_ratio", s.name),
            e.log_odds_ratio,
            EXACT_TOL,
        ));
        checks.push(Check::at_most(
            format!("{}:exp_minus_cumhaz", s.name),
            e.survival_identity,
            EXACT_TOL,
        ));
        checks.push(Check::at_most(
            format!("{}:hazard_fd", s.name),
            e.hazard_fd,
            HAZARD_FD_TOL,
        ));
        let zero = s
            .treatment
            .law
            .profiles()
            .iter()
            .map(|z| Ok((s.model.survival(0.0, 1, z)? - 1.0).abs()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        checks.push(Check::at_most(format!("{}:survival_at_zero", s.name), zero, 0.0));
        checks.push(Check::at_most(
            format!("{}:sampling_ks_sqrt_n", s.name),
            sampling_ks(s, KS_PER_CELL, seed)?,
            KS_CRITICAL_1PCT,
        ));
    }
    let names = scenarios.iter().map(|s| s.name.clone()).collect();
    Ok(SuiteReport::new(Suite::Algebra, names, seed, checks))
}

fn oracle(scenario: &Scenario) -> NuisanceSet {
    oracle_nuisances(&scenario.model, &scenario.censoring, &scenario.treatment)
}

/// Kolmogorov-Smirnov distance between `sample` and a law with CDF `cdf` on `[0, cap)`
/// and the remaining mass as an atom at `cap`.
pub fn ks_distance<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F, cap: f64) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    let below = sample.iter().take_while(|&&x| x < cap).count();
    let mut d: f64 = 0.0;
    for (i, &x) in sample[..below].iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    // Left limit at the atom.
    d.max((below as f64 / n - cdf(cap)).abs())
}

/// Worst KS distance, scaled by `sqrt(n)`, of uncensored event times per `(a, z)` cell.
pub fn sampling_ks(scenario: &Scenario, per_cell: usize, seed: u64) -> Result<f64> {
    let generator = podds_core::DataGenerator::new(
        scenario.model.clone(),
        podds_core::CensoringModel::None,
        scenario.treatment.clone(),
    )?;
    let model = &scenario.model;
    let mut worst: f64 = 0.0;
    for (k, z) in scenario.treatment.law.profiles().into_iter().enumerate() {
        let pi = scenario.treatment.propensity(&z);
        let n = (1.5 * per_cell as f64 / pi.min(1.0 - pi)).ceil() as usize + 200;
        let data = generator.generate_given(n, replicate_seed(seed, k as u64), &z)?;
        for a in [0u8, 1] {
            let mut times: Vec<f64> = data.iter().filter(|o| o.a == a).map(|o| o.x).take(per_cell).collect();
            if times.len() < per_cell {
                return Err(crate::HarnessError::Config(format!(
                    "only {} draws in cell a={a}, z={}",
                    times.len(),
                    z.label()
                )));
            }
            let cdf = |t: f64| 1.0 - model.survival(t, a, &z).unwrap_or(f64::NAN);
            let d = ks_distance(&mut times, cdf, model.tau);
            worst = worst.max(d * (per_cell as f64).sqrt());
        }
    }
    Ok(worst)
}

/// Largest projection-rule IDE residual over profiles at the true `beta` on an `m` grid.
pub fn ide_residual_at(scenario: &Scenario, m: usize) -> Result<f64> {
    let nuis = oracle(scenario);
    let grid = TimeGrid::new(scenario.model.tau, m)?;
    let mut worst: f64 = 0.0;
    for z in scenario.treatment.law.profiles() {
        let table = coefficients(&grid, &z, scenario.model.beta, &nuis, &efficient_target)?;
        worst = worst.max(solve_h0_unchecked(&table, BoundaryRule::Projection).residual);
    }
    Ok(worst)
}

/// Largest error recovering `h = t^2` from its manufactured forcing.
pub fn manufactured_error(scenario: &Scenario, m: usize) -> Result<f64> {
    let nuis = oracle(scenario);
    let grid = TimeGrid::new(scenario.model.tau, m)?;
    let t = grid.points();
    let h: Vec<f64> = t.iter().map(|t| t * t).collect();
    let dh: Vec<f64> = t.iter().map(|t| 2.0 * t).collect();
    let mut worst: f64 = 0.0;
    for z in scenario.treatment.law.profiles() {
        let table = coefficients(&grid, &z, scenario.model.beta, &nuis, &efficient_target)?;
        let (solved, _) = integrate(&table, &manufactured_forcing(&table, &h, &dh));
        let err = solved.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// `max |h|` over both boundary rules with a zero target.
pub fn zero_target_max(scenario: &Scenario, m: usize) -> Result<f64> {
    let nuis = oracle(scenario);
    let grid = TimeGrid::new(scenario.model.tau, m)?;
    let zero = |_: f64, _: u8, _: &CovariateProfile| 0.0;
    let mut worst: f64 = 0.0;
    for z in scenario.treatment.law.profiles() {
        let table = coefficients(&grid, &z, scenario.model.beta, &nuis, &zero)?;
        for rule in [BoundaryRule::InitialValue, BoundaryRule::Projection] {
            let sol = solve_h0_unchecked(&table, rule);
            worst = sol.h.iter().chain(&sol.dh).fold(worst, |m, x| m.max(x.abs()));
        }
    }
    Ok(worst)
}

/// `h0` at the truth for every support profile, with the independent projection check.
pub fn truth_h0(
    scenario: &Scenario,
    m: usize,
    rule: BoundaryRule,
) -> Result<(H0Solution, Vec<(String, ProjectionResidual)>)> {
    let generator = scenario.generator()?;
    let opts = SolverOptions {
        rule,
        tolerance: f64::INFINITY,
    };
    let (nuis, sol) = oracle_h0(&generator, m, &opts)?;
    let grid = TimeGrid::new(scenario.model.tau, m)?;
    let residuals = sol
        .profiles
        .values()
        .map(|p| {
            let res =
                projection_condition_residual(&grid, &p.profile, scenario.model.beta, &nuis, p, &efficient_target);
            (p.profile.label(), res)
        })
        .collect();
    Ok((sol, residuals))
}

pub fn ide_suite(scenario: &Scenario, m: usize) -> Result<SuiteReport> {
    let dt = scenario.model.tau / m as f64;
    let mut checks = vec![
        Check::at_most("zero_target_max_abs_h", zero_target_max(scenario, m)?, 0.0),
        Check::at_most("manufactured_error", manufactured_error(scenario, m)?, 10.0 * dt * dt),
    ];
    let residuals: Vec<f64> = REFINEMENT
        .iter()
        .map(|&mm| ide_residual_at(scenario, mm))
        .collect::<Result<_>>()?;
    let orders = observed_orders(&residuals);
    checks.push(Check::at_most(
        "ide_residual",
        ide_residual_at(scenario, m)?,
        PROJECTION_TOL,
    ));
    checks.push(Check::at_least(
        "residual_order_min",
        orders.iter().copied().fold(f64::INFINITY, f64::min),
        MIN_ORDER,
    ));
    let manufactured: Vec<f64> = REFINEMENT
        .iter()
        .map(|&mm| manufactured_error(scenario, mm))
        .collect::<Result<_>>()?;
    checks.push(Check::at_least(
        "manufactured_order_min",
        observed_orders(&manufactured).into_iter().fold(f64::INFINITY, f64::min),
        MIN_ORDER,
    ));
    let (_, projection) = truth_h0(scenario, m, BoundaryRule::Projection)?;
    let corrected = projection.iter().map(|(_, r)| r.corrected).fold(0.0, f64::max);
    checks.push(Check::at_most("projection_condition", corrected, PROJECTION_TOL));
    let (_, literal) = truth_h0(scenario, m, BoundaryRule::InitialValue)?;
    let literal = literal.iter().map(|(_, r)| r.literal).fold(0.0, f64::max);
    checks.push(Check::at_most(
        "initial_value_rule_literal_condition",
        literal,
        PROJECTION_TOL,
    ));
    Ok(SuiteReport::new(Suite::Ide, vec![scenario.name.clone()], 0, checks))
}

pub fn orthogonality_suite(scenario: &Scenario, config: &VerifyConfig) -> Result<SuiteReport> {
    let generator = scenario.generator()?;
    let results = orthogonality_battery(
        &generator,
        config.n,
        config.seed,
        config.grid,
        &SolverOptions::default(),
    )?;
    let mut checks: Vec<Check> = results
        .iter()
        .filter(|r| r.score == EstimatorKind::Efficient)
        .map(|r| {
            Check::at_most(
                format!("efficient:{}", r.element),
                (r.estimate / r.se).abs(),
                SE_MULTIPLE,
            )
        })
        .collect();
    let probe = results
        .iter()
        .filter(|r| r.score == EstimatorKind::Naive)
        .map(|r| (r.estimate / r.se).abs())
        .fold(0.0, f64::max);
    checks.push(Check::above("naive_contrast_max_z", probe, SE_MULTIPLE));
    let mut report = SuiteReport::new(Suite::Orthogonality, vec![scenario.name.clone()], config.seed, checks);
    report.inner_products = results;
    Ok(report)
}

pub fn tower_suite(scenario: &Scenario, config: &VerifyConfig) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let mut stream = 0u64;
    for b in shipped_tower_functions(scenario.model.beta) {
        for z in scenario.treatment.law.profiles() {
            let seed = replicate_seed(config.seed, stream);
            stream += 1;
            let res = podds_core::tangent::tower_law_check(
                |t, a, z| b.value(t, a, z),
                TOWER_TIME,
                &z,
                &scenario.model,
                &scenario.censoring,
                &scenario.treatment,
                config.n,
                seed,
            )?;
            checks.push(Check::at_most(
                format!("{}@z={}", b.id(), z.label()),
                if res.se > 0.0 { res.gap / res.se } else { res.gap },
                SE_MULTIPLE,
            ));
        }
    }
    Ok(SuiteReport::new(
        Suite::Towerlaw,
        vec![scenario.name.clone()],
        config.seed,
        checks,
    ))
}
