//! Per-observation scores for `beta`, the estimating equation and its sandwich variance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariates::CovariateProfile;
use crate::data::{arms_present, Observation};
use crate::error::{Error, Result};
use crate::grid::{trapezoid_to, TimeGrid};
use crate::ide::{distinct_profiles, solve_profiles, H0Profile, H0Solution, SolverOptions};
use crate::likelihood::naive_score;
use crate::model::treatment_weight;
use crate::nuisance::NuisanceSet;
use crate::odds::OddsFn;
use crate::roots::{bisect_secant, expand_bracket};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Naive,
    Efficient,
}

impl EstimatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::Efficient => "efficient",
        }
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(EstimatorKind::Naive),
            "efficient" => Ok(EstimatorKind::Efficient),
            other => Err(Error::InvalidConfig(format!("unknown estimator kind {other:?}"))),
        }
    }
}

/// How the compensator integral `int_0^X V(t) r e (e + R)^-2 dt` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Compensator {
    /// Exact antiderivative: the `h0` part integrates to `-h0(X) / (e + R(X))` and the
    /// `-A` part to `-A (1 - S(X))`.
    #[default]
    ClosedForm,
    /// Trapezoid on the grid restricted to `[0, X]`, interpolating at `X`.
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub solver: SolverOptions,
    pub compensator: Compensator,
    pub bracket: (f64, f64),
    pub bracket_limit: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self {
            solver: SolverOptions::default(),
            compensator: Compensator::ClosedForm,
            bracket: (-1.0, 1.0),
            bracket_limit: 10.0,
            tolerance: 1e-10,
            max_iter: 200,
        }
    }
}

fn checked_density(r: f64, t: f64) -> Result<f64> {
    if !(r >= 1e-12) || !r.is_finite() {
        return Err(Error::Singularity { t, density: r });
    }
    Ok(r)
}

/// `V(t) = -A - h0'(t) (e + R) / (e r) + h0(t) / e` at any `t` covered by the grid.
pub fn efficient_integrand(t: f64, obs: &Observation, beta: f64, nuis: &NuisanceSet, h0: &H0Profile) -> Result<f64> {
    let e = treatment_weight(beta, obs.a);
    let big_r = nuis.odds(t, &obs.z);
    let r = checked_density(nuis.density(t, &obs.z), t)?;
    Ok(integrand_value(obs.a, e, big_r, r, h0.h_at(t)?, h0.dh_at(t)?))
}

fn integrand_value(a: u8, e: f64, big_r: f64, r: f64, h: f64, dh: f64) -> f64 {
    -(a as f64) - dh * (e + big_r) / (e * r) + h / e
}

/// Efficient score of one observation.
pub fn efficient_score(
    obs: &Observation,
    beta: f64,
    nuis: &NuisanceSet,
    sol: &H0Solution,
    compensator: Compensator,
) -> Result<f64> {
    let h0 = sol.get(&obs.z)?;
    let grid = &h0.grid;
    if obs.x > grid.horizon * (1.0 + 1e-12) {
        return Err(Error::Horizon {
            x: obs.x,
            horizon: grid.horizon,
        });
    }
    let e = treatment_weight(beta, obs.a);
    let big_r = nuis.odds(obs.x, &obs.z);
    let surv = e / (e + big_r);
    let jump = if obs.delta == 1 {
        efficient_integrand(obs.x, obs, beta, nuis, h0)? * surv
    } else {
        0.0
    };
    let compensator = match compensator {
        Compensator::ClosedForm => -(obs.a as f64) * (1.0 - surv) - h0.h_at(obs.x)? / (e + big_r),
        Compensator::Trapezoid => {
            let values: Vec<f64> = (0..grid.len())
                .map(|j| {
                    let (rr, dr) = (h0.odds[j], h0.density[j]);
                    integrand_value(obs.a, e, rr, dr, h0.h[j], h0.dh[j]) * dr * e / (e + rr).powi(2)
                })
                .collect();
            trapezoid_to(grid, &values, obs.x)?
        }
    };
    Ok(jump - compensator)
}

/// `h0` for the profiles present in `data` at `beta` (efficient kind only).
pub fn solve_h0_for(
    data: &[Observation],
    beta: f64,
    nuis: &NuisanceSet,
    grid: &TimeGrid,
    options: &SolverOptions,
) -> Result<H0Solution> {
    let profiles = distinct_profiles(data.iter().map(|o| &o.z));
    solve_profiles(grid, &profiles, beta, nuis, options)
}

/// Scores `U_i(beta)` for every observation, re-solving `h0` at this `beta`.
pub fn score_contributions(
    data: &[Observation],
    beta: f64,
    nuis: &NuisanceSet,
    grid: &TimeGrid,
    kind: EstimatorKind,
    options: &EstimatorOptions,
) -> Result<Vec<f64>> {
    match kind {
        EstimatorKind::Naive => data.iter().map(|o| naive_score(o, beta, nuis)).collect(),
        EstimatorKind::Efficient => {
            let sol = solve_h0_for(data, beta, nuis, grid, &options.solver)?;
            data.par_iter()
                .map(|o| efficient_score(o, beta, nuis, &sol, options.compensator))
                .collect()
        }
    }
}

fn score_sum(
    data: &[Observation],
    beta: f64,
    nuis: &NuisanceSet,
    grid: &TimeGrid,
    kind: EstimatorKind,
    options: &EstimatorOptions,
) -> Result<f64> {
    // Fixed-order summation keeps results independent of thread scheduling.
    Ok(score_contributions(data, beta, nuis, grid, kind, options)?.iter().sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub kind: EstimatorKind,
    pub beta_hat: f64,
    pub se_hat: f64,
    pub n: usize,
    pub bracket: (f64, f64),
    pub iterations: usize,
    /// `sum_i U_i(beta_hat)`.
    pub score_sum: f64,
    /// Largest IDE residual at `beta_hat` (efficient kind).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ide_residual: Option<f64>,
    /// `n^-1 sum_i U_i(beta_true)` when the truth is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score_mean_at_truth: Option<f64>,
}

fn check_identified(data: &[Observation], nuis: &NuisanceSet) -> Result<()> {
    if data.is_empty() {
        return Err(Error::NoRoot("empty dataset".into()));
    }
    let (has0, has1) = arms_present(data);
    if !(has0 && has1) {
        return Err(Error::NonIdentified(
            "beta needs observations in both treatment arms".into(),
        ));
    }
    for z in distinct_profiles(data.iter().map(|o| &o.z)) {
        let p = nuis.propensity(&z);
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::NonIdentified(format!(
                "propensity {p} at profile {} leaves no treatment variation",
                z.label()
            )));
        }
    }
    Ok(())
}

/// Root of `sum_i U_i(beta)` by bracketed bisection with secant steps.
pub fn solve_beta(
    data: &[Observation],
    nuis: &NuisanceSet,
    grid: &TimeGrid,
    kind: EstimatorKind,
    options: &EstimatorOptions,
) -> Result<ScoreReport> {
    check_identified(data, nuis)?;
    let n = data.len();
    // The residual tolerance applies to the returned solution; trial values of beta far
    // from the root may be solved less accurately on the same grid.
    let trial = EstimatorOptions {
        solver: SolverOptions {
            tolerance: f64::INFINITY,
            ..options.solver
        },
        ..*options
    };
    let mut f = |b: f64| score_sum(data, b, nuis, grid, kind, &trial);
    let (lo, hi, flo, fhi) = expand_bracket(&mut f, options.bracket.0, options.bracket.1, options.bracket_limit)?;
    let root = bisect_secant(&mut f, lo, hi, flo, fhi, options.tolerance, options.max_iter)?;
    if !(root.fx.abs() < 1e-8 * n as f64) {
        return Err(Error::NoRoot(format!(
            "score sum {:e} at beta = {} exceeds {:e}",
            root.fx,
            root.x,
            1e-8 * n as f64
        )));
    }
    let ide_residual = match kind {
        EstimatorKind::Efficient => Some(solve_h0_for(data, root.x, nuis, grid, &options.solver)?.max_residual()),
        EstimatorKind::Naive => None,
    };
    let se_hat = sandwich_se(data, root.x, nuis, grid, kind, &trial)?;
    Ok(ScoreReport {
        kind,
        beta_hat: root.x,
        se_hat,
        n,
        bracket: root.bracket,
        iterations: root.iterations,
        score_sum: root.fx,
        ide_residual,
        score_mean_at_truth: None,
    })
}

/// `sqrt(C / B^2 / n)` with `B` the mean score slope by central differences and `C`
/// the mean squared score.
pub fn sandwich_se(
    data: &[Observation],
    beta_hat: f64,
    nuis: &NuisanceSet,
    grid: &TimeGrid,
    kind: EstimatorKind,
    options: &EstimatorOptions,
) -> Result<f64> {
    let n = data.len() as f64;
    let step = 1e-5 * (1.0 + beta_hat.abs());
    let up = score_sum(data, beta_hat + step, nuis, grid, kind, options)?;
    let down = score_sum(data, beta_hat - step, nuis, grid, kind, options)?;
    let slope = (up - down) / (2.0 * step) / n;
    if !(slope.abs() >= 1e-10) {
        return Err(Error::FlatScore { slope });
    }
    let c = score_contributions(data, beta_hat, nuis, grid, kind, options)?
        .iter()
        .map(|u| u * u)
        .sum::<f64>()
        / n;
    Ok((c / (slope * slope) / n).sqrt())
}

/// Default grid horizon: the configured follow-up if finite, else the largest observed time.
pub fn grid_for(data: &[Observation], tau: f64, m: usize) -> Result<TimeGrid> {
    let horizon = if tau.is_finite() {
        tau
    } else {
        data.iter().map(|o| o.x).fold(0.0, f64::max)
    };
    TimeGrid::new(horizon, m)
}

/// Profiles present in `data`, in first-appearance order.
pub fn data_profiles(data: &[Observation]) -> Vec<CovariateProfile> {
    distinct_profiles(data.iter().map(|o| &o.z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::censoring::CensoringModel;
    use crate::covariates::CovariateLaw;
    use crate::data::DataGenerator;
    use crate::model::OddsModel;
    use crate::nuisance::oracle_nuisances;
    use crate::odds::OddsFunction;
    use crate::treatment::{Propensity, TreatmentModel};
    use proptest::prelude::*;

    fn s1_like(n_rate: f64) -> DataGenerator {
        DataGenerator::new(
            OddsModel::new(2f64.ln(), OddsFunction::log_logistic(1.0, 1.0, vec![0.5]), 4.0).unwrap(),
            CensoringModel::Exponential { rate: [n_rate, n_rate] },
            TreatmentModel::new(
                Propensity::Constant { value: 0.5 },
                CovariateLaw::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap(),
            )
            .unwrap(),
        )
        .unwrap()
    }

    fn oracle(g: &DataGenerator) -> NuisanceSet {
        oracle_nuisances(&g.model, &g.censoring, &g.treatment)
    }

    #[test]
    fn zero_h0_reproduces_naive_score() {
        let g = s1_like(0.2);
        let nuis = oracle(&g);
        let data = g.generate(400, 3).unwrap();
        let grid = TimeGrid::new(4.0, 2000).unwrap();
        let sol = H0Solution::zero(&grid, &g.treatment.law.profiles(), &nuis);
        for o in &data {
            let naive = naive_score(o, 0.3, &nuis).unwrap();
            for c in [Compensator::ClosedForm, Compensator::Trapezoid] {
                let eff = efficient_score(o, 0.3, &nuis, &sol, c).unwrap();
                assert!((eff - naive).abs() < 1e-6, "{c:?}: {eff} vs {naive}");
            }
        }
    }

    #[test]
    fn integrand_examples() {
        let g = s1_like(0.2);
        let nuis = oracle(&g);
        let grid = TimeGrid::new(4.0, 100).unwrap();
        let z = CovariateProfile::new(vec![1.0]);
        let zero = H0Profile::zero(&grid, &z, &nuis);
        let treated = Observation::new(1.0, 1, 1, z.clone()).unwrap();
        assert_eq!(efficient_integrand(0.7, &treated, 0.4, &nuis, &zero).unwrap(), -1.0);
        let mut constant = zero.clone();
        constant.h.iter_mut().for_each(|h| *h = 2.5);
        let control = Observation::new(1.0, 1, 0, z).unwrap();
        assert!((efficient_integrand(0.7, &control, 0.4, &nuis, &constant).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn closed_form_and_trapezoid_compensators_agree() {
        let g = s1_like(0.2);
        let nuis = oracle(&g);
        let data = g.generate(300, 8).unwrap();
        let grid = TimeGrid::new(4.0, 2000).unwrap();
        let sol = solve_h0_for(&data, 2f64.ln(), &nuis, &grid, &SolverOptions::default()).unwrap();
        for o in &data {
            let a = efficient_score(o, 2f64.ln(), &nuis, &sol, Compensator::ClosedForm).unwrap();
            let b = efficient_score(o, 2f64.ln(), &nuis, &sol, Compensator::Trapezoid).unwrap();
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }

    #[test]
    fn equation_forms_agree_pointwise() {
        // {-A - h0'/(e lambda) + h0/e} S equals V e / (e + R)
        let g = s1_like(0.2);
        let nuis = oracle(&g);
        let data = g.generate(50, 4).unwrap();
        let grid = TimeGrid::new(4.0, 500).unwrap();
        let beta = 2f64.ln();
        let sol = solve_h0_for(
            &data,
            beta,
            &nuis,
            &grid,
            &SolverOptions {
                tolerance: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        for o in &data {
            let h0 = sol.get(&o.z).unwrap();
            let t = o.x;
            let e = treatment_weight(beta, o.a);
            let big_r = nuis.odds(t, &o.z);
            let lambda = nuis.density(t, &o.z) / (e + big_r);
            let s = e / (e + big_r);
            let lhs = (-(o.a as f64) - h0.dh_at(t).unwrap() / (e * lambda) + h0.h_at(t).unwrap() / e) * s;
            let rhs = efficient_integrand(t, o, beta, &nuis, h0).unwrap() * e / (e + big_r);
            assert!((lhs - rhs).abs() < 1e-12);
        }
    }

    #[test]
    fn beyond_grid_is_a_horizon_error() {
        let g = s1_like(0.2);
        let nuis = oracle(&g);
        let grid = TimeGrid::new(2.0, 100).unwrap();
        let z = CovariateProfile::new(vec![0.0]);
        let sol = H0Solution::zero(&grid, std::slice::from_ref(&z), &nuis);
        let o = Observation::new(3.0, 1, 1, z).unwrap();
        assert!(matches!(
            efficient_score(&o, 0.0, &nuis, &sol, Compensator::ClosedForm),
            Err(Error::Horizon { .. })
        ));
    }

    #[test]
    fn error_paths() {
        let g = s1_like(0.2);
        let nuis = oracle(&g);
        let grid = TimeGrid::new(4.0, 200).unwrap();
        let opts = EstimatorOptions::default();
        assert!(matches!(
            solve_beta(&[], &nuis, &grid, EstimatorKind::Naive, &opts),
            Err(Error::NoRoot(_))
        ));
        let mut data = g.generate(200, 1).unwrap();
        data.iter_mut().for_each(|o| o.a = 0);
        for kind in [EstimatorKind::Naive, EstimatorKind::Efficient] {
            assert!(matches!(
                solve_beta(&data, &nuis, &grid, kind, &opts),
                Err(Error::NonIdentified(_))
            ));
        }
    }

    #[test]
    fn flat_score_is_reported() {
        let g = s1_like(0.2);
        let nuis = oracle(&g);
        let grid = TimeGrid::new(4.0, 200).unwrap();
        // Controls only: the naive score is identically zero.
        let mut data = g.generate(50, 1).unwrap();
        data.iter_mut().for_each(|o| o.a = 0);
        assert!(matches!(
            sandwich_se(
                &data,
                0.0,
                &nuis,
                &grid,
                EstimatorKind::Naive,
                &EstimatorOptions::default()
            ),
            Err(Error::FlatScore { .. })
        ));
    }

    #[test]
    fn estimates_are_close_to_truth() {
        let g = s1_like(0.2);
        let nuis = oracle(&g);
        let data = g.generate(2000, 12).unwrap();
        let grid = TimeGrid::new(4.0, 2000).unwrap();
        let opts = EstimatorOptions::default();
        let naive = solve_beta(&data, &nuis, &grid, EstimatorKind::Naive, &opts).unwrap();
        let eff = solve_beta(&data, &nuis, &grid, EstimatorKind::Efficient, &opts).unwrap();
        for rep in [&naive, &eff] {
            assert!((rep.beta_hat - 2f64.ln()).abs() < 4.0 * rep.se_hat, "{rep:?}");
            assert!(rep.score_sum.abs() < 1e-8 * 2000.0);
            assert!(rep.se_hat > 0.0);
        }
        assert!(eff.ide_residual.unwrap() < 1e-4);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn root_is_invariant_to_score_scaling(scale in 0.01f64..100.0, seed in 0u64..1000) {
            let g = s1_like(0.2);
            let nuis = oracle(&g);
            let data = g.generate(300, seed).unwrap();
            let opts = EstimatorOptions::default();
            let mut f = |b: f64| -> Result<f64> {
                Ok(scale * data.iter().map(|o| naive_score(o, b, &nuis).unwrap()).sum::<f64>())
            };
            let (lo, hi, flo, fhi) = expand_bracket(&mut f, -1.0, 1.0, 10.0).unwrap();
            let scaled = bisect_secant(&mut f, lo, hi, flo, fhi, opts.tolerance, opts.max_iter).unwrap();
            let grid = TimeGrid::new(4.0, 100).unwrap();
            let plain = solve_beta(&data, &nuis, &grid, EstimatorKind::Naive, &opts).unwrap();
            prop_assert!((scaled.x - plain.beta_hat).abs() < 1e-9);
        }
    }
}
