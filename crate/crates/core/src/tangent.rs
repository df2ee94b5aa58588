//! Sample elements of the nuisance tangent spaces and Monte-Carlo checks against them.
//!
//! * `Lambda1`: `int {h'(t, Z) / r(t, Z) - h(t, Z) / (e + R(t, Z))} dM(t)` (odds function)
//! * `Lambda2`: `int alpha(t, A, Z) dM_c(t)` (censoring law)
//! * `Lambda3`: `b(A, Z)` with `E b = 0` (law of `(A, Z)`)

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::censoring::CensoringModel;
use crate::covariates::CovariateProfile;
use crate::data::{DataGenerator, Observation};
use crate::error::{Error, Result};
use crate::grid::{simpson, TimeGrid};
use crate::ide::{distinct_profiles, solve_profiles, H0Solution, SolverOptions};
use crate::likelihood::naive_score;
use crate::model::{treatment_weight, OddsModel};
use crate::nuisance::{oracle_nuisances, NuisanceSet};
use crate::odds::OddsFn;
use crate::score::{efficient_score, Compensator, EstimatorKind};
use crate::treatment::TreatmentModel;

/// Panels of the per-observation Simpson rule.
pub const SIMPSON_PANELS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    #[serde(rename = "lambda1")]
    Lambda1,
    #[serde(rename = "lambda2")]
    Lambda2,
    #[serde(rename = "lambda3")]
    Lambda3,
}

/// Directions `h(t, z)` for the odds function; all vanish at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HFunction {
    T,
    TSquared,
    TZ1,
    /// `t (tau - t)`.
    TTauMinusT {
        tau: f64,
    },
    Log1pT,
}

impl HFunction {
    pub fn value(&self, t: f64, z: &CovariateProfile) -> f64 {
        match *self {
            HFunction::T => t,
            HFunction::TSquared => t * t,
            HFunction::TZ1 => t * z.z1(),
            HFunction::TTauMinusT { tau } => t * (tau - t),
            HFunction::Log1pT => t.ln_1p(),
        }
    }

    pub fn derivative(&self, t: f64, z: &CovariateProfile) -> f64 {
        match *self {
            HFunction::T => 1.0,
            HFunction::TSquared => 2.0 * t,
            HFunction::TZ1 => z.z1(),
            HFunction::TTauMinusT { tau } => tau - 2.0 * t,
            HFunction::Log1pT => 1.0 / (1.0 + t),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            HFunction::T => "h=t",
            HFunction::TSquared => "h=t^2",
            HFunction::TZ1 => "h=t*z1",
            HFunction::TTauMinusT { .. } => "h=t*(tau-t)",
            HFunction::Log1pT => "h=log(1+t)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaFunction {
    One,
    A,
    Z1,
    TA,
    T,
}

impl AlphaFunction {
    pub fn value(&self, t: f64, a: u8, z: &CovariateProfile) -> f64 {
        let a = a as f64;
        match self {
            AlphaFunction::One => 1.0,
            AlphaFunction::A => a,
            AlphaFunction::Z1 => z.z1(),
            AlphaFunction::TA => t * a,
            AlphaFunction::T => t,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            AlphaFunction::One => "alpha=1",
            AlphaFunction::A => "alpha=a",
            AlphaFunction::Z1 => "alpha=z1",
            AlphaFunction::TA => "alpha=t*a",
            AlphaFunction::T => "alpha=t",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BFunction {
    A,
    Z1,
    AZ1,
    Z1Squared,
    AZ1Squared,
}

impl BFunction {
    pub fn value(&self, a: u8, z: &CovariateProfile) -> f64 {
        let a = a as f64;
        let z1 = z.z1();
        match self {
            BFunction::A => a,
            BFunction::Z1 => z1,
            BFunction::AZ1 => a * z1,
            BFunction::Z1Squared => z1 * z1,
            BFunction::AZ1Squared => a * z1 * z1,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            BFunction::A => "b=a",
            BFunction::Z1 => "b=z1",
            BFunction::AZ1 => "b=a*z1",
            BFunction::Z1Squared => "b=z1^2",
            BFunction::AZ1Squared => "b=a*z1^2",
        }
    }
}

/// `B(t, a, z)` functions for the tower-law check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TowerFunction {
    One,
    /// `e^{beta a}`.
    TreatmentWeight {
        beta: f64,
    },
    /// `t a (1 + z1^2)`.
    TimeArmCovariate,
}

impl TowerFunction {
    pub fn value(&self, t: f64, a: u8, z: &CovariateProfile) -> f64 {
        match self {
            TowerFunction::One => 1.0,
            TowerFunction::TreatmentWeight { beta } => treatment_weight(*beta, a),
            TowerFunction::TimeArmCovariate => t * a as f64 * (1.0 + z.z1() * z.z1()),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            TowerFunction::One => "B=1",
            TowerFunction::TreatmentWeight { .. } => "B=exp(beta*a)",
            TowerFunction::TimeArmCovariate => "B=t*a*(1+z1^2)",
        }
    }
}

pub fn shipped_tower_functions(beta: f64) -> [TowerFunction; 3] {
    [
        TowerFunction::One,
        TowerFunction::TreatmentWeight { beta },
        TowerFunction::TimeArmCovariate,
    ]
}

/// `lambda1` element indexed by `h` for one observation.
pub fn lambda1_element<H, D>(obs: &Observation, h: H, dh: D, beta: f64, odds: &dyn OddsFn) -> Result<f64>
where
    H: Fn(f64, &CovariateProfile) -> f64,
    D: Fn(f64, &CovariateProfile) -> f64,
{
    let e = treatment_weight(beta, obs.a);
    let z = &obs.z;
    let jump = if obs.delta == 1 {
        let r = odds.density(obs.x, z);
        let slope = dh(obs.x, z);
        let ratio = if slope == 0.0 {
            0.0
        } else if r > 0.0 {
            slope / r
        } else {
            return Err(Error::Singularity { t: obs.x, density: r });
        };
        ratio - h(obs.x, z) / (e + odds.odds(obs.x, z))
    } else {
        0.0
    };
    // Compensator: int_0^X {h' - h r / (e + R)} / (e + R) dt.
    let integrand = |t: f64| {
        let big_r = odds.odds(t, z);
        let hv = h(t, z);
        let drift = if hv == 0.0 {
            0.0
        } else {
            hv * odds.density(t, z) / (e + big_r)
        };
        (dh(t, z) - drift) / (e + big_r)
    };
    Ok(jump - simpson(integrand, 0.0, obs.x, SIMPSON_PANELS))
}

/// Closed form of the `lambda1` compensator, `h(X) / (e + R(X)) - h(0) / e`.
pub fn lambda1_compensator_closed_form(obs: &Observation, h: &HFunction, beta: f64, odds: &dyn OddsFn) -> f64 {
    let e = treatment_weight(beta, obs.a);
    h.value(obs.x, &obs.z) / (e + odds.odds(obs.x, &obs.z)) - h.value(0.0, &obs.z) / e
}

/// `lambda2` element: `alpha(X) 1{censored before tau} - int_0^X alpha lambda_c dt`.
pub fn lambda2_element<F>(obs: &Observation, alpha: F, censoring: &CensoringModel, tau: f64) -> f64
where
    F: Fn(f64, u8, &CovariateProfile) -> f64,
{
    let jump = if obs.delta == 0 && obs.x < tau {
        alpha(obs.x, obs.a, &obs.z)
    } else {
        0.0
    };
    let comp = simpson(
        |t| alpha(t, obs.a, &obs.z) * censoring.hazard(t, obs.a, &obs.z),
        0.0,
        obs.x,
        SIMPSON_PANELS,
    );
    jump - comp
}

/// `lambda3` element: `b(A, Z) - E b(A, Z)` with the exact mean over the law.
pub fn lambda3_element<F>(obs: &Observation, b: F, treatment: &TreatmentModel) -> f64
where
    F: Fn(u8, &CovariateProfile) -> f64,
{
    b(obs.a, &obs.z) - treatment.expectation(&b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "space", content = "index", rename_all = "snake_case")]
pub enum ElementSpec {
    Lambda1(HFunction),
    Lambda2(AlphaFunction),
    Lambda3(BFunction),
}

/// A tangent-space element bound to the data-generating truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceElement {
    pub space: Space,
    pub id: String,
    pub spec: ElementSpec,
}

impl SpaceElement {
    pub fn new(spec: ElementSpec) -> Self {
        let (space, id) = match &spec {
            ElementSpec::Lambda1(h) => (Space::Lambda1, h.id()),
            ElementSpec::Lambda2(a) => (Space::Lambda2, a.id()),
            ElementSpec::Lambda3(b) => (Space::Lambda3, b.id()),
        };
        Self {
            space,
            id: id.to_string(),
            spec,
        }
    }

    pub fn evaluate(&self, obs: &Observation, truth: &DataGenerator) -> Result<f64> {
        match self.spec {
            ElementSpec::Lambda1(h) => lambda1_element(
                obs,
                |t, z| h.value(t, z),
                |t, z| h.derivative(t, z),
                truth.model.beta,
                &truth.model.odds,
            ),
            ElementSpec::Lambda2(a) => Ok(lambda2_element(
                obs,
                |t, aa, z| a.value(t, aa, z),
                &truth.censoring,
                truth.model.tau,
            )),
            ElementSpec::Lambda3(b) => Ok(lambda3_element(obs, |aa, z| b.value(aa, z), &truth.treatment)),
        }
    }
}

/// The fifteen shipped elements, five per space.
pub fn shipped_elements(tau: f64) -> Vec<SpaceElement> {
    let hs = [
        HFunction::T,
        HFunction::TSquared,
        HFunction::TZ1,
        HFunction::TTauMinusT { tau },
        HFunction::Log1pT,
    ];
    let alphas = [
        AlphaFunction::One,
        AlphaFunction::A,
        AlphaFunction::Z1,
        AlphaFunction::TA,
        AlphaFunction::T,
    ];
    let bs = [
        BFunction::A,
        BFunction::Z1,
        BFunction::AZ1,
        BFunction::Z1Squared,
        BFunction::AZ1Squared,
    ];
    hs.into_iter()
        .map(ElementSpec::Lambda1)
        .chain(alphas.into_iter().map(ElementSpec::Lambda2))
        .chain(bs.into_iter().map(ElementSpec::Lambda3))
        .map(SpaceElement::new)
        .collect()
}

/// Sample mean and standard error of `x * y` over `data`.
pub fn inner_product_on<X, Y>(data: &[Observation], x: X, y: Y) -> Result<(f64, f64)>
where
    X: Fn(&Observation) -> Result<f64> + Sync,
    Y: Fn(&Observation) -> Result<f64> + Sync,
{
    let products: Vec<f64> = data.par_iter().map(|o| Ok(x(o)? * y(o)?)).collect::<Result<_>>()?;
    Ok(mean_and_se(&products))
}

pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Simulates `n` observations and estimates `E[x y]`.
pub fn mc_inner_product<X, Y>(x: X, y: Y, generator: &DataGenerator, n: usize, seed: u64) -> Result<(f64, f64)>
where
    X: Fn(&Observation) -> Result<f64> + Sync,
    Y: Fn(&Observation) -> Result<f64> + Sync,
{
    if n < 1000 {
        return Err(Error::InvalidConfig(format!("n = {n} is below 1000")));
    }
    let data = generator.generate(n, seed)?;
    inner_product_on(&data, x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerProductResult {
    pub score: EstimatorKind,
    pub space: Space,
    pub element: String,
    pub estimate: f64,
    pub se: f64,
    /// `|estimate| <= 4 se`.
    pub pass: bool,
}

/// Oracle nuisances and `h0` at the truth on a grid over `[0, tau]`.
pub fn oracle_h0(truth: &DataGenerator, m: usize, options: &SolverOptions) -> Result<(NuisanceSet, H0Solution)> {
    let nuis = oracle_nuisances(&truth.model, &truth.censoring, &truth.treatment);
    let grid = TimeGrid::new(truth.model.tau, m)?;
    let profiles = distinct_profiles(truth.treatment.law.profiles().iter());
    let sol = solve_profiles(&grid, &profiles, truth.model.beta, &nuis, options)?;
    Ok((nuis, sol))
}

/// Inner products of the naive and efficient scores with every shipped element on a
/// single simulated sample of size `n`.
pub fn orthogonality_battery(
    truth: &DataGenerator,
    n: usize,
    seed: u64,
    m: usize,
    options: &SolverOptions,
) -> Result<Vec<InnerProductResult>> {
    if !truth.model.tau.is_finite() {
        return Err(Error::InvalidConfig("the battery needs a finite horizon".into()));
    }
    let (nuis, sol) = oracle_h0(truth, m, options)?;
    let beta = truth.model.beta;
    let data = truth.generate(n, seed)?;
    let scores: Vec<[f64; 2]> = data
        .par_iter()
        .map(|o| {
            Ok([
                naive_score(o, beta, &nuis)?,
                efficient_score(o, beta, &nuis, &sol, Compensator::ClosedForm)?,
            ])
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for elem in shipped_elements(truth.model.tau) {
        let values: Vec<f64> = data
            .par_iter()
            .map(|o| elem.evaluate(o, truth))
            .collect::<Result<_>>()?;
        for (slot, kind) in [EstimatorKind::Naive, EstimatorKind::Efficient].into_iter().enumerate() {
            let products: Vec<f64> = values.iter().zip(&scores).map(|(v, s)| v * s[slot]).collect();
            let (estimate, se) = mean_and_se(&products);
            out.push(InnerProductResult {
                score: kind,
                space: elem.space,
                element: elem.id.clone(),
                estimate,
                se,
                pass: estimate.abs() <= 4.0 * se,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TowerLawResult {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub se: f64,
}

/// Compares the Monte-Carlo mean of `B(t, A, z) Y(t)` given `Z = z` with the exact
/// `E[B S S_c | Z = z]`.
pub fn tower_law_check<B>(
    b: B,
    t: f64,
    z: &CovariateProfile,
    model: &OddsModel,
    censoring: &CensoringModel,
    treatment: &TreatmentModel,
    n: usize,
    seed: u64,
) -> Result<TowerLawResult>
where
    B: Fn(f64, u8, &CovariateProfile) -> f64 + Sync,
{
    let generator = DataGenerator::new(model.clone(), censoring.clone(), treatment.clone())?;
    let data = generator.generate_given(n, seed, z)?;
    let values: Vec<f64> = data
        .iter()
        .map(|o| if o.at_risk(t) { b(t, o.a, &o.z) } else { 0.0 })
        .collect();
    let (lhs, se) = mean_and_se(&values);
    let pi = treatment.propensity(z);
    let exact = |a: u8| -> Result<f64> { Ok(b(t, a, z) * model.survival(t, a, z)? * censoring.survival(t, a, z)) };
    let rhs = pi * exact(1)? + (1.0 - pi) * exact(0)?;
    Ok(TowerLawResult {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
        se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::CovariateLaw;
    use crate::likelihood::{log_likelihood, LikelihoodTerms};
    use crate::odds::OddsFunction;
    use crate::treatment::Propensity;

    fn truth() -> DataGenerator {
        DataGenerator::new(
            OddsModel::new(2f64.ln(), OddsFunction::log_logistic(1.0, 1.0, vec![0.5]), 4.0).unwrap(),
            CensoringModel::Exponential { rate: [0.2, 0.2] },
            TreatmentModel::new(
                Propensity::Constant { value: 0.5 },
                CovariateLaw::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap(),
            )
            .unwrap(),
        )
        .unwrap()
    }

    /// `R + gamma h` as an odds function.
    struct Perturbed<'a> {
        base: &'a OddsFunction,
        h: HFunction,
        gamma: f64,
    }

    impl OddsFn for Perturbed<'_> {
        fn odds(&self, t: f64, z: &CovariateProfile) -> f64 {
            self.base.odds(t, z) + self.gamma * self.h.value(t, z)
        }
        fn density(&self, t: f64, z: &CovariateProfile) -> f64 {
            self.base.density(t, z) + self.gamma * self.h.derivative(t, z)
        }
    }

    #[test]
    fn zero_indices_give_zero() {
        let g = truth();
        let data = g.generate(50, 1).unwrap();
        for o in &data {
            assert_eq!(
                lambda1_element(o, |_, _| 0.0, |_, _| 0.0, 0.3, &g.model.odds).unwrap(),
                0.0
            );
            assert_eq!(lambda2_element(o, |_, _, _| 0.0, &g.censoring, 4.0), 0.0);
            assert_eq!(lambda3_element(o, |_, _| 2.0, &g.treatment), 0.0);
        }
    }

    #[test]
    fn lambda2_vanishes_without_censoring() {
        let g = truth();
        let uncensored = DataGenerator::new(g.model.clone(), CensoringModel::None, g.treatment.clone()).unwrap();
        for o in &uncensored.generate(200, 4).unwrap() {
            assert_eq!(
                lambda2_element(o, |t, a, _| 1.0 + t * a as f64, &CensoringModel::None, 4.0),
                0.0
            );
        }
    }

    #[test]
    fn lambda3_centres_exactly() {
        let law = CovariateLaw::degenerate(vec![]);
        let tm = TreatmentModel::new(Propensity::Constant { value: 0.5 }, law).unwrap();
        let o = Observation::new(1.0, 1, 1, CovariateProfile::new(vec![])).unwrap();
        assert_eq!(lambda3_element(&o, |a, _| a as f64, &tm), 0.5);
        let g = truth();
        for b in [BFunction::A, BFunction::AZ1, BFunction::Z1Squared] {
            let mean = g
                .treatment
                .expectation(|a, z| b.value(a, z) - g.treatment.expectation(|aa, zz| b.value(aa, zz)));
            assert!(mean.abs() < 1e-15);
        }
    }

    #[test]
    fn lambda1_is_the_submodel_score() {
        let g = truth();
        let data = g.generate(40, 6).unwrap();
        for h in [
            HFunction::T,
            HFunction::TSquared,
            HFunction::TZ1,
            HFunction::TTauMinusT { tau: 4.0 },
            HFunction::Log1pT,
        ] {
            for o in &data {
                let ll = |gamma: f64| {
                    let p = Perturbed {
                        base: &g.model.odds,
                        h,
                        gamma,
                    };
                    log_likelihood(
                        o,
                        g.model.beta,
                        &p,
                        &CensoringModel::None,
                        None,
                        LikelihoodTerms::FAILURE_ONLY,
                    )
                    .unwrap()
                };
                let eps = 1e-6;
                let fd = (ll(eps) - ll(-eps)) / (2.0 * eps);
                let elem = SpaceElement::new(ElementSpec::Lambda1(h)).evaluate(o, &g).unwrap();
                assert!((fd - elem).abs() < 1e-5, "{}: {fd} vs {elem}", h.id());
            }
        }
    }

    #[test]
    fn simpson_matches_closed_form_compensator() {
        let g = truth();
        let data = g.generate(100, 2).unwrap();
        for h in [HFunction::T, HFunction::TZ1, HFunction::Log1pT] {
            for o in &data {
                let elem = lambda1_element(
                    o,
                    |t, z| h.value(t, z),
                    |t, z| h.derivative(t, z),
                    g.model.beta,
                    &g.model.odds,
                )
                .unwrap();
                let e = treatment_weight(g.model.beta, o.a);
                let jump = if o.delta == 1 {
                    h.derivative(o.x, &o.z) / g.model.odds.density(o.x, &o.z)
                        - h.value(o.x, &o.z) / (e + g.model.odds.odds(o.x, &o.z))
                } else {
                    0.0
                };
                let closed = jump - lambda1_compensator_closed_form(o, &h, g.model.beta, &g.model.odds);
                assert!((elem - closed).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_element_inner_product_is_zero() {
        let g = truth();
        let (est, se) = mc_inner_product(|_| Ok(1.0), |_| Ok(0.0), &g, 1000, 3).unwrap();
        assert_eq!((est, se), (0.0, 0.0));
        assert!(mc_inner_product(|_| Ok(1.0), |_| Ok(1.0), &g, 10, 3).is_err());
    }

    #[test]
    fn tower_law_at_origin() {
        let g = truth();
        let z = CovariateProfile::new(vec![1.0]);
        let res = tower_law_check(|_, _, _| 1.0, 0.0, &z, &g.model, &g.censoring, &g.treatment, 2000, 5).unwrap();
        assert_eq!(res.rhs, 1.0);
        assert_eq!(res.lhs, 1.0);
    }

    #[test]
    fn elements_are_mean_zero() {
        let g = truth();
        let data = g.generate(20_000, 77).unwrap();
        for elem in shipped_elements(4.0) {
            let vals: Vec<f64> = data.iter().map(|o| elem.evaluate(o, &g).unwrap()).collect();
            let (m, se) = mean_and_se(&vals);
            assert!(m.abs() <= 4.0 * se, "{}: {m} +- {se}", elem.id);
        }
    }
}
