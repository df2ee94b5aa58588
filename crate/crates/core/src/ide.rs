//! Projection onto the `R`-tangent space: coefficient tables and the linear Volterra
//! integro-differential equation
//!
//! ```text
//! h0'(t) = m(t) h0(t) + q(t) - v(t) * int_0^t { w(u) h0'(u) - k(u) h0(u) } du
//! ```
//!
//! solved per covariate profile on a uniform grid, together with an independent
//! evaluation of the orthogonality condition the equation encodes.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariates::{CovariateProfile, ProfileKey};
use crate::error::{Error, Result};
use crate::grid::{cumulative_trapezoid, TimeGrid};
use crate::model::treatment_weight;
use crate::nuisance::NuisanceSet;
use crate::odds::OddsFn;

/// Smallest odds density accepted on `(0, horizon]`.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Default bound on the IDE residual for a solve to count as a success.
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// `h(t, a, z)` whose projection is sought.
pub type Target<'a> = &'a (dyn Fn(f64, u8, &CovariateProfile) -> f64 + Sync);

/// `h(t, a, z) = -a`, the target that yields the efficient score.
pub fn efficient_target(_t: f64, a: u8, _z: &CovariateProfile) -> f64 {
    -(a as f64)
}

/// `pi g(1) + (1 - pi) g(0)`, written so that a constant `g` is returned exactly.
pub fn expect_given_z<G: Fn(u8) -> f64>(g: G, pi: f64) -> f64 {
    let g0 = g(0);
    g0 + pi * (g(1) - g0)
}

/// Odds density at node `j`. At `t = 0` the family may have `r = 0` or `r = inf`
/// (log-logistic with `kappa != 1`), so the node uses the average of `r` over the
/// first half cell instead.
pub fn nodal_density<F: OddsFn + ?Sized>(odds: &F, grid: &TimeGrid, j: usize, z: &CovariateProfile) -> f64 {
    if j == 0 {
        let half = 0.5 * grid.step();
        odds.odds(half, z) / half
    } else {
        odds.density(grid.t(j), z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTable {
    pub grid: TimeGrid,
    pub profile: CovariateProfile,
    pub beta: f64,
    pub m: Vec<f64>,
    /// `q = q_local + q_memory`.
    pub q: Vec<f64>,
    pub q_local: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub k: Vec<f64>,
    pub odds: Vec<f64>,
    pub density: Vec<f64>,
    /// `E[S_c e (e + R)^-2 | z]`, the common denominator.
    pub e2: Vec<f64>,
    /// `E[S_c e (e + R)^-3 | z]`.
    pub e3: Vec<f64>,
    /// `E[h S_c e^2 (e + R)^-3 | z]`.
    pub h3: Vec<f64>,
}

/// Evaluates the five coefficient functions at every grid node for profile `z`.
pub fn coefficients(
    grid: &TimeGrid,
    z: &CovariateProfile,
    beta: f64,
    nuis: &NuisanceSet,
    target: Target<'_>,
) -> Result<CoefficientTable> {
    let n = grid.len();
    let pi = nuis.propensity(z);
    let e = [treatment_weight(beta, 0), treatment_weight(beta, 1)];
    let mut table = CoefficientTable {
        grid: *grid,
        profile: z.clone(),
        beta,
        m: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
        q_local: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        k: Vec::with_capacity(n),
        odds: Vec::with_capacity(n),
        density: Vec::with_capacity(n),
        e2: Vec::with_capacity(n),
        e3: Vec::with_capacity(n),
        h3: Vec::with_capacity(n),
    };
    let singular = |t: f64, reason: String| Error::CoefficientSingularity {
        t,
        profile: z.label(),
        reason,
    };
    let mut memory_integrand = Vec::with_capacity(n);
    for j in 0..n {
        let t = grid.t(j);
        let big_r = nuis.odds(t, z);
        let r = nodal_density(nuis, grid, j, z);
        if !big_r.is_finite() || !r.is_finite() {
            return Err(singular(t, format!("R = {big_r}, r = {r}")));
        }
        if j > 0 && r < DENSITY_FLOOR {
            return Err(singular(t, format!("r = {r:e} is below {DENSITY_FLOOR:e}")));
        }
        let sc = [nuis.censor_survival(t, 0, z), nuis.censor_survival(t, 1, z)];
        let h = [target(t, 0, z), target(t, 1, z)];
        let moment = |a: u8, power: i32| {
            let ea = e[a as usize];
            sc[a as usize] * ea * (ea + big_r).powi(-power)
        };
        let e2 = expect_given_z(|a| moment(a, 2), pi);
        let e3 = expect_given_z(|a| moment(a, 3), pi);
        let e4 = expect_given_z(|a| moment(a, 4), pi);
        let h3 = expect_given_z(|a| h[a as usize] * e[a as usize] * moment(a, 3), pi);
        let h4 = expect_given_z(|a| h[a as usize] * e[a as usize] * moment(a, 4), pi);
        if !(e2 > 0.0) {
            return Err(singular(t, format!("denominator E[S_c e (e + R)^-2 | z] = {e2:e}")));
        }
        table.m.push(r * e3 / e2);
        table.q_local.push(r * h3 / e2);
        table.v.push(r / e2);
        table.w.push(e3);
        table.k.push(r * e4);
        table.odds.push(big_r);
        table.density.push(r);
        table.e2.push(e2);
        table.e3.push(e3);
        table.h3.push(h3);
        memory_integrand.push(r * h4);
    }
    let memory = cumulative_trapezoid(&memory_integrand, grid.step());
    table.q = (0..n).map(|j| table.q_local[j] + table.v[j] * memory[j]).collect();
    if table.q.iter().chain(&table.m).chain(&table.k).any(|x| !x.is_finite()) {
        return Err(singular(f64::NAN, "non-finite coefficient".into()));
    }
    Ok(table)
}

/// Steps the equation with forcing `f` from `h(0) = 0`.
///
/// Each step predicts `h` by explicit Euler, evaluates `h'` with the memory integral
/// closed by the trapezoid rule over the computed history (the new node enters
/// implicitly, which is linear in `h'`), and corrects `h` once with the trapezoid rule.
pub fn integrate(table: &CoefficientTable, forcing: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = table.grid.len();
    let dt = table.grid.step();
    let (m, v, w, k) = (&table.m, &table.v, &table.w, &table.k);
    let mut h = vec![0.0; n];
    let mut d = vec![0.0; n];
    d[0] = forcing[0];
    let mut memory = 0.0;
    for j in 0..n - 1 {
        let i = j + 1;
        let known = memory + 0.5 * dt * (w[j] * d[j] - k[j] * h[j]);
        let slope =
            |hv: f64| (m[i] * hv + forcing[i] - v[i] * (known - 0.5 * dt * k[i] * hv)) / (1.0 + 0.5 * dt * v[i] * w[i]);
        let predicted = h[j] + dt * d[j];
        let dp = slope(predicted);
        h[i] = h[j] + 0.5 * dt * (d[j] + dp);
        d[i] = slope(h[i]);
        memory = known + 0.5 * dt * (w[i] * d[i] - k[i] * h[i]);
    }
    (h, d)
}

/// Second-order finite-difference derivative of nodal values.
pub fn difference_derivative(h: &[f64], dt: f64) -> Vec<f64> {
    let n = h.len();
    let mut d = vec![0.0; n];
    for j in 1..n - 1 {
        d[j] = (h[j + 1] - h[j - 1]) / (2.0 * dt);
    }
    d[0] = (-3.0 * h[0] + 4.0 * h[1] - h[2]) / (2.0 * dt);
    d[n - 1] = (3.0 * h[n - 1] - 4.0 * h[n - 2] + h[n - 3]) / (2.0 * dt);
    d
}

/// Pointwise residual of the equation with forcing `f`, using a finite-difference
/// derivative of `h` rather than the solver's own derivative.
pub fn ide_residual(table: &CoefficientTable, forcing: &[f64], h: &[f64]) -> Vec<f64> {
    let dt = table.grid.step();
    let d = difference_derivative(h, dt);
    let inner: Vec<f64> = (0..h.len()).map(|j| table.w[j] * d[j] - table.k[j] * h[j]).collect();
    let memory = cumulative_trapezoid(&inner, dt);
    (0..h.len())
        .map(|j| (d[j] - table.m[j] * h[j] - forcing[j] + table.v[j] * memory[j]).abs())
        .collect()
}

/// Condition fixing the solution of the homogeneous part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryRule {
    /// Solve the equation as stated with `h0(0) = 0`. The orthogonality condition it
    /// encodes omits the boundary term of the integration by parts, so the result is
    /// orthogonal only to directions `h` with `h(0) = h(horizon) = 0`.
    InitialValue,
    /// `h0(0) = 0` and the full orthogonality condition: the equation gains the constant
    /// `-v(t) * C` with `C` chosen so that the pointwise term vanishes at the horizon.
    #[default]
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub rule: BoundaryRule,
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rule: BoundaryRule::Projection,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H0Profile {
    pub profile: CovariateProfile,
    pub grid: TimeGrid,
    pub h: Vec<f64>,
    pub dh: Vec<f64>,
    /// Constant `C` added through the forcing `q - v C` (0 for the initial-value rule).
    pub boundary_shift: f64,
    /// Max IDE residual on the grid.
    pub residual: f64,
    pub residual_profile: Vec<f64>,
    pub odds: Vec<f64>,
    pub density: Vec<f64>,
}

impl H0Profile {
    pub fn h_at(&self, x: f64) -> Result<f64> {
        self.grid.hermite(&self.h, &self.dh, x)
    }

    pub fn dh_at(&self, x: f64) -> Result<f64> {
        self.grid.interpolate(&self.dh, x)
    }

    /// Identically zero solution, for reductions to the naive score.
    pub fn zero(grid: &TimeGrid, profile: &CovariateProfile, nuis: &NuisanceSet) -> Self {
        let n = grid.len();
        Self {
            profile: profile.clone(),
            grid: *grid,
            h: vec![0.0; n],
            dh: vec![0.0; n],
            boundary_shift: 0.0,
            residual: 0.0,
            residual_profile: vec![0.0; n],
            odds: (0..n).map(|j| nuis.odds(grid.t(j), profile)).collect(),
            density: (0..n).map(|j| nodal_density(nuis, grid, j, profile)).collect(),
        }
    }
}

/// Pointwise term of the orthogonality condition at the last node, divided by `E2 / r`:
/// `E[D(horizon) | z]` for a solution `(h, d)`.
fn terminal_term(table: &CoefficientTable, h: f64, d: f64, with_target: bool) -> f64 {
    let j = table.grid.m;
    let target = if with_target { table.h3[j] } else { 0.0 };
    target - d * table.e2[j] / table.density[j] + h * table.e3[j]
}

/// Solves for `h0` without enforcing the residual tolerance.
pub fn solve_h0_unchecked(table: &CoefficientTable, rule: BoundaryRule) -> H0Profile {
    let (mut h, mut dh) = integrate(table, &table.q);
    let mut shift = 0.0;
    if rule == BoundaryRule::Projection {
        // The scheme is linear in the forcing, so the shifted problem is a superposition.
        let unit: Vec<f64> = table.v.iter().map(|v| -v).collect();
        let (hu, du) = integrate(table, &unit);
        let j = table.grid.m;
        let tp = terminal_term(table, h[j], dh[j], true);
        let tu = terminal_term(table, hu[j], du[j], false);
        shift = -tp / tu;
        for i in 0..h.len() {
            h[i] += shift * hu[i];
            dh[i] += shift * du[i];
        }
    }
    let forcing: Vec<f64> = table.q.iter().zip(&table.v).map(|(q, v)| q - shift * v).collect();
    let residual_profile = ide_residual(table, &forcing, &h);
    let residual = residual_profile.iter().cloned().fold(0.0, f64::max);
    H0Profile {
        profile: table.profile.clone(),
        grid: table.grid,
        h,
        dh,
        boundary_shift: shift,
        residual,
        residual_profile,
        odds: table.odds.clone(),
        density: table.density.clone(),
    }
}

/// Solves for `h0`; fails with the residual profile when the residual exceeds tolerance.
pub fn solve_h0(table: &CoefficientTable, options: &SolverOptions) -> Result<H0Profile> {
    let sol = solve_h0_unchecked(table, options.rule);
    if !(sol.residual <= options.tolerance) {
        return Err(Error::SolverFailure {
            profile: table.profile.label(),
            residual: sol.residual,
            tolerance: options.tolerance,
            residual_profile: sol.residual_profile,
        });
    }
    Ok(sol)
}

/// `h0` for every covariate profile of a dataset at one value of `beta`.
#[derive(Debug, Clone, PartialEq)]
pub struct H0Solution {
    pub beta: f64,
    pub rule: BoundaryRule,
    pub profiles: BTreeMap<ProfileKey, H0Profile>,
}

impl H0Solution {
    pub fn get(&self, z: &CovariateProfile) -> Result<&H0Profile> {
        self.profiles
            .get(&z.key())
            .ok_or_else(|| Error::InvalidConfig(format!("no h0 solution for profile {}", z.label())))
    }

    pub fn max_residual(&self) -> f64 {
        self.profiles.values().map(|p| p.residual).fold(0.0, f64::max)
    }

    pub fn zero(grid: &TimeGrid, profiles: &[CovariateProfile], nuis: &NuisanceSet) -> Self {
        Self {
            beta: f64::NAN,
            rule: BoundaryRule::InitialValue,
            profiles: profiles
                .iter()
                .map(|z| (z.key(), H0Profile::zero(grid, z, nuis)))
                .collect(),
        }
    }
}

/// Distinct profiles in first-appearance order.
pub fn distinct_profiles<'a, I: IntoIterator<Item = &'a CovariateProfile>>(zs: I) -> Vec<CovariateProfile> {
    let mut seen = BTreeMap::new();
    let mut out = Vec::new();
    for z in zs {
        if seen.insert(z.key(), ()).is_none() {
            out.push(z.clone());
        }
    }
    out
}

/// Solves for every profile (in parallel) with the efficient-score target.
pub fn solve_profiles(
    grid: &TimeGrid,
    profiles: &[CovariateProfile],
    beta: f64,
    nuis: &NuisanceSet,
    options: &SolverOptions,
) -> Result<H0Solution> {
    let solved: Result<Vec<H0Profile>> = profiles
        .par_iter()
        .map(|z| {
            let table = coefficients(grid, z, beta, nuis, &efficient_target)?;
            solve_h0(&table, options)
        })
        .collect();
    Ok(H0Solution {
        beta,
        rule: options.rule,
        profiles: solved?.into_iter().map(|p| (p.profile.key(), p)).collect(),
    })
}

/// Forcing that makes `(h, dh)` an exact solution of the discretised memory integral.
pub fn manufactured_forcing(table: &CoefficientTable, h: &[f64], dh: &[f64]) -> Vec<f64> {
    let inner: Vec<f64> = (0..h.len()).map(|j| table.w[j] * dh[j] - table.k[j] * h[j]).collect();
    let memory = cumulative_trapezoid(&inner, table.grid.step());
    (0..h.len())
        .map(|j| dh[j] - table.m[j] * h[j] + table.v[j] * memory[j])
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResidual {
    /// `max_t |E{H(t) | z}|` with `H` exactly as the pointwise-plus-running-integral display.
    pub literal: f64,
    /// Same after subtracting the boundary constant `E{int_0^horizon ... | z}`, i.e. the
    /// condition that holds for every direction `h` with only `h(0) = 0`.
    pub corrected: f64,
    pub literal_profile: Vec<f64>,
    pub corrected_profile: Vec<f64>,
}

/// Evaluates the orthogonality condition directly from its defining integrand, with
/// `Y(t)` replaced by `S(t | a, z) S_c(t | a, z)` inside the conditional expectations.
pub fn projection_condition_residual(
    grid: &TimeGrid,
    z: &CovariateProfile,
    beta: f64,
    nuis: &NuisanceSet,
    sol: &H0Profile,
    target: Target<'_>,
) -> ProjectionResidual {
    let n = grid.len();
    let pi = nuis.propensity(z);
    let mut pointwise = Vec::with_capacity(n);
    let mut running = Vec::with_capacity(n);
    for j in 0..n {
        let t = grid.t(j);
        let big_r = nuis.odds(t, z);
        let r = nodal_density(nuis, grid, j, z);
        let term = |a: u8, power: i32, with_r: bool| {
            let e = treatment_weight(beta, a);
            let lambda = r / (e + big_r);
            let s = e / (e + big_r);
            let y = s * nuis.censor_survival(t, a, z);
            let g = target(t, a, z) - sol.dh[j] / (e * lambda) + sol.h[j] / e;
            let rate = if with_r { r } else { 1.0 };
            g * e * rate * y / (e + big_r).powi(power)
        };
        pointwise.push(expect_given_z(|a| term(a, 2, false), pi));
        running.push(expect_given_z(|a| term(a, 3, true), pi));
    }
    let k = cumulative_trapezoid(&running, grid.step());
    let total = k[n - 1];
    let literal_profile: Vec<f64> = (0..n).map(|j| pointwise[j] + k[j]).collect();
    let corrected_profile: Vec<f64> = literal_profile.iter().map(|x| x - total).collect();
    let max_abs = |v: &[f64]| v.iter().map(|x| x.abs()).fold(0.0, f64::max);
    ProjectionResidual {
        literal: max_abs(&literal_profile),
        corrected: max_abs(&corrected_profile),
        literal_profile,
        corrected_profile,
    }
}

/// Pairwise orders `log2(e_i / e_{i+1})` for errors on grids that double in size.
pub fn observed_orders(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect()
}
