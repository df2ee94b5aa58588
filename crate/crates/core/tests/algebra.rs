mod common;

use podds_core::{CovariateProfile, OddsFunction, OddsModel};
use proptest::prelude::*;

fn loglogistic(beta: f64, alpha: f64, kappa: f64, gamma: f64) -> OddsModel {
    OddsModel::new(beta, OddsFunction::log_logistic(alpha, kappa, vec![gamma]), 10.0).unwrap()
}

proptest! {
    #[test]
    fn odds_ratio_is_constant(
        beta in -3.0f64..3.0,
        alpha in 0.2f64..5.0,
        kappa in 0.3f64..3.0,
        gamma in -1.0f64..1.0,
        t in 0.01f64..10.0,
        z in -2.0f64..2.0,
    ) {
        let m = loglogistic(beta, alpha, kappa, gamma);
        let lor = m.log_odds_ratio(t, &CovariateProfile::new(vec![z])).unwrap();
        prop_assert!((lor - beta).abs() < 1e-12 * (1.0 + beta.abs()));
    }

    #[test]
    fn survival_is_exp_of_minus_cumulative_hazard(
        beta in -3.0f64..3.0,
        kappa in 0.3f64..3.0,
        t in 0.0f64..10.0,
        a in 0u8..2,
    ) {
        let m = loglogistic(beta, 1.3, kappa, 0.4);
        let z = CovariateProfile::new(vec![1.0]);
        let s = m.survival(t, a, &z).unwrap();
        let lam = m.cumulative_hazard(t, a, &z).unwrap();
        prop_assert!(((-lam).exp() - s).abs() < 1e-12);
        prop_assert!(s > 0.0 && s <= 1.0);
    }

    #[test]
    fn survival_is_nonincreasing(
        beta in -2.0f64..2.0,
        kappa in 0.3f64..3.0,
        t in 0.0f64..9.0,
        dt in 0.0f64..1.0,
        a in 0u8..2,
    ) {
        let m = loglogistic(beta, 0.8, kappa, -0.3);
        let z = CovariateProfile::new(vec![0.5]);
        prop_assert!(m.survival(t + dt, a, &z).unwrap() <= m.survival(t, a, &z).unwrap());
    }

    #[test]
    fn inversion_recovers_the_draw(u in 0.01f64..0.99, a in 0u8..2, beta in -2.0f64..2.0) {
        let m = loglogistic(beta, 1.0, 1.5, 0.2);
        let z = CovariateProfile::new(vec![1.0]);
        let t = m.sample_event_time(a, &z, u).unwrap();
        if t < m.tau {
            prop_assert!((m.survival(t, a, &z).unwrap() - u).abs() < 1e-10);
        } else {
            prop_assert!(m.survival(m.tau, a, &z).unwrap() >= u - 1e-12);
        }
    }
}

#[test]
fn hazard_is_minus_log_survival_slope_for_every_shipped_model() {
    for (name, truth) in common::all() {
        let m = &truth.model;
        for z in truth.treatment.law.profiles() {
            for i in 1..64 {
                let t = m.tau * i as f64 / 64.0;
                let h = 1e-5;
                for a in [0u8, 1] {
                    let fd =
                        -(m.survival(t + h, a, &z).unwrap().ln() - m.survival(t - h, a, &z).unwrap().ln()) / (2.0 * h);
                    let hz = m.hazard(t, a, &z).unwrap();
                    assert!((fd - hz).abs() < 1e-6 * (1.0 + hz), "{name} t={t}: {fd} vs {hz}");
                }
            }
        }
    }
}

#[test]
fn odds_integrate_their_density() {
    for (name, truth) in common::all() {
        for z in truth.treatment.law.profiles() {
            let f = &truth.model.odds;
            use podds_core::OddsFn;
            for &t in &[0.5, 1.7, truth.model.tau] {
                let integral = podds_core::grid::simpson(|u| f.density(u, &z), 0.0, t, 4000);
                assert!((integral - f.odds(t, &z)).abs() < 1e-6, "{name} t={t}");
            }
            assert_eq!(f.odds(0.0, &z), 0.0);
        }
    }
}
