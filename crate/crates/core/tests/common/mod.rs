#![allow(dead_code)]

use podds_core::{
    CensoringModel, CovariateLaw, DataGenerator, MonotoneSpline, OddsFunction, OddsModel, Propensity, TreatmentModel,
};

pub fn binary_z() -> DataGenerator {
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

pub fn confounded() -> DataGenerator {
    DataGenerator::new(
        OddsModel::new(2f64.ln(), OddsFunction::log_logistic(1.0, 1.0, vec![0.6]), 4.0).unwrap(),
        CensoringModel::Exponential { rate: [0.2, 0.1] },
        TreatmentModel::new(
            Propensity::Logistic {
                intercept: 0.2,
                slope: vec![0.8],
            },
            CovariateLaw::new(vec![vec![-1.0], vec![0.0], vec![1.0]], vec![0.3, 0.4, 0.3]).unwrap(),
        )
        .unwrap(),
    )
    .unwrap()
}

pub fn spline() -> DataGenerator {
    let odds = MonotoneSpline::new(
        vec![0.0, 0.5, 1.0, 2.0, 3.0],
        vec![vec![0.0, 0.3, 0.8, 2.0, 4.5], vec![0.0, 0.5, 1.1, 2.6, 5.0]],
        vec![],
    )
    .unwrap();
    DataGenerator::new(
        OddsModel::new(-0.5, OddsFunction::Spline(odds), 3.0).unwrap(),
        CensoringModel::Exponential { rate: [0.15, 0.25] },
        TreatmentModel::new(
            Propensity::Logistic {
                intercept: -0.1,
                slope: vec![0.5],
            },
            CovariateLaw::new(vec![vec![0.0], vec![1.0]], vec![0.6, 0.4]).unwrap(),
        )
        .unwrap(),
    )
    .unwrap()
}

pub fn all() -> Vec<(&'static str, DataGenerator)> {
    vec![
        ("binary_z", binary_z()),
        ("confounded", confounded()),
        ("spline", spline()),
    ]
}

/// Grid size meeting the default residual tolerance; the spline's kinks in `r'` make the
/// residual first order at the knots.
pub fn grid_size(name: &str) -> usize {
    if name == "spline" {
        4000
    } else {
        2000
    }
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
