//! Prediction algorithms used to estimate the best predictor on each feature
//! subset, plus a cross-validated stacking ensemble over them.

mod knn;
pub(crate) mod linear;
mod screen;
mod stack;
mod stumps;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSet, OutcomeKind};
use crate::error::{Error, Result};

pub use screen::{screen_by_rank_correlation, spearman, RankScreen};
pub use stack::{fit_stack, fit_stack_rows, minimize_on_simplex, EnsembleModel, StackConfig, StackLoss};

/// A candidate learner and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LearnerSpec {
    /// Logistic regression with an L2 penalty on standardized coefficients.
    RidgeLogistic { lambda: f64 },
    /// Least squares with an L2 penalty on standardized coefficients.
    RidgeLinear { lambda: f64 },
    /// k-nearest-neighbour average on standardized features.
    Knn { k: usize },
    /// Gradient boosting of depth-one trees.
    BoostedStumps { rounds: usize, shrinkage: f64 },
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LearnerSpec::RidgeLogistic { lambda } | LearnerSpec::RidgeLinear { lambda } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::invalid(format!("ridge penalty must be >= 0, got {lambda}")));
                }
            }
            LearnerSpec::Knn { k } => {
                if k == 0 {
                    return Err(Error::invalid("knn needs k >= 1"));
                }
            }
            LearnerSpec::BoostedStumps { rounds, shrinkage } => {
                if rounds == 0 {
                    return Err(Error::invalid("boosting needs at least one round"));
                }
                if !(shrinkage > 0.0 && shrinkage <= 1.0) {
                    return Err(Error::invalid(format!("shrinkage must lie in (0, 1], got {shrinkage}")));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> String {
        match self {
            LearnerSpec::RidgeLogistic { lambda } => format!("ridge-logistic(lambda={lambda})"),
            LearnerSpec::RidgeLinear { lambda } => format!("ridge-linear(lambda={lambda})"),
            LearnerSpec::Knn { k } => format!("knn(k={k})"),
            LearnerSpec::BoostedStumps { rounds, shrinkage } => {
                format!("boosted-stumps(rounds={rounds},shrinkage={shrinkage})")
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Params {
    Constant(f64),
    Linear(linear::LinearModel),
    Knn(knn::KnnModel),
    Stumps(stumps::StumpEnsemble),
}

/// A learner fitted on one feature subset.
#[derive(Debug, Clone)]
pub struct FittedModel {
    spec: LearnerSpec,
    subset: FeatureSet,
    params: Params,
}

/// Copy the subset's columns restricted to `rows` into contiguous vectors.
pub(crate) fn gather(dataset: &Dataset, subset: &FeatureSet, rows: &[usize]) -> Vec<Vec<f64>> {
    subset
        .indices()
        .iter()
        .map(|&j| {
            let col = dataset.feature(j);
            rows.iter().map(|&i| col[i]).collect()
        })
        .collect()
}

fn check_rows(dataset: &Dataset, subset: &FeatureSet, rows: &[usize]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("cannot fit on zero rows"));
    }
    check_columns(dataset, subset)?;
    for &i in rows {
        if !dataset.outcome_observed(i) || subset.indices().iter().any(|&j| !dataset.feature_observed(i, j)) {
            return Err(Error::invalid(format!(
                "row {} has missing values in the columns used for fitting",
                i + 1
            )));
        }
    }
    Ok(())
}

fn check_columns(dataset: &Dataset, subset: &FeatureSet) -> Result<()> {
    match subset.max_index() {
        Some(j) if j >= dataset.p() => Err(Error::MissingColumn {
            required: j + 1,
            available: dataset.p(),
        }),
        _ => Ok(()),
    }
}

/// Fit `spec` on the columns in `subset`, using only `rows`.
///
/// An empty subset yields the constant model equal to the outcome mean.
pub fn fit(spec: &LearnerSpec, dataset: &Dataset, subset: &FeatureSet, rows: &[usize]) -> Result<FittedModel> {
    spec.validate()?;
    check_rows(dataset, subset, rows)?;
    let task = dataset.outcome_kind();
    let y: Vec<f64> = rows.iter().map(|&i| dataset.outcome()[i]).collect();
    let params = if subset.is_empty() {
        Params::Constant(y.iter().sum::<f64>() / y.len() as f64)
    } else {
        let x = gather(dataset, subset, rows);
        match *spec {
            LearnerSpec::RidgeLinear { lambda } => {
                Params::Linear(linear::fit_ridge_linear(&x, &y, lambda, task == OutcomeKind::Binary)?)
            }
            LearnerSpec::RidgeLogistic { lambda } => {
                if task != OutcomeKind::Binary {
                    return Err(Error::invalid("ridge-logistic requires a binary outcome"));
                }
                Params::Linear(linear::fit_ridge_logistic(&x, &y, lambda)?)
            }
            LearnerSpec::Knn { k } => Params::Knn(knn::KnnModel::fit(&x, &y, k)),
            LearnerSpec::BoostedStumps { rounds, shrinkage } => {
                Params::Stumps(stumps::StumpEnsemble::fit(&x, &y, rounds, shrinkage, task))
            }
        }
    };
    Ok(FittedModel {
        spec: spec.clone(),
        subset: subset.clone(),
        params,
    })
}

/// Fit on every row of the dataset.
pub fn fit_all(spec: &LearnerSpec, dataset: &Dataset, subset: &FeatureSet) -> Result<FittedModel> {
    let rows: Vec<usize> = (0..dataset.n()).collect();
    fit(spec, dataset, subset, &rows)
}

impl FittedModel {
    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    pub fn feature_subset(&self) -> &FeatureSet {
        &self.subset
    }

    /// Training loss after each boosting round (boosted stumps only).
    pub fn training_loss_trace(&self) -> Option<&[f64]> {
        match &self.params {
            Params::Stumps(s) => Some(s.loss_trace()),
            _ => None,
        }
    }

    /// Predict every row of `data`. Only the columns in the model's subset are read.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let rows: Vec<usize> = (0..data.n()).collect();
        self.predict_rows(data, &rows)
    }

    pub fn predict_rows(&self, data: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        check_columns(data, &self.subset)?;
        if let Params::Constant(c) = self.params {
            return Ok(vec![c; rows.len()]);
        }
        let x = gather(data, &self.subset, rows);
        Ok(self.predict_columns(&x, rows.len()))
    }

    /// Predict from columns already restricted to the model's subset.
    pub(crate) fn predict_columns(&self, x: &[Vec<f64>], n: usize) -> Vec<f64> {
        match &self.params {
            Params::Constant(c) => vec![*c; n],
            Params::Linear(m) => m.predict(x, n),
            Params::Knn(m) => m.predict(x, n),
            Params::Stumps(m) => m.predict(x, n),
        }
    }
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Binary outcome from a probit model in the first feature plus noise columns.
    pub fn probit_data(n: usize, p: usize, slope: f64, seed_value: u64) -> Dataset {
        let mut rng = seed::rng(seed_value);
        let cols: Vec<Vec<f64>> = (0..p)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y = (0..n)
            .map(|i| {
                let eta = slope * cols[0][i] + rng.sample::<f64, _>(StandardNormal);
                if eta > 0.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Dataset::complete(cols, y).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::probit_data;
    use super::*;

    fn all_specs() -> Vec<LearnerSpec> {
        vec![
            LearnerSpec::RidgeLogistic { lambda: 0.1 },
            LearnerSpec::RidgeLinear { lambda: 0.1 },
            LearnerSpec::Knn { k: 7 },
            LearnerSpec::BoostedStumps { rounds: 30, shrinkage: 0.3 },
        ]
    }

    #[test]
    fn empty_subset_is_outcome_mean() {
        let y: Vec<f64> = (0..10).map(|i| if i < 3 { 1.0 } else { 0.0 }).collect();
        let d = Dataset::complete(vec![vec![0.0; 10]], y).unwrap();
        for spec in all_specs() {
            let m = fit_all(&spec, &d, &FeatureSet::empty()).unwrap();
            let pred = m.predict(&d).unwrap();
            assert!(pred.iter().all(|&v| (v - 0.3).abs() < 1e-15), "{spec:?}");
        }
    }

    #[test]
    fn separable_problem_gives_finite_logistic_fit() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..20).map(|i| if i >= 10 { 1.0 } else { 0.0 }).collect();
        let d = Dataset::complete(vec![x], y).unwrap();
        let m = fit_all(&LearnerSpec::RidgeLogistic { lambda: 0.1 }, &d, &FeatureSet::full(1)).unwrap();
        let pred = m.predict(&d).unwrap();
        assert!(pred.iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
        assert!(pred[19] > 0.9 && pred[0] < 0.1);
    }

    #[test]
    fn knn_with_k_equal_n_is_constant_mean() {
        let d = probit_data(25, 2, 1.0, 4);
        let mean = d.outcome().iter().sum::<f64>() / 25.0;
        let m = fit_all(&LearnerSpec::Knn { k: 25 }, &d, &FeatureSet::full(2)).unwrap();
        for v in m.predict(&d).unwrap() {
            assert!((v - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_feature_is_harmless() {
        let mut d = probit_data(50, 1, 1.0, 2);
        let (on, names, mut cols, y, _) = d.clone().into_parts();
        cols.push(vec![3.0; 50]);
        let mut names = names;
        names.push("c".into());
        d = Dataset::from_parts(on, names, cols, y, vec![vec![true; 50]; 3]).unwrap();
        for spec in all_specs() {
            let m = fit_all(&spec, &d, &FeatureSet::full(2)).unwrap();
            assert!(m.predict(&d).unwrap().iter().all(|v| v.is_finite()));
        }
        let lin = fit_all(&LearnerSpec::RidgeLinear { lambda: 0.0 }, &d, &FeatureSet::full(2)).unwrap();
        if let Params::Linear(m) = &lin.params {
            assert_eq!(m.coefficients()[1], 0.0);
        }
    }

    #[test]
    fn binary_predictions_lie_in_unit_interval() {
        let d = probit_data(80, 3, 2.0, 9);
        for spec in all_specs() {
            let m = fit_all(&spec, &d, &FeatureSet::full(3)).unwrap();
            assert!(m.predict(&d).unwrap().iter().all(|&v| (0.0..=1.0).contains(&v)), "{spec:?}");
        }
    }

    #[test]
    fn predict_needs_subset_columns() {
        let d = probit_data(30, 3, 1.0, 1);
        let m = fit_all(&LearnerSpec::Knn { k: 3 }, &d, &FeatureSet::new(vec![0, 2])).unwrap();
        let narrow = probit_data(10, 2, 1.0, 2);
        assert!(matches!(m.predict(&narrow), Err(Error::MissingColumn { .. })));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let d = probit_data(30, 1, 1.0, 1);
        let s = FeatureSet::full(1);
        assert!(fit_all(&LearnerSpec::Knn { k: 0 }, &d, &s).is_err());
        assert!(fit_all(&LearnerSpec::RidgeLinear { lambda: -1.0 }, &d, &s).is_err());
        assert!(fit_all(&LearnerSpec::BoostedStumps { rounds: 10, shrinkage: 1.5 }, &d, &s).is_err());
        assert!(fit_all(&LearnerSpec::BoostedStumps { rounds: 0, shrinkage: 0.1 }, &d, &s).is_err());
    }

    #[test]
    fn fits_are_deterministic() {
        let d = probit_data(60, 2, 1.0, 3);
        for spec in all_specs() {
            let a = fit_all(&spec, &d, &FeatureSet::full(2)).unwrap().predict(&d).unwrap();
            let b = fit_all(&spec, &d, &FeatureSet::full(2)).unwrap().predict(&d).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fit_is_permutation_equivariant() {
        let d = probit_data(120, 2, 1.5, 21);
        let rows: Vec<usize> = (0..120).collect();
        let mut shuffled = rows.clone();
        shuffled.reverse();
        shuffled.rotate_left(37);
        let probe = probit_data(200, 2, 1.0, 5);
        for spec in all_specs() {
            let a = fit(&spec, &d, &FeatureSet::full(2), &rows).unwrap().predict(&probe).unwrap();
            let b = fit(&spec, &d, &FeatureSet::full(2), &shuffled).unwrap().predict(&probe).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-10, "{spec:?}: {u} vs {v}");
            }
        }
    }

    #[test]
    fn boosting_loss_never_increases() {
        for (seed, binary) in [(1u64, true), (2, false), (3, true)] {
            let mut d = probit_data(300, 3, 1.0, seed);
            if !binary {
                let (on, names, cols, _, mask) = d.into_parts();
                let y = cols[0].iter().zip(&cols[1]).map(|(a, b)| a.sin() + 0.5 * b).collect();
                d = Dataset::from_parts(on, names, cols, y, mask).unwrap();
            }
            let m = fit_all(&LearnerSpec::BoostedStumps { rounds: 80, shrinkage: 1.0 }, &d, &FeatureSet::full(3)).unwrap();
            let trace = m.training_loss_trace().unwrap();
            assert!(trace.len() > 1);
            for w in trace.windows(2) {
                assert!(w[1] <= w[0], "loss increased: {} -> {}", w[0], w[1]);
            }
        }
    }
}
