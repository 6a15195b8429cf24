//! Predictiveness measures (AUC, R²), their influence functions, and
//! cross-fitted estimation on held-out folds.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSet, FoldAssignment, OutcomeKind};
use crate::error::{Error, Result};
use crate::learners::{fit_stack_rows, RankScreen, StackConfig};
use crate::seed;

/// Predictiveness measure used to compare prediction functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    Auc,
    #[serde(rename = "r2")]
    RSquared,
}

impl Measure {
    /// AUC for binary outcomes, R² otherwise.
    pub fn for_outcome(kind: OutcomeKind) -> Self {
        match kind {
            OutcomeKind::Binary => Measure::Auc,
            OutcomeKind::Continuous => Measure::RSquared,
        }
    }

    /// Value attained by a constant prediction.
    pub fn null_value(self) -> f64 {
        match self {
            Measure::Auc => 0.5,
            Measure::RSquared => 0.0,
        }
    }

    pub fn estimate(self, scores: &[f64], y: &[f64]) -> Result<PredictivenessEstimate> {
        match self {
            Measure::Auc => {
                let v = auc(scores, y)?;
                Ok(PredictivenessEstimate::new(v, auc_eif(scores, y, v)?))
            }
            Measure::RSquared => {
                let v = r_squared(scores, y)?;
                Ok(PredictivenessEstimate::new(v, r_squared_eif(scores, y)?))
            }
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auc" => Ok(Measure::Auc),
            "r2" | "r-squared" | "rsquared" => Ok(Measure::RSquared),
            other => Err(Error::invalid(format!("unknown measure '{other}' (expected auc or r2)"))),
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Measure::Auc => "auc",
            Measure::RSquared => "r2",
        })
    }
}

/// Point estimate of a predictiveness value with its influence-function values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictivenessEstimate {
    pub value: f64,
    #[serde(skip)]
    pub eif: Vec<f64>,
    /// mean(eif²) / n
    pub variance: f64,
}

impl PredictivenessEstimate {
    pub fn new(value: f64, eif: Vec<f64>) -> Self {
        let n = eif.len() as f64;
        debug_assert!(
            eif.iter().sum::<f64>().abs() / n.max(1.0) <= 1e-8,
            "influence function values must have mean zero"
        );
        let variance = if eif.is_empty() {
            0.0
        } else {
            eif.iter().map(|e| e * e).sum::<f64>() / (n * n)
        };
        PredictivenessEstimate { value, eif, variance }
    }

    /// Exact null-model estimate: the measure's null value with zero influence.
    pub fn null(measure: Measure, n: usize) -> Self {
        PredictivenessEstimate::new(measure.null_value(), vec![0.0; n])
    }

    pub fn standard_error(&self) -> f64 {
        self.variance.sqrt()
    }
}

fn split_classes(scores: &[f64], labels: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (&s, &y) in scores.iter().zip(labels) {
        if y == 1.0 {
            pos.push(s);
        } else if y == 0.0 {
            neg.push(s);
        } else {
            return Err(Error::invalid(format!("AUC labels must be 0 or 1, got {y}")));
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::invalid("AUC needs both outcome classes"));
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    Ok((pos, neg))
}

/// Fraction of `sorted` strictly below `t`, plus half the fraction equal to `t`.
fn below_half(sorted: &[f64], t: f64) -> f64 {
    let lt = sorted.partition_point(|&v| v < t);
    let le = sorted.partition_point(|&v| v <= t);
    (lt as f64 + 0.5 * (le - lt) as f64) / sorted.len() as f64
}

/// Fraction of `sorted` strictly above `t`, plus half the fraction equal to `t`.
fn above_half(sorted: &[f64], t: f64) -> f64 {
    let lt = sorted.partition_point(|&v| v < t);
    let le = sorted.partition_point(|&v| v <= t);
    ((sorted.len() - le) as f64 + 0.5 * (le - lt) as f64) / sorted.len() as f64
}

/// Mann–Whitney AUC with half credit for ties.
pub fn auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    let (pos, neg) = split_classes(scores, labels)?;
    // Count in half-units so the sum stays an exact integer.
    let mut twice: u64 = 0;
    for &s in &pos {
        let lt = neg.partition_point(|&v| v < s) as u64;
        let le = neg.partition_point(|&v| v <= s) as u64;
        twice += 2 * lt + (le - lt);
    }
    Ok(twice as f64 / (2.0 * pos.len() as f64 * neg.len() as f64))
}

/// Influence-function values of the AUC at each observation.
pub fn auc_eif(scores: &[f64], labels: &[f64], auc_value: f64) -> Result<Vec<f64>> {
    let (pos, neg) = split_classes(scores, labels)?;
    let n = scores.len() as f64;
    let pi1 = pos.len() as f64 / n;
    let pi0 = neg.len() as f64 / n;
    let mut eif: Vec<f64> = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            if y == 1.0 {
                (below_half(&neg, s) - auc_value) / pi1
            } else {
                (above_half(&pos, s) - auc_value) / pi0
            }
        })
        .collect();
    center(&mut eif);
    Ok(eif)
}

/// Remove floating-point residue so the empirical mean is zero to rounding.
fn center(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|e| *e -= m);
}

fn moments(pred: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if pred.len() != y.len() || y.is_empty() {
        return Err(Error::invalid("predictions and outcomes must have equal nonzero length"));
    }
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - ybar) * (v - ybar)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::invalid("R² is undefined for a constant outcome"));
    }
    let mse = pred.iter().zip(y).map(|(f, v)| (v - f) * (v - f)).sum::<f64>() / n;
    Ok((ybar, var, mse))
}

/// 1 − MSE / Var(Y), both with divisor n.
pub fn r_squared(pred: &[f64], y: &[f64]) -> Result<f64> {
    let (_, var, mse) = moments(pred, y)?;
    Ok(1.0 - mse / var)
}

pub fn r_squared_eif(pred: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    let (ybar, var, mse) = moments(pred, y)?;
    let mut eif: Vec<f64> = pred
        .iter()
        .zip(y)
        .map(|(f, v)| {
            let r = (v - f) * (v - f) - mse;
            let d = (v - ybar) * (v - ybar) - var;
            -r / var + mse * d / (var * var)
        })
        .collect();
    center(&mut eif);
    Ok(eif)
}

fn subset_tag(subset: &FeatureSet) -> u64 {
    let tags: Vec<u64> = subset.indices().iter().map(|&j| j as u64).collect();
    seed::derive(subset.len() as u64, &tags)
}

type FoldKey = (usize, FeatureSet);

/// Cross-fitted predictiveness on a fixed fold assignment, caching held-out
/// predictions by (fold, screened subset).
pub struct CrossFitter<'a> {
    dataset: &'a Dataset,
    measure: Measure,
    config: &'a StackConfig,
    seed: u64,
    train: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
    screens: Vec<Option<RankScreen>>,
    cache: Mutex<HashMap<FoldKey, Arc<Vec<f64>>>>,
}

impl<'a> CrossFitter<'a> {
    pub fn new(
        dataset: &'a Dataset,
        measure: Measure,
        config: &'a StackConfig,
        folds: &FoldAssignment,
        seed: u64,
    ) -> Result<Self> {
        dataset.require_complete("cross-fitted predictiveness")?;
        config.validate()?;
        if folds.len() != dataset.n() {
            return Err(Error::invalid(format!(
                "fold assignment covers {} rows, dataset has {}",
                folds.len(),
                dataset.n()
            )));
        }
        if folds.k() < 2 {
            return Err(Error::invalid("cross-fitting needs at least 2 folds"));
        }
        if measure == Measure::Auc && dataset.outcome_kind() != OutcomeKind::Binary {
            return Err(Error::invalid("AUC requires a binary outcome"));
        }
        let train: Vec<Vec<usize>> = (0..folds.k()).map(|v| folds.train_rows(v)).collect();
        let test: Vec<Vec<usize>> = (0..folds.k()).map(|v| folds.test_rows(v)).collect();
        let screens = train
            .iter()
            .map(|rows| config.screen.then(|| RankScreen::new(dataset, rows)))
            .collect();
        Ok(CrossFitter {
            dataset,
            measure,
            config,
            seed,
            train,
            test,
            screens,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn measure(&self) -> Measure {
        self.measure
    }

    /// Number of distinct (fold, screened subset) fits held in the cache.
    pub fn fits_performed(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    fn screened(&self, fold: usize, subset: &FeatureSet) -> FeatureSet {
        match &self.screens[fold] {
            Some(s) => s.apply(subset),
            None => subset.clone(),
        }
    }

    fn fit_fold(&self, fold: usize, subset: &FeatureSet) -> Result<Vec<f64>> {
        let s = seed::derive(self.seed, &[seed::STREAM_FIT, fold as u64, subset_tag(subset)]);
        let model = fit_stack_rows(
            &self.config.learners,
            self.dataset,
            subset,
            &self.train[fold],
            self.config.inner_folds,
            s,
        )?;
        model.predict_rows(self.dataset, &self.test[fold])
    }

    /// Estimate predictiveness for each subset; distinct fold fits run in parallel.
    pub fn estimate_many(&self, subsets: &[FeatureSet]) -> Result<Vec<PredictivenessEstimate>> {
        let k = self.train.len();
        let mut needed: Vec<FoldKey> = Vec::new();
        {
            let cache = self.cache.lock().unwrap();
            let mut seen = std::collections::HashSet::new();
            for s in subsets.iter().filter(|s| !s.is_empty()) {
                for v in 0..k {
                    let key = (v, self.screened(v, s));
                    if !cache.contains_key(&key) && seen.insert(key.clone()) {
                        needed.push(key);
                    }
                }
            }
        }
        let fitted: Vec<(FoldKey, Vec<f64>)> = needed
            .into_par_iter()
            .map(|key| self.fit_fold(key.0, &key.1).map(|p| (key, p)))
            .collect::<Result<_>>()?;
        {
            let mut cache = self.cache.lock().unwrap();
            for (key, p) in fitted {
                cache.insert(key, Arc::new(p));
            }
        }
        subsets.iter().map(|s| self.assemble(s)).collect()
    }

    pub fn estimate(&self, subset: &FeatureSet) -> Result<PredictivenessEstimate> {
        Ok(self.estimate_many(std::slice::from_ref(subset))?.remove(0))
    }

    fn assemble(&self, subset: &FeatureSet) -> Result<PredictivenessEstimate> {
        let n = self.dataset.n();
        if subset.is_empty() {
            // The constant predictor scores every row identically.
            return Ok(PredictivenessEstimate::null(self.measure, n));
        }
        let mut scores = vec![0.0; n];
        let cache = self.cache.lock().unwrap();
        for (v, rows) in self.test.iter().enumerate() {
            let pred = &cache[&(v, self.screened(v, subset))];
            for (&i, &s) in rows.iter().zip(pred.iter()) {
                scores[i] = s;
            }
        }
        drop(cache);
        self.measure.estimate(&scores, self.dataset.outcome())
    }
}

/// Cross-fitted predictiveness of the stacked ensemble on `subset`: each fold
/// is predicted by a model fit on the remaining folds, and the measure and its
/// influence function are evaluated on the pooled held-out predictions.
pub fn cv_predictiveness(
    dataset: &Dataset,
    subset: &FeatureSet,
    measure: Measure,
    config: &StackConfig,
    folds: &FoldAssignment,
    seed: u64,
) -> Result<PredictivenessEstimate> {
    CrossFitter::new(dataset, measure, config, folds, seed)?.estimate(subset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_folds;
    use crate::learners::{test_support::probit_data, LearnerSpec};
    use rand::Rng;

    fn brute_auc(s: &[f64], y: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if y[i] == 1.0 && y[j] == 0.0 {
                    den += 1.0;
                    num += if s[i] > s[j] {
                        1.0
                    } else if s[i] == s[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.2, 0.8], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[0.0, 1.0, 0.0, 1.0, 1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 0.75);
        assert!(auc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn auc_matches_pairwise_count_with_ties() {
        let mut rng = seed::rng(3);
        for _ in 0..100 {
            let n = rng.gen_range(2..40);
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            let mut y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..2) as f64).collect();
            y[0] = 0.0;
            y[1] = 1.0;
            assert_eq!(auc(&s, &y).unwrap(), brute_auc(&s, &y));
        }
    }

    #[test]
    fn perfectly_separated_eif_is_zero() {
        let s = [0.1, 0.2, 0.3, 0.7, 0.9];
        let y = [0.0, 0.0, 0.0, 1.0, 1.0];
        let a = auc(&s, &y).unwrap();
        assert!(auc_eif(&s, &y, a).unwrap().iter().all(|&e| e.abs() < 1e-15));
    }

    #[test]
    fn eif_mean_is_zero() {
        let mut rng = seed::rng(11);
        for _ in 0..50 {
            let s: Vec<f64> = (0..97).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..97).map(|i| (i % 3 == 0) as u8 as f64).collect();
            let a = auc(&s, &y).unwrap();
            let e = auc_eif(&s, &y, a).unwrap();
            assert!(e.iter().sum::<f64>().abs() / 97.0 < 1e-10);
            let r = r_squared_eif(&s, &y).unwrap();
            assert!(r.iter().sum::<f64>().abs() / 97.0 < 1e-10);
        }
    }

    #[test]
    fn r_squared_examples() {
        let y = [1.0, 3.0, 2.0, 6.0];
        assert_eq!(r_squared(&[3.0; 4], &y).unwrap(), 0.0);
        assert_eq!(r_squared(&y, &y).unwrap(), 1.0);
        assert!(r_squared(&[1.0, 2.0], &[4.0, 4.0]).is_err());
    }

    #[test]
    fn empty_subset_is_exact_null() {
        let d = probit_data(100, 2, 1.0, 5);
        let folds = make_folds(&d, 5, 1).unwrap();
        let cfg = StackConfig::new(vec![LearnerSpec::RidgeLogistic { lambda: 0.01 }]);
        let e = cv_predictiveness(&d, &FeatureSet::empty(), Measure::Auc, &cfg, &folds, 0).unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.variance, 0.0);
    }

    #[test]
    fn cache_matches_direct_calls() {
        let d = probit_data(150, 4, 1.0, 9);
        let folds = make_folds(&d, 3, 2).unwrap();
        let cfg = StackConfig::new(vec![LearnerSpec::RidgeLogistic { lambda: 0.01 }, LearnerSpec::Knn { k: 11 }]);
        let cf = CrossFitter::new(&d, Measure::Auc, &cfg, &folds, 4).unwrap();
        let subsets = vec![FeatureSet::new(vec![0]), FeatureSet::new(vec![0, 1, 2]), FeatureSet::full(4)];
        let many = cf.estimate_many(&subsets).unwrap();
        for (s, e) in subsets.iter().zip(&many) {
            let direct = cv_predictiveness(&d, s, Measure::Auc, &cfg, &folds, 4).unwrap();
            assert_eq!(direct, *e);
        }
        // Screening maps both larger subsets to their top two features.
        assert!(cf.fits_performed() <= 3 * 3);
    }

    #[test]
    fn measure_parses() {
        assert_eq!("auc".parse::<Measure>().unwrap(), Measure::Auc);
        assert_eq!("R2".parse::<Measure>().unwrap(), Measure::RSquared);
        assert!("accuracy".parse::<Measure>().is_err());
    }
}
