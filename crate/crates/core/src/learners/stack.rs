//! Stacked ensemble: convex combination of candidate learners with weights
//! chosen to minimize cross-validated loss.

use serde::{Deserialize, Serialize};

use super::{fit, FittedModel, LearnerSpec};
use crate::data::{Dataset, FeatureSet, FoldAssignment, OutcomeKind};
use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-10;
const LOG_LOSS_EPS: f64 = 1e-6;

/// Candidate library and cross-validation settings for the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    pub learners: Vec<LearnerSpec>,
    #[serde(default = "default_inner_folds")]
    pub inner_folds: usize,
    /// Apply the rank-correlation screen before fitting subsets.
    #[serde(default = "default_screen")]
    pub screen: bool,
}

fn default_inner_folds() -> usize {
    3
}

fn default_screen() -> bool {
    true
}

impl StackConfig {
    pub fn new(learners: Vec<LearnerSpec>) -> Self {
        StackConfig {
            learners,
            inner_folds: default_inner_folds(),
            screen: default_screen(),
        }
    }

    /// General-purpose library for the given outcome type.
    pub fn default_for(kind: OutcomeKind) -> Self {
        let linear = match kind {
            OutcomeKind::Binary => LearnerSpec::RidgeLogistic { lambda: 1e-3 },
            OutcomeKind::Continuous => LearnerSpec::RidgeLinear { lambda: 1e-3 },
        };
        StackConfig::new(vec![
            linear,
            LearnerSpec::Knn { k: 25 },
            LearnerSpec::BoostedStumps {
                rounds: 100,
                shrinkage: 0.1,
            },
        ])
    }

    pub fn without_screen(mut self) -> Self {
        self.screen = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.learners.is_empty() {
            return Err(Error::invalid("learner library is empty"));
        }
        if self.inner_folds < 2 {
            return Err(Error::invalid("inner cross-validation needs at least 2 folds"));
        }
        self.learners.iter().try_for_each(LearnerSpec::validate)
    }
}

/// Loss minimized by the ensemble weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StackLoss {
    Log,
    Squared,
}

impl StackLoss {
    pub fn for_outcome(kind: OutcomeKind) -> Self {
        match kind {
            OutcomeKind::Binary => StackLoss::Log,
            OutcomeKind::Continuous => StackLoss::Squared,
        }
    }
}

/// Convex combination of fitted members.
#[derive(Debug, Clone)]
pub struct EnsembleModel {
    members: Vec<FittedModel>,
    weights: Vec<f64>,
}

impl EnsembleModel {
    pub fn new(members: Vec<FittedModel>, weights: Vec<f64>) -> Result<Self> {
        if members.is_empty() || members.len() != weights.len() {
            return Err(Error::invalid("ensemble needs one weight per member"));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::invalid("ensemble weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(format!("ensemble weights sum to {total}, not 1")));
        }
        Ok(EnsembleModel { members, weights })
    }

    pub fn members(&self) -> &[FittedModel] {
        &self.members
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let rows: Vec<usize> = (0..data.n()).collect();
        self.predict_rows(data, &rows)
    }

    pub fn predict_rows(&self, data: &Dataset, rows: &[usize]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; rows.len()];
        for (m, &w) in self.members.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            let pred = m.predict_rows(data, rows)?;
            for (o, v) in out.iter_mut().zip(pred) {
                *o += w * v;
            }
        }
        Ok(out)
    }
}

fn combine(z: &[Vec<f64>], w: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (col, &wk) in z.iter().zip(w) {
        for (o, v) in out.iter_mut().zip(col) {
            *o += wk * v;
        }
    }
    out
}

/// Mean loss of the combination `z * w` against `y`.
pub(crate) fn stack_loss(z: &[Vec<f64>], w: &[f64], y: &[f64], loss: StackLoss) -> f64 {
    let n = y.len();
    let f = combine(z, w, n);
    match loss {
        StackLoss::Squared => f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64,
        StackLoss::Log => {
            f.iter()
                .zip(y)
                .map(|(&a, &t)| {
                    let q = LOG_LOSS_EPS + (1.0 - 2.0 * LOG_LOSS_EPS) * a;
                    -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
                })
                .sum::<f64>()
                / n as f64
        }
    }
}

fn stack_gradient(z: &[Vec<f64>], w: &[f64], y: &[f64], loss: StackLoss) -> Vec<f64> {
    let n = y.len();
    let f = combine(z, w, n);
    let dl: Vec<f64> = match loss {
        StackLoss::Squared => f.iter().zip(y).map(|(a, b)| 2.0 * (a - b)).collect(),
        StackLoss::Log => f
            .iter()
            .zip(y)
            .map(|(&a, &t)| {
                let s = 1.0 - 2.0 * LOG_LOSS_EPS;
                let q = LOG_LOSS_EPS + s * a;
                -s * (t / q - (1.0 - t) / (1.0 - q))
            })
            .collect(),
    };
    z.iter()
        .map(|col| col.iter().zip(&dl).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Minimize the mean loss of `sum_k w_k z_k` over the simplex by projected
/// gradient descent with backtracking.
///
/// `z` holds one prediction vector per candidate.
pub fn minimize_on_simplex(z: &[Vec<f64>], y: &[f64], loss: StackLoss) -> Vec<f64> {
    let m = z.len();
    if m == 1 {
        return vec![1.0];
    }
    let mut w = vec![1.0 / m as f64; m];
    let mut cur = stack_loss(z, &w, y, loss);
    let mut step = 1.0;
    for _ in 0..5000 {
        let g = stack_gradient(z, &w, y, loss);
        let mut next = None;
        while step > 1e-16 {
            let cand = project_simplex(&w.iter().zip(&g).map(|(a, b)| a - step * b).collect::<Vec<_>>());
            let diff: Vec<f64> = cand.iter().zip(&w).map(|(a, b)| a - b).collect();
            let lin: f64 = g.iter().zip(&diff).map(|(a, b)| a * b).sum();
            let sq: f64 = diff.iter().map(|d| d * d).sum();
            let val = stack_loss(z, &cand, y, loss);
            if val <= cur + lin + sq / (2.0 * step) {
                next = Some((cand, val, diff));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, val, diff)) = next else { break };
        let moved = diff.iter().fold(0.0f64, |a, d| a.max(d.abs()));
        w = cand;
        cur = val;
        if moved < 1e-12 {
            break;
        }
        step *= 2.0;
    }
    for wk in w.iter_mut() {
        if *wk < 1e-12 {
            *wk = 0.0;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// Fit the stacked ensemble on all rows.
pub fn fit_stack(
    specs: &[LearnerSpec],
    dataset: &Dataset,
    subset: &FeatureSet,
    inner_folds: usize,
    seed: u64,
) -> Result<EnsembleModel> {
    let rows: Vec<usize> = (0..dataset.n()).collect();
    fit_stack_rows(specs, dataset, subset, &rows, inner_folds, seed)
}

/// Fit the stacked ensemble on `rows`: candidate predictions from an inner
/// cross-validation determine the weights, then weighted members are refit
/// on all of `rows`.
pub fn fit_stack_rows(
    specs: &[LearnerSpec],
    dataset: &Dataset,
    subset: &FeatureSet,
    rows: &[usize],
    inner_folds: usize,
    seed: u64,
) -> Result<EnsembleModel> {
    if specs.is_empty() {
        return Err(Error::invalid("learner library is empty"));
    }
    if inner_folds < 2 {
        return Err(Error::invalid("inner cross-validation needs at least 2 folds"));
    }
    if specs.len() == 1 {
        let member = fit(&specs[0], dataset, subset, rows)?;
        return EnsembleModel::new(vec![member], vec![1.0]);
    }

    let kind = dataset.outcome_kind();
    let y: Vec<f64> = rows.iter().map(|&i| dataset.outcome()[i]).collect();
    let labels: Option<Vec<bool>> = (kind == OutcomeKind::Binary).then(|| y.iter().map(|&v| v == 1.0).collect());
    let smallest = match &labels {
        Some(l) => {
            let pos = l.iter().filter(|&&b| b).count();
            pos.min(l.len() - pos)
        }
        None => rows.len(),
    };
    let k = inner_folds.min(smallest);

    let mut last_err = String::new();
    let mut ok: Vec<usize> = Vec::new();
    let mut cv_preds: Vec<Vec<f64>> = Vec::new();
    if k >= 2 {
        let folds = FoldAssignment::balanced(rows.len(), labels.as_deref(), k, seed)?;
        let splits: Vec<(Vec<usize>, Vec<usize>, Vec<usize>)> = (0..k)
            .map(|v| {
                let held: Vec<usize> = folds.test_rows(v);
                let train: Vec<usize> = folds.train_rows(v).iter().map(|&t| rows[t]).collect();
                let test: Vec<usize> = held.iter().map(|&t| rows[t]).collect();
                (held, train, test)
            })
            .collect();
        'spec: for (s, spec) in specs.iter().enumerate() {
            let mut pred = vec![0.0; rows.len()];
            for (held, train, test) in &splits {
                let out = fit(spec, dataset, subset, train).and_then(|m| m.predict_rows(dataset, test));
                match out {
                    Ok(p) => {
                        for (&pos, v) in held.iter().zip(p) {
                            pred[pos] = v;
                        }
                    }
                    Err(e) => {
                        last_err = e.to_string();
                        continue 'spec;
                    }
                }
            }
            ok.push(s);
            cv_preds.push(pred);
        }
    } else {
        // Too few cases for inner folds: equal weights over candidates that fit.
        for (s, spec) in specs.iter().enumerate() {
            match fit(spec, dataset, subset, rows) {
                Ok(_) => ok.push(s),
                Err(e) => last_err = e.to_string(),
            }
        }
    }
    if ok.is_empty() {
        return Err(Error::AllLearnersFailed(last_err));
    }

    let weights = if k >= 2 {
        minimize_on_simplex(&cv_preds, &y, StackLoss::for_outcome(kind))
    } else {
        vec![1.0 / ok.len() as f64; ok.len()]
    };
    let mut members = Vec::new();
    let mut kept = Vec::new();
    for (&s, &w) in ok.iter().zip(&weights) {
        if w > 0.0 {
            members.push(fit(&specs[s], dataset, subset, rows)?);
            kept.push(w);
        }
    }
    let total: f64 = kept.iter().sum();
    let kept = kept.iter().map(|w| w / total).collect();
    EnsembleModel::new(members, kept)
}
