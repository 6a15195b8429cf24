//! Hypothesis tests on pooled importance estimates, Holm-adjusted initial
//! selection, and augmentation for gFWER, PFP or FDR control.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSet};
use crate::error::{Error, Result};
use crate::learners::StackConfig;
use crate::missingness::{mice_impute, pool_rubin, MiceOptions, PooledEstimate};
use crate::predictiveness::Measure;
use crate::spvim::{estimate_spvim, SpvimEstimate, SpvimOptions};
use crate::stats::normal_upper_tail;

/// Error rate controlled by the augmentation step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ErrorControl {
    /// P(more than k false selections) ≤ α.
    Gfwer { k: usize },
    /// P(false proportion > q) ≤ α.
    Pfp { q: f64 },
    /// Expected false proportion ≤ f.
    Fdr { f: f64 },
}

impl std::fmt::Display for ErrorControl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ErrorControl::Gfwer { k } => write!(f, "gfwer(k={k})"),
            ErrorControl::Pfp { q } => write!(f, "pfp(q={q})"),
            ErrorControl::Fdr { f: rate } => write!(f, "fdr(f={rate})"),
        }
    }
}

/// Per-feature test statistics and p-values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResults {
    pub t_stats: Vec<f64>,
    pub p_values: Vec<f64>,
    pub p_adjusted: Vec<f64>,
    /// Features whose total variance was zero; their p-value is 0 for a
    /// positive estimate and 1 otherwise.
    pub zero_variance: Vec<usize>,
}

/// One-sided tests of ψ_j = 0 against ψ_j > 0, with Holm adjustment.
pub fn test_statistics(pooled: &PooledEstimate) -> TestResults {
    let p = pooled.p();
    let mut t_stats = Vec::with_capacity(p);
    let mut p_values = Vec::with_capacity(p);
    let mut zero_variance = Vec::new();
    for j in 0..p {
        let psi = pooled.psi_bar[j];
        let var = pooled.total_var[j];
        if var > 0.0 {
            let t = psi / var.sqrt();
            t_stats.push(t);
            p_values.push(normal_upper_tail(t));
        } else {
            zero_variance.push(j);
            if psi > 0.0 {
                t_stats.push(f64::INFINITY);
                p_values.push(0.0);
            } else {
                t_stats.push(if psi < 0.0 { f64::NEG_INFINITY } else { 0.0 });
                p_values.push(1.0);
            }
        }
    }
    let p_adjusted = holm_adjust(&p_values);
    TestResults {
        t_stats,
        p_values,
        p_adjusted,
        zero_variance,
    }
}

/// Holm step-down adjusted p-values.
pub fn holm_adjust(p_values: &[f64]) -> Vec<f64> {
    let p = p_values.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; p];
    let mut running = 0.0f64;
    for (l, &j) in order.iter().enumerate() {
        let v = (p_values[j] * (p - l) as f64).min(1.0);
        running = running.max(v);
        adjusted[j] = running;
    }
    adjusted
}

/// Features with adjusted p-value strictly below α.
pub fn initial_set(adjusted: &[f64], alpha: f64) -> FeatureSet {
    adjusted
        .iter()
        .enumerate()
        .filter(|(_, &p)| p < alpha)
        .map(|(j, _)| j)
        .collect()
}

/// Selected sets and the parameters that produced them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionResult {
    pub initial_set: FeatureSet,
    pub augmentation_set: FeatureSet,
    pub final_set: FeatureSet,
    pub alpha: f64,
    pub mode: ErrorControl,
    pub k_used: usize,
    pub q_used: Option<f64>,
}

/// Largest j ≤ available with j / (j + r) ≤ q.
fn pfp_k(q: f64, r: usize, available: usize) -> usize {
    (0..=available)
        .rev()
        .find(|&j| j == 0 || j as f64 <= q * (j + r) as f64)
        .unwrap_or(0)
}

/// Add the `k` unselected features with the smallest adjusted p-values
/// (lower index on ties), with `k` set by the error-control mode.
///
/// For gFWER a `k` larger than the number of unselected features selects all
/// of them. For PFP and FDR an empty initial set yields an empty augmentation.
pub fn augment(adjusted: &[f64], initial: &FeatureSet, alpha: f64, mode: ErrorControl) -> Result<SelectionResult> {
    let p = adjusted.len();
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if initial.max_index().is_some_and(|j| j >= p) {
        return Err(Error::invalid("initial set refers to a feature beyond the p-values"));
    }
    let r = initial.len();
    let available = p - r;
    let (k, q_used) = match mode {
        ErrorControl::Gfwer { k } => {
            if k > p {
                return Err(Error::invalid(format!("gFWER k must lie in 0..={p}, got {k}")));
            }
            (k, None)
        }
        ErrorControl::Pfp { q } => {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::invalid(format!("PFP q must lie in (0, 1), got {q}")));
            }
            (if r == 0 { 0 } else { pfp_k(q, r, available) }, Some(q))
        }
        ErrorControl::Fdr { f } => {
            if !(f > alpha && f < 1.0) {
                return Err(Error::invalid(format!("FDR level must lie in (alpha, 1), got {f}")));
            }
            let q = (f - alpha) / (1.0 - alpha);
            (if r == 0 { 0 } else { pfp_k(q, r, available) }, Some(q))
        }
    };
    let mut rest: Vec<usize> = (0..p).filter(|&j| !initial.contains(j)).collect();
    rest.sort_by(|&a, &b| adjusted[a].total_cmp(&adjusted[b]).then(a.cmp(&b)));
    rest.truncate(k);
    let augmentation_set = FeatureSet::new(rest);
    let final_set = initial.indices().iter().chain(augmentation_set.indices()).copied().collect();
    Ok(SelectionResult {
        initial_set: initial.clone(),
        augmentation_set,
        final_set,
        alpha,
        mode,
        k_used: k,
        q_used,
    })
}

/// Augmentation size and PFP level targeting a given specificity:
/// k = ⌈(1 − s_p)(p − s₀)⌉ and q = k / ((p − s₀)/p · √(n/200) + k).
pub fn choose_k_q(n: usize, p: usize, s0: usize, target_specificity: f64) -> Result<(usize, f64)> {
    if !(target_specificity > 0.0 && target_specificity < 1.0) {
        return Err(Error::invalid("target specificity must lie in (0, 1)"));
    }
    if s0 >= p {
        return Err(Error::invalid("number of active features must be below p"));
    }
    let nulls = (p - s0) as f64;
    // Guard against representation error pushing an integer product up by one.
    let k = ((1.0 - target_specificity) * nulls - 1e-9).ceil().max(0.0) as usize;
    let q = k as f64 / (nulls / p as f64 * (n as f64 / 200.0).sqrt() + k as f64);
    Ok((k, q))
}

/// Settings for the full selection pipeline.
#[derive(Debug, Clone)]
pub struct SelectionConfig {
    pub measure: Option<Measure>,
    pub learners: StackConfig,
    pub folds: usize,
    pub budget: Option<usize>,
    pub mice: MiceOptions,
    pub alpha: f64,
    pub control: ErrorControl,
}

impl SelectionConfig {
    pub fn spvim_options(&self) -> SpvimOptions {
        SpvimOptions {
            measure: self.measure,
            learners: self.learners.clone(),
            folds: self.folds,
            budget: self.budget,
        }
    }
}

/// Everything produced by [`select`].
#[derive(Debug, Clone)]
pub struct SelectionRun {
    pub result: SelectionResult,
    pub tests: TestResults,
    pub pooled: PooledEstimate,
    pub estimates: Vec<SpvimEstimate>,
    /// Imputed datasets; empty when the input was complete.
    pub imputations: Vec<Dataset>,
}

/// Importance estimation, pooling, testing and augmentation.
///
/// Complete data give one estimate whose variance is used as is; otherwise
/// the data are multiply imputed, estimated per imputation with the same
/// seed, and pooled by Rubin's rules.
pub fn select(dataset: &Dataset, config: &SelectionConfig, seed_value: u64) -> Result<SelectionRun> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", config.alpha)));
    }
    let options = config.spvim_options();
    let (estimates, imputations, pooled) = if dataset.is_complete() {
        let est = estimate_spvim(dataset, &options, seed_value)?;
        let pooled = PooledEstimate::from_single(&est);
        (vec![est], Vec::new(), pooled)
    } else {
        let imputations = mice_impute(dataset, &config.mice, seed_value)?;
        let estimates: Vec<SpvimEstimate> = imputations
            .iter()
            .map(|d| estimate_spvim(d, &options, seed_value))
            .collect::<Result<_>>()?;
        let pooled = if estimates.len() == 1 {
            PooledEstimate::from_single(&estimates[0])
        } else {
            pool_rubin(&estimates)?
        };
        (estimates, imputations, pooled)
    };
    let tests = test_statistics(&pooled);
    let initial = initial_set(&tests.p_adjusted, config.alpha);
    let result = augment(&tests.p_adjusted, &initial, config.alpha, config.control)?;
    Ok(SelectionRun {
        result,
        tests,
        pooled,
        estimates,
        imputations,
    })
}

/// User-facing summary with 1-based feature indices.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub seed: u64,
    pub alpha: f64,
    pub control: ErrorControl,
    pub k_used: usize,
    pub q_used: Option<f64>,
    pub imputations: usize,
    pub initial_set: Vec<usize>,
    pub augmentation_set: Vec<usize>,
    pub final_set: Vec<usize>,
    pub selected_names: Vec<String>,
    pub features: Vec<FeatureReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeatureReport {
    pub index: usize,
    pub name: String,
    pub psi: f64,
    pub variance: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub p_adjusted: f64,
}

impl SelectionRun {
    pub fn report(&self, names: &[String], seed_value: u64) -> SelectionReport {
        let r = &self.result;
        let features = (0..self.pooled.p())
            .map(|j| FeatureReport {
                index: j + 1,
                name: names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1)),
                psi: self.pooled.psi_bar[j],
                variance: self.pooled.total_var[j],
                t_stat: self.tests.t_stats[j],
                p_value: self.tests.p_values[j],
                p_adjusted: self.tests.p_adjusted[j],
            })
            .collect();
        SelectionReport {
            seed: seed_value,
            alpha: r.alpha,
            control: r.mode,
            k_used: r.k_used,
            q_used: r.q_used,
            imputations: self.imputations.len(),
            initial_set: r.initial_set.one_based(),
            augmentation_set: r.augmentation_set.one_based(),
            final_set: r.final_set.one_based(),
            selected_names: r.final_set.indices().iter().map(|&j| names[j].clone()).collect(),
            features,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_statistic_examples() {
        let pooled = PooledEstimate {
            psi_bar: vec![0.0, 0.1, -0.05],
            within_var: vec![0.01, 0.0025, 0.01],
            between_var: vec![0.0; 3],
            total_var: vec![0.01, 0.0025, 0.01],
            m: 1,
        };
        let t = test_statistics(&pooled);
        assert_eq!(t.p_values[0], 0.5);
        assert!((t.t_stats[1] - 2.0).abs() < 1e-12);
        assert!((t.p_values[1] - 0.02275).abs() < 1e-5);
        assert!(t.p_values[2] > 0.5);
    }

    #[test]
    fn zero_variance_flags() {
        let pooled = PooledEstimate {
            psi_bar: vec![0.2, 0.0, -0.1],
            within_var: vec![0.0; 3],
            between_var: vec![0.0; 3],
            total_var: vec![0.0; 3],
            m: 1,
        };
        let t = test_statistics(&pooled);
        assert_eq!(t.p_values, vec![0.0, 1.0, 1.0]);
        assert_eq!(t.zero_variance, vec![0, 1, 2]);
    }

    #[test]
    fn holm_examples() {
        let adj = holm_adjust(&[0.01, 0.04, 0.03]);
        let expected = [0.03, 0.06, 0.06];
        for (a, b) in adj.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(holm_adjust(&[0.0; 4]), vec![0.0; 4]);
        assert_eq!(holm_adjust(&[0.37]), vec![0.37]);
        assert_eq!(initial_set(&adj, 0.05), FeatureSet::new(vec![0]));
        assert!(initial_set(&[1.0; 3], 0.05).is_empty());
        assert_eq!(initial_set(&[0.0; 3], 0.05), FeatureSet::full(3));
    }

    #[test]
    fn augmentation_examples() {
        let adj = [0.001, 0.20, 0.002, 0.08, 0.50];
        let init = FeatureSet::new(vec![0, 2]);
        let r = augment(&adj, &init, 0.05, ErrorControl::Gfwer { k: 1 }).unwrap();
        assert_eq!(r.augmentation_set, FeatureSet::new(vec![3]));
        assert_eq!(r.final_set, FeatureSet::new(vec![0, 2, 3]));
        let r0 = augment(&adj, &init, 0.05, ErrorControl::Gfwer { k: 0 }).unwrap();
        assert!(r0.augmentation_set.is_empty());
        assert_eq!(r0.final_set, init);
        let all = augment(&adj, &init, 0.05, ErrorControl::Gfwer { k: 3 }).unwrap();
        assert_eq!(all.final_set, FeatureSet::full(5));
        let pfp = augment(&adj, &init, 0.05, ErrorControl::Pfp { q: 0.8 }).unwrap();
        assert_eq!(pfp.k_used, 3);
        assert!(augment(&adj, &init, 0.05, ErrorControl::Gfwer { k: 6 }).is_err());
        assert!(augment(&adj, &init, 0.05, ErrorControl::Fdr { f: 0.04 }).is_err());
    }

    #[test]
    fn empty_initial_set_blocks_pfp_and_fdr() {
        let adj = [0.5, 0.6, 0.9];
        for mode in [ErrorControl::Pfp { q: 0.5 }, ErrorControl::Fdr { f: 0.2 }] {
            let r = augment(&adj, &FeatureSet::empty(), 0.05, mode).unwrap();
            assert!(r.final_set.is_empty());
        }
        let g = augment(&adj, &FeatureSet::empty(), 0.05, ErrorControl::Gfwer { k: 2 }).unwrap();
        assert_eq!(g.final_set, FeatureSet::new(vec![0, 1]));
    }

    #[test]
    fn fdr_maps_to_pfp_level() {
        let adj = [0.0, 0.0, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9];
        let init = FeatureSet::new(vec![0, 1]);
        let f = augment(&adj, &init, 0.05, ErrorControl::Fdr { f: 0.24 }).unwrap();
        let q = (0.24 - 0.05) / 0.95;
        assert!((f.q_used.unwrap() - q).abs() < 1e-15);
        let p = augment(&adj, &init, 0.05, ErrorControl::Pfp { q }).unwrap();
        assert_eq!(f.final_set, p.final_set);
    }

    #[test]
    fn choose_k_q_examples() {
        let (k, q) = choose_k_q(200, 30, 6, 0.762).unwrap();
        assert_eq!(k, 6);
        assert_eq!((q * 1000.0).round() / 1000.0, 0.882);
        let (k, q) = choose_k_q(3000, 500, 6, 0.904).unwrap();
        assert_eq!(k, 48);
        assert_eq!((q * 1000.0).round() / 1000.0, 0.926);
        assert_eq!(choose_k_q(200, 30, 6, 0.9999).unwrap().0, 1);
    }
}
