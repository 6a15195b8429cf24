//! Simulation harness: the published data-generating scenarios, per-replicate
//! evaluation metrics and experiment runner.

mod experiment;
mod scenario;

pub use experiment::{
    replicate_seed, run_experiment, run_replicate, ExperimentConfig, ExperimentSummary, ModeSpec, ReplicateRow, AGGREGATE_FILE,
    REPLICATES_FILE, SELECTION_PROBS_FILE,
};
pub use scenario::{gen_scenario, optimal_auc, FeatureDist, OutcomeForm, ScenarioSpec};

use serde::Serialize;

use crate::data::{Dataset, FeatureSet};
use crate::error::Result;
use crate::learners::{fit_stack, LearnerSpec, StackConfig};
use crate::predictiveness::auc;
use crate::seed;

/// Learner library used for importance estimation in a scenario: boosted
/// stumps for the mixed-importance scenarios, logistic regression plus
/// boosted stumps for the weak-importance ones. Both screen subsets.
pub fn default_spvim_learners(scenario_id: u8) -> StackConfig {
    let stumps = LearnerSpec::BoostedStumps {
        rounds: 100,
        shrinkage: 0.1,
    };
    match scenario_id {
        1 | 3 | 4 | 5 => StackConfig::new(vec![stumps]),
        _ => StackConfig::new(vec![LearnerSpec::RidgeLogistic { lambda: 1e-3 }, stumps]),
    }
}

/// Library refit on the selected features to measure test-set AUC.
pub fn default_eval_learners() -> StackConfig {
    StackConfig::new(vec![
        LearnerSpec::RidgeLogistic { lambda: 1e-3 },
        LearnerSpec::BoostedStumps {
            rounds: 100,
            shrinkage: 0.1,
        },
    ])
    .without_screen()
}

/// Selection quality against the known active set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelectionMetrics {
    /// |S⁺ ∩ S₀| / |S₀|; NaN when S₀ is empty.
    pub sensitivity: f64,
    /// |S₀ᶜ \ S⁺| / |S₀ᶜ|; NaN when every feature is active.
    pub specificity: f64,
    /// Number of selected inactive features.
    pub false_selections: usize,
    /// False selections over selections, 0 when nothing is selected.
    pub fdp: f64,
}

pub fn selection_metrics(selected: &FeatureSet, truth: &FeatureSet, p: usize) -> SelectionMetrics {
    let hits = selected.indices().iter().filter(|&&j| truth.contains(j)).count();
    let false_selections = selected.len() - hits;
    let nulls = p - truth.len();
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    SelectionMetrics {
        sensitivity: ratio(hits, truth.len()),
        specificity: ratio(nulls - false_selections, nulls),
        false_selections,
        fdp: if selected.is_empty() {
            0.0
        } else {
            false_selections as f64 / selected.len() as f64
        },
    }
}

/// Metrics for one replicate and one selection.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateMetrics {
    pub selected: FeatureSet,
    pub test_auc: f64,
    pub selection: SelectionMetrics,
}

/// Refit the library on the selected features of each training set, average
/// the resulting AUC on one fresh complete test set, and score the selection.
pub fn evaluate(
    selected: &FeatureSet,
    truth: &FeatureSet,
    spec: &ScenarioSpec,
    test_n: usize,
    learners: &StackConfig,
    training: &[Dataset],
    seed_value: u64,
) -> Result<ReplicateMetrics> {
    if test_n < 1000 {
        return Err(crate::error::Error::invalid("test sets need at least 1000 rows"));
    }
    if training.is_empty() {
        return Err(crate::error::Error::invalid("no training sets to evaluate"));
    }
    let selection = selection_metrics(selected, truth, spec.p);
    let test_auc = if selected.is_empty() {
        0.5
    } else {
        let mut clean = spec.clone();
        clean.missing_prop = 0.0;
        let (test, _) = gen_scenario(&clean, test_n, seed::derive(seed_value, &[seed::STREAM_TEST]))?;
        let mut total = 0.0;
        for (m, train) in training.iter().enumerate() {
            let fit_seed = seed::derive(seed_value, &[seed::STREAM_EVAL, m as u64]);
            let model = fit_stack(&learners.learners, train, selected, learners.inner_folds, fit_seed)?;
            total += auc(&model.predict(&test)?, test.outcome())?;
        }
        total / training.len() as f64
    };
    Ok(ReplicateMetrics {
        selected: selected.clone(),
        test_auc,
        selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_partition_features() {
        let truth = FeatureSet::new(vec![0, 1, 2]);
        let m = selection_metrics(&FeatureSet::new(vec![1, 2, 4]), &truth, 6);
        assert!((m.sensitivity - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.specificity - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.false_selections, 1);
        assert!((m.fdp - 1.0 / 3.0).abs() < 1e-15);
        let none = selection_metrics(&FeatureSet::empty(), &truth, 6);
        assert_eq!((none.sensitivity, none.specificity, none.fdp), (0.0, 1.0, 0.0));
        assert_eq!(selection_metrics(&FeatureSet::full(6), &truth, 6).sensitivity, 1.0);
    }

    #[test]
    fn empty_selection_scores_half() {
        let spec = ScenarioSpec::preset(6, 6, 0.0).unwrap();
        let (d, truth) = gen_scenario(&spec, 100, 1).unwrap();
        let r = evaluate(&FeatureSet::empty(), &truth, &spec, 1000, &default_eval_learners(), &[d], 2).unwrap();
        assert_eq!(r.test_auc, 0.5);
        assert_eq!(r.selection.sensitivity, 0.0);
    }
}
