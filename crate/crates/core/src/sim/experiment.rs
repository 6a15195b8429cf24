use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{default_eval_learners, default_spvim_learners, evaluate, gen_scenario, ScenarioSpec};
use crate::data::FeatureSet;
use crate::error::{Error, Result};
use crate::learners::StackConfig;
use crate::missingness::MiceOptions;
use crate::seed;
use crate::selection::{augment, choose_k_q, select, ErrorControl, SelectionConfig};

pub const REPLICATES_FILE: &str = "replicates.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const SELECTION_PROBS_FILE: &str = "selection_probs.csv";

/// Error-control mode of an experiment arm. Omitted `k` or `q` are derived
/// from the configured target specificity at each sample size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ModeSpec {
    Gfwer {
        #[serde(default)]
        k: Option<usize>,
    },
    Pfp {
        #[serde(default)]
        q: Option<f64>,
    },
    Fdr {
        f: f64,
    },
}

impl ModeSpec {
    fn resolve(&self, n: usize, spec: &ScenarioSpec, specificity: Option<f64>) -> Result<ErrorControl> {
        let derived = || -> Result<(usize, f64)> {
            let sp = specificity.ok_or_else(|| {
                Error::invalid("k or q omitted but no target_specificity given")
            })?;
            choose_k_q(n, spec.p, spec.truth().len(), sp)
        };
        Ok(match *self {
            ModeSpec::Gfwer { k: Some(k) } => ErrorControl::Gfwer { k },
            ModeSpec::Gfwer { k: None } => ErrorControl::Gfwer { k: derived()?.0 },
            ModeSpec::Pfp { q: Some(q) } => ErrorControl::Pfp { q },
            ModeSpec::Pfp { q: None } => ErrorControl::Pfp { q: derived()?.1 },
            ModeSpec::Fdr { f } => ErrorControl::Fdr { f },
        })
    }
}

fn default_alpha() -> f64 {
    0.05
}
fn default_test_n() -> usize {
    10_000
}
fn default_true() -> bool {
    true
}
fn default_folds() -> usize {
    5
}
fn default_p() -> usize {
    30
}

/// Experiment description read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Preset scenario id (1–8); ignored when `custom_scenario` is given.
    #[serde(default)]
    pub scenario: Option<u8>,
    #[serde(default)]
    pub custom_scenario: Option<ScenarioSpec>,
    #[serde(default = "default_p")]
    pub p: usize,
    pub n: Vec<usize>,
    #[serde(default)]
    pub missing_prop: f64,
    pub modes: Vec<ModeSpec>,
    #[serde(default)]
    pub target_specificity: Option<f64>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_test_n")]
    pub test_n: usize,
    /// Compute test-set AUC (refits the evaluation library per replicate).
    #[serde(default = "default_true")]
    pub evaluate: bool,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub budget: Option<usize>,
    #[serde(default)]
    pub mice: MiceOptions,
    #[serde(default)]
    pub spvim_learners: Option<StackConfig>,
    #[serde(default)]
    pub eval_learners: Option<StackConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.scenario_spec()?;
        Ok(cfg)
    }

    pub fn scenario_spec(&self) -> Result<ScenarioSpec> {
        let mut spec = match (&self.custom_scenario, self.scenario) {
            (Some(s), _) => s.clone(),
            (None, Some(id)) => ScenarioSpec::preset(id, self.p, self.missing_prop)?,
            (None, None) => return Err(Error::invalid("experiment needs a scenario id or custom_scenario")),
        };
        spec.missing_prop = self.missing_prop;
        spec.validate()?;
        if self.modes.is_empty() {
            return Err(Error::invalid("experiment needs at least one mode"));
        }
        if self.n.is_empty() {
            return Err(Error::invalid("experiment needs at least one sample size"));
        }
        Ok(spec)
    }

    fn spvim_learners(&self, spec: &ScenarioSpec) -> StackConfig {
        self.spvim_learners.clone().unwrap_or_else(|| default_spvim_learners(spec.id))
    }
}

/// One output row: a replicate under one error-control mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub scenario: u8,
    pub p: usize,
    pub n: usize,
    pub missing_prop: f64,
    pub mode: String,
    pub k: usize,
    pub q: Option<f64>,
    pub replicate: usize,
    pub seed: u64,
    pub n_selected: usize,
    /// 1-based indices joined by ';'.
    pub selected: String,
    pub false_selections: usize,
    pub sensitivity: f64,
    pub specificity: f64,
    pub fdp: f64,
    pub test_auc: Option<f64>,
}

impl ReplicateRow {
    pub fn selected_set(&self) -> FeatureSet {
        self.selected
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<usize>().expect("selection written by this crate") - 1)
            .collect()
    }
}

fn mode_name(c: &ErrorControl) -> &'static str {
    match c {
        ErrorControl::Gfwer { .. } => "gfwer",
        ErrorControl::Pfp { .. } => "pfp",
        ErrorControl::Fdr { .. } => "fdr",
    }
}

/// Seed of replicate `r`; complete and amputed runs with the same master
/// seed share their underlying complete data.
pub fn replicate_seed(master: u64, n: usize, r: usize) -> u64 {
    seed::derive(master, &[r as u64, n as u64])
}

/// Run one replicate at sample size n under every configured mode.
pub fn run_replicate(config: &ExperimentConfig, n: usize, r: usize) -> Result<Vec<ReplicateRow>> {
    let spec = config.scenario_spec()?;
    let rep_seed = replicate_seed(config.seed, n, r);
    let (data, truth) = gen_scenario(&spec, n, rep_seed)?;
    let controls: Vec<ErrorControl> = config
        .modes
        .iter()
        .map(|m| m.resolve(n, &spec, config.target_specificity))
        .collect::<Result<_>>()?;
    let sel_cfg = SelectionConfig {
        measure: None,
        learners: config.spvim_learners(&spec),
        folds: config.folds,
        budget: config.budget,
        mice: config.mice,
        alpha: config.alpha,
        control: controls[0],
    };
    let run = select(&data, &sel_cfg, rep_seed)?;
    let training = if run.imputations.is_empty() {
        vec![data]
    } else {
        run.imputations.clone()
    };
    let eval_learners = config.eval_learners.clone().unwrap_or_else(default_eval_learners);

    let mut rows = Vec::with_capacity(controls.len());
    for control in controls {
        let result = augment(&run.tests.p_adjusted, &run.result.initial_set, config.alpha, control)?;
        let (metrics, auc) = if config.evaluate {
            let m = evaluate(
                &result.final_set,
                &truth,
                &spec,
                config.test_n,
                &eval_learners,
                &training,
                rep_seed,
            )?;
            (m.selection, Some(m.test_auc))
        } else {
            (super::selection_metrics(&result.final_set, &truth, spec.p), None)
        };
        rows.push(ReplicateRow {
            scenario: spec.id,
            p: spec.p,
            n,
            missing_prop: spec.missing_prop,
            mode: mode_name(&control).to_string(),
            k: result.k_used,
            q: result.q_used,
            replicate: r,
            seed: rep_seed,
            n_selected: result.final_set.len(),
            selected: result
                .final_set
                .one_based()
                .iter()
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join(";"),
            false_selections: metrics.false_selections,
            sensitivity: metrics.sensitivity,
            specificity: metrics.specificity,
            fdp: metrics.fdp,
            test_auc: auc,
        });
    }
    Ok(rows)
}

/// All replicate rows of a finished experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub rows: Vec<ReplicateRow>,
}

fn mean_se(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return (None, None);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let se = if v.len() > 1 {
        Some((v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0) / n).sqrt())
    } else {
        None
    };
    (Some(m), se)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn fmt_f(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else {
        "NA".to_string()
    }
}

const REPLICATE_HEADER: [&str; 16] = [
    "scenario",
    "p",
    "n",
    "missing_prop",
    "mode",
    "k",
    "q",
    "replicate",
    "seed",
    "n_selected",
    "selected",
    "false_selections",
    "sensitivity",
    "specificity",
    "fdp",
    "test_auc",
];

fn replicate_record(r: &ReplicateRow) -> Vec<String> {
    vec![
        r.scenario.to_string(),
        r.p.to_string(),
        r.n.to_string(),
        r.missing_prop.to_string(),
        r.mode.clone(),
        r.k.to_string(),
        fmt_opt(r.q),
        r.replicate.to_string(),
        r.seed.to_string(),
        r.n_selected.to_string(),
        r.selected.clone(),
        r.false_selections.to_string(),
        fmt_f(r.sensitivity),
        fmt_f(r.specificity),
        fmt_f(r.fdp),
        fmt_opt(r.test_auc),
    ]
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// Run every (n, replicate) cell, writing `replicates.csv` as replicates
/// finish, then `aggregate.csv` and `selection_probs.csv`.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary> {
    let spec = config.scenario_spec()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rep = csv_writer(&out_dir.join(REPLICATES_FILE))?;
    rep.write_record(REPLICATE_HEADER)?;
    rep.flush().map_err(|e| Error::io(out_dir.join(REPLICATES_FILE), e))?;
    let mut rows = Vec::new();
    for &n in &config.n {
        for r in 0..config.replicates {
            let batch = run_replicate(config, n, r)?;
            for row in &batch {
                rep.write_record(replicate_record(row))?;
            }
            rep.flush().map_err(|e| Error::io(out_dir.join(REPLICATES_FILE), e))?;
            rows.extend(batch);
        }
    }
    write_aggregate(&rows, &out_dir.join(AGGREGATE_FILE))?;
    write_selection_probs(&rows, spec.p, &out_dir.join(SELECTION_PROBS_FILE))?;
    Ok(ExperimentSummary { rows })
}

type CellKey = (usize, String, usize, String);

fn cells(rows: &[ReplicateRow]) -> BTreeMap<CellKey, Vec<&ReplicateRow>> {
    let mut map: BTreeMap<CellKey, Vec<&ReplicateRow>> = BTreeMap::new();
    for r in rows {
        map.entry((r.n, r.mode.clone(), r.k, fmt_opt(r.q))).or_default().push(r);
    }
    map
}

fn write_aggregate(rows: &[ReplicateRow], path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "scenario",
        "p",
        "n",
        "missing_prop",
        "mode",
        "k",
        "q",
        "replicates",
        "mean_sensitivity",
        "se_sensitivity",
        "mean_specificity",
        "se_specificity",
        "mean_fdp",
        "se_fdp",
        "mean_test_auc",
        "se_test_auc",
        "prob_false_exceeds_k",
        "prob_fdp_exceeds_q",
    ])?;
    for ((n, mode, k, q), group) in cells(rows) {
        let first = group[0];
        let col = |f: &dyn Fn(&ReplicateRow) -> f64| -> Vec<f64> { group.iter().map(|r| f(r)).collect() };
        let (sens, sens_se) = mean_se(&col(&|r| r.sensitivity));
        let (spec, spec_se) = mean_se(&col(&|r| r.specificity));
        let (fdp, fdp_se) = mean_se(&col(&|r| r.fdp));
        let (auc, auc_se) = mean_se(&col(&|r| r.test_auc.unwrap_or(f64::NAN)));
        let reps = group.len() as f64;
        let exceed_k = group.iter().filter(|r| r.false_selections > k).count() as f64 / reps;
        let exceed_q = first
            .q
            .map(|qv| group.iter().filter(|r| r.fdp > qv).count() as f64 / reps);
        w.write_record([
            first.scenario.to_string(),
            first.p.to_string(),
            n.to_string(),
            first.missing_prop.to_string(),
            mode,
            k.to_string(),
            q,
            group.len().to_string(),
            fmt_opt(sens),
            fmt_opt(sens_se),
            fmt_opt(spec),
            fmt_opt(spec_se),
            fmt_opt(fdp),
            fmt_opt(fdp_se),
            fmt_opt(auc),
            fmt_opt(auc_se),
            exceed_k.to_string(),
            fmt_opt(exceed_q),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_selection_probs(rows: &[ReplicateRow], p: usize, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["scenario", "n", "missing_prop", "mode", "k", "q", "feature", "selection_prob"])?;
    for ((n, mode, k, q), group) in cells(rows) {
        let mut counts = vec![0usize; p];
        for r in &group {
            for j in r.selected_set().indices() {
                counts[*j] += 1;
            }
        }
        for (j, c) in counts.iter().enumerate() {
            w.write_record([
                group[0].scenario.to_string(),
                n.to_string(),
                group[0].missing_prop.to_string(),
                mode.clone(),
                k.to_string(),
                q.clone(),
                (j + 1).to_string(),
                (*c as f64 / group.len() as f64).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_with_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"scenario": 1, "n": [200], "modes": [{"mode": "gfwer", "k": 2}], "replicates": 2}"#,
        )
        .unwrap();
        assert_eq!(cfg.alpha, 0.05);
        assert_eq!(cfg.p, 30);
        assert_eq!(cfg.test_n, 10_000);
        assert!(ExperimentConfig::from_json(r#"{"scenario": 9, "n": [200], "modes": [{"mode": "gfwer"}], "replicates": 1}"#).is_err());
    }

    #[test]
    fn derived_mode_parameters() {
        let spec = ScenarioSpec::preset(1, 30, 0.0).unwrap();
        let g = ModeSpec::Gfwer { k: None }.resolve(1500, &spec, Some(0.809)).unwrap();
        assert_eq!(g, ErrorControl::Gfwer { k: 5 });
        assert!(ModeSpec::Pfp { q: None }.resolve(1500, &spec, None).is_err());
    }

    #[test]
    fn zero_replicates_write_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_json(
            r#"{"scenario": 6, "n": [200], "modes": [{"mode": "gfwer", "k": 1}], "replicates": 0}"#,
        )
        .unwrap();
        let s = run_experiment(&cfg, dir.path()).unwrap();
        assert!(s.rows.is_empty());
        let text = std::fs::read_to_string(dir.path().join(REPLICATES_FILE)).unwrap();
        assert_eq!(text.lines().count(), 1);
    }
}
