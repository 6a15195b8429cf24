use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{write_csv, Dataset};
use crate::error::{Error, Result};
use crate::learners::linear::{fit_ridge_linear, fit_ridge_logistic, LinearModel};
use crate::seed::{self, Rng as SeedRng};

const RIDGE: f64 = 1e-5;

/// Chained-equations settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiceOptions {
    pub m: usize,
    pub max_iter: usize,
    pub donors: usize,
}

impl Default for MiceOptions {
    fn default() -> Self {
        MiceOptions {
            m: 10,
            max_iter: 20,
            donors: 5,
        }
    }
}

/// Column `c` of the combined table: 0 is the outcome, `j + 1` feature `j`.
fn column(d: &Dataset, c: usize) -> &[f64] {
    if c == 0 {
        d.outcome()
    } else {
        d.feature(c - 1)
    }
}

fn is_binary(values: &[f64]) -> bool {
    let zero = values.contains(&0.0);
    let one = values.contains(&1.0);
    zero && one && values.iter().all(|&v| v == 0.0 || v == 1.0)
}

struct Target {
    col: usize,
    observed: Vec<usize>,
    missing: Vec<usize>,
    binary: bool,
}

fn fit_column(x: &[Vec<f64>], y: &[f64], binary: bool) -> Result<LinearModel> {
    if binary && is_binary(y) {
        fit_ridge_logistic(x, y, RIDGE)
    } else {
        fit_ridge_linear(x, y, RIDGE, false)
    }
}

/// Rows of the `donors` entries of `sorted` (ascending by value, then row)
/// nearest to `target`; equidistant candidates on opposite sides go to the
/// lower row.
fn nearest(sorted: &[(f64, usize)], target: f64, donors: usize) -> Vec<usize> {
    let mut right = sorted.partition_point(|&(v, _)| v < target);
    let mut left = right;
    let mut out = Vec::with_capacity(donors);
    while out.len() < donors && (left > 0 || right < sorted.len()) {
        let take_left = match (left > 0, right < sorted.len()) {
            (true, false) => true,
            (false, true) => false,
            _ => {
                let (lv, lr) = sorted[left - 1];
                let (rv, rr) = sorted[right];
                let (dl, dr) = (target - lv, rv - target);
                dl < dr || (dl == dr && lr < rr)
            }
        };
        if take_left {
            left -= 1;
            out.push(sorted[left].1);
        } else {
            out.push(sorted[right].1);
            right += 1;
        }
    }
    out
}

fn impute_chain(dataset: &Dataset, targets: &[Target], options: &MiceOptions, rng: &mut SeedRng) -> Result<Dataset> {
    let n = dataset.n();
    let width = dataset.p() + 1;
    let mut table: Vec<Vec<f64>> = (0..width).map(|c| column(dataset, c).to_vec()).collect();
    for t in targets {
        for &i in &t.missing {
            let k = t.observed[rng.gen_range(0..t.observed.len())];
            table[t.col][i] = table[t.col][k];
        }
    }

    for _ in 0..options.max_iter {
        for t in targets {
            let predictors: Vec<usize> = (0..width).filter(|&c| c != t.col).collect();
            let gather = |rows: &[usize], table: &[Vec<f64>]| -> Vec<Vec<f64>> {
                predictors
                    .iter()
                    .map(|&c| rows.iter().map(|&i| table[c][i]).collect())
                    .collect()
            };
            let y_obs: Vec<f64> = t.observed.iter().map(|&i| table[t.col][i]).collect();
            let x_obs = gather(&t.observed, &table);
            let point = fit_column(&x_obs, &y_obs, t.binary)?;

            // Parameter uncertainty: refit on a bootstrap resample of the observed rows.
            let boot: Vec<usize> = (0..t.observed.len())
                .map(|_| t.observed[rng.gen_range(0..t.observed.len())])
                .collect();
            let y_boot: Vec<f64> = boot.iter().map(|&i| table[t.col][i]).collect();
            let drawn = fit_column(&gather(&boot, &table), &y_boot, t.binary)?;

            let pred_obs = point.predict(&x_obs, t.observed.len());
            let pred_mis = drawn.predict(&gather(&t.missing, &table), t.missing.len());
            let mut pool: Vec<(f64, usize)> = pred_obs.into_iter().zip(t.observed.iter().copied()).collect();
            pool.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for (&i, &target) in t.missing.iter().zip(&pred_mis) {
                let cand = nearest(&pool, target, options.donors);
                let donor = cand[rng.gen_range(0..cand.len())];
                table[t.col][i] = table[t.col][donor];
            }
        }
    }

    let outcome = table.remove(0);
    Dataset::from_parts(
        dataset.outcome_name().to_string(),
        dataset.feature_names().to_vec(),
        table,
        outcome,
        vec![vec![true; n]; width],
    )
}

/// Multiple imputation by chained equations with predictive mean matching.
///
/// Columns with missing cells (outcome first, then features in index order)
/// are initialized from random observed values and then updated for
/// `max_iter` sweeps. Each update regresses the column on all other columns
/// (ridge logistic for binary columns, ridge linear otherwise), refits on a
/// bootstrap resample to draw parameters, and replaces each missing cell by
/// the observed value of a donor chosen uniformly among the `donors` nearest
/// predicted means. The `m` chains use independent sub-seeds.
pub fn mice_impute(dataset: &Dataset, options: &MiceOptions, seed_value: u64) -> Result<Vec<Dataset>> {
    if options.m < 1 {
        return Err(Error::invalid("at least one imputation is required"));
    }
    if options.donors < 1 {
        return Err(Error::invalid("donor pool must hold at least one value"));
    }
    let n = dataset.n();
    let mut targets = Vec::new();
    for c in 0..=dataset.p() {
        let mask = dataset.mask_column(c);
        let observed: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        if observed.len() == n {
            continue;
        }
        let name = if c == 0 {
            dataset.outcome_name()
        } else {
            &dataset.feature_names()[c - 1]
        };
        if observed.is_empty() {
            return Err(Error::invalid(format!("column '{name}' has no observed values")));
        }
        if observed.len() < options.donors {
            return Err(Error::invalid(format!(
                "column '{name}' has {} observed values, fewer than {} donors",
                observed.len(),
                options.donors
            )));
        }
        let obs_values: Vec<f64> = observed.iter().map(|&i| column(dataset, c)[i]).collect();
        targets.push(Target {
            col: c,
            binary: is_binary(&obs_values),
            missing: (0..n).filter(|&i| !mask[i]).collect(),
            observed,
        });
    }
    if targets.is_empty() {
        return Ok(vec![dataset.clone(); options.m]);
    }
    (0..options.m)
        .into_par_iter()
        .map(|m| {
            let mut rng = seed::rng_for(seed_value, &[seed::STREAM_IMPUTE, m as u64]);
            impute_chain(dataset, &targets, options, &mut rng)
        })
        .collect()
}

/// Sidecar description of a set of imputed datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationManifest {
    pub seed: u64,
    pub m: usize,
    pub iterations: usize,
    pub donors: usize,
    pub files: Vec<String>,
}

/// Write `imputation_<i>.csv` for each dataset plus `manifest.json` into `dir`.
pub fn write_imputations(
    imputations: &[Dataset],
    dir: &Path,
    options: &MiceOptions,
    seed_value: u64,
) -> Result<ImputationManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for (i, d) in imputations.iter().enumerate() {
        let name = format!("imputation_{}.csv", i + 1);
        write_csv(d, dir.join(&name), crate::data::DEFAULT_NA_TOKEN)?;
        files.push(name);
    }
    let manifest = ImputationManifest {
        seed: seed_value,
        m: imputations.len(),
        iterations: options.max_iter,
        donors: options.donors,
        files,
    };
    let path: PathBuf = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
