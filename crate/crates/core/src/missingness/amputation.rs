use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSet};
use crate::error::{Error, Result};
use crate::learners::linear::sigmoid;
use crate::seed;
use rand::Rng;

/// Missing-at-random amputation design. Indices are 0-based feature indices;
/// the outcome is never amputated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmputationSpec {
    pub always_observed: FeatureSet,
    /// Ordered chain: a later column is missing only if every earlier one is.
    pub monotone_chain: Vec<usize>,
    pub independent_missing: Vec<usize>,
    pub max_prop: f64,
    /// Always-observed features whose standardized sum drives the missingness odds.
    pub weight_features: FeatureSet,
}

impl AmputationSpec {
    pub fn validate(&self, p: usize) -> Result<()> {
        if !(0.0..1.0).contains(&self.max_prop) {
            return Err(Error::invalid(format!("max_prop must lie in [0, 1), got {}", self.max_prop)));
        }
        let all = self
            .always_observed
            .indices()
            .iter()
            .chain(&self.monotone_chain)
            .chain(&self.independent_missing)
            .chain(self.weight_features.indices());
        if let Some(&j) = all.clone().find(|&&j| j >= p) {
            return Err(Error::MissingColumn {
                required: j + 1,
                available: p,
            });
        }
        let mut amputable: Vec<usize> = self.monotone_chain.iter().chain(&self.independent_missing).copied().collect();
        amputable.sort_unstable();
        if amputable.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("a column appears twice among amputable columns"));
        }
        if amputable.iter().any(|&j| self.always_observed.contains(j)) {
            return Err(Error::invalid("amputable columns must not be always observed"));
        }
        if self.weight_features.indices().iter().any(|&j| !self.always_observed.contains(j)) {
            return Err(Error::invalid("weight features must be always observed"));
        }
        Ok(())
    }
}

/// Intercept `a` with mean(sigmoid(a + z)) = target.
fn calibrate(z: &[f64], target: f64) -> Result<f64> {
    let mean = |a: f64| z.iter().map(|&v| sigmoid(a + v)).sum::<f64>() / z.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    if !(mean(lo) <= target && mean(hi) >= target) {
        return Err(Error::Calibration(format!("cannot reach missing proportion {target}")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let a = 0.5 * (lo + hi);
    if (mean(a) - target).abs() > 1e-9 {
        return Err(Error::Calibration(format!("bisection failed for proportion {target}")));
    }
    Ok(a)
}

/// Impose missingness on a complete dataset.
///
/// Each amputable column is missing with probability sigmoid(a + z), where z
/// is the standardized sum of the weight features and `a` is calibrated so the
/// expected missing proportion is `max_prop` for independent columns and
/// `max_prop * (L - l) / L` for chain position l of L. Chain columns share one
/// uniform per row, so missingness is nested along the chain.
pub fn ampute(dataset: &Dataset, spec: &AmputationSpec, seed_value: u64) -> Result<Dataset> {
    dataset.require_complete("amputation")?;
    spec.validate(dataset.p())?;
    let n = dataset.n();
    let mut mask: Vec<Vec<bool>> = (0..=dataset.p()).map(|c| dataset.mask_column(c).to_vec()).collect();
    if spec.max_prop == 0.0 || n == 0 {
        return Ok(dataset.clone());
    }

    let mut z: Vec<f64> = (0..n)
        .map(|i| spec.weight_features.indices().iter().map(|&j| dataset.feature(j)[i]).sum())
        .collect();
    let mean = z.iter().sum::<f64>() / n as f64;
    let sd = (z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
    for v in z.iter_mut() {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }

    let mut rng = seed::rng_for(seed_value, &[seed::STREAM_AMPUTE]);
    let len = spec.monotone_chain.len();
    if len > 0 {
        let intercepts: Vec<f64> = (0..len)
            .map(|l| calibrate(&z, spec.max_prop * (len - l) as f64 / len as f64))
            .collect::<Result<_>>()?;
        for i in 0..n {
            let u: f64 = rng.gen();
            for (&j, &a) in spec.monotone_chain.iter().zip(&intercepts) {
                if u < sigmoid(a + z[i]) {
                    mask[j + 1][i] = false;
                }
            }
        }
    }
    if !spec.independent_missing.is_empty() {
        let a = calibrate(&z, spec.max_prop)?;
        for &j in &spec.independent_missing {
            for i in 0..n {
                if rng.gen::<f64>() < sigmoid(a + z[i]) {
                    mask[j + 1][i] = false;
                }
            }
        }
    }
    dataset.with_new_mask(mask)
}

/// Rows where some chain column is missing while an earlier one is observed.
pub fn monotone_violations(dataset: &Dataset, chain: &[usize]) -> usize {
    (0..dataset.n())
        .filter(|&i| {
            chain
                .windows(2)
                .any(|w| dataset.feature_observed(i, w[0]) && !dataset.feature_observed(i, w[1]))
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn normal_data(n: usize, p: usize, s: u64) -> Dataset {
        let mut rng = seed::rng(s);
        let cols = (0..p).map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let y = (0..n).map(|i| (i % 2) as f64).collect();
        Dataset::complete(cols, y).unwrap()
    }

    fn chain_spec(prop: f64) -> AmputationSpec {
        AmputationSpec {
            always_observed: FeatureSet::new(vec![0, 2, 4]),
            monotone_chain: vec![1, 3, 5],
            independent_missing: vec![6],
            max_prop: prop,
            weight_features: FeatureSet::new(vec![0, 2, 4]),
        }
    }

    #[test]
    fn zero_proportion_is_identity() {
        let d = normal_data(50, 7, 1);
        let out = ampute(&d, &chain_spec(0.0), 3).unwrap();
        assert!(out.is_complete());
        assert!(out.same_observed(&d));
    }

    #[test]
    fn chain_is_nested_and_proportions_calibrated() {
        let d = normal_data(20_000, 7, 2);
        let out = ampute(&d, &chain_spec(0.4), 5).unwrap();
        assert_eq!(monotone_violations(&out, &[1, 3, 5]), 0);
        let frac = |j: usize| (0..out.n()).filter(|&i| !out.feature_observed(i, j)).count() as f64 / out.n() as f64;
        for (j, t) in [(1, 0.4), (3, 0.4 * 2.0 / 3.0), (5, 0.4 / 3.0), (6, 0.4)] {
            assert!((frac(j) - t).abs() < 0.02, "column {j}: {}", frac(j));
        }
        for j in [0, 2, 4] {
            assert_eq!(frac(j), 0.0);
        }
        assert!((0..out.n()).all(|i| out.outcome_observed(i)));
        // Observed cells keep their values.
        for j in 0..7 {
            for i in 0..out.n() {
                if out.feature_observed(i, j) {
                    assert_eq!(out.feature(j)[i], d.feature(j)[i]);
                }
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let d = normal_data(20, 7, 1);
        let mut s = chain_spec(0.4);
        s.monotone_chain.push(0);
        assert!(ampute(&d, &s, 0).is_err());
        let mut s = chain_spec(1.0);
        s.max_prop = 1.0;
        assert!(ampute(&d, &s, 0).is_err());
        let mut s = chain_spec(0.2);
        s.independent_missing = vec![9];
        assert!(ampute(&d, &s, 0).is_err());
    }
}
