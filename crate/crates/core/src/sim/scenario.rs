use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, LogNormal, Normal, StandardNormal, Weibull};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::data::{Dataset, FeatureSet};
use crate::error::{Error, Result};
use crate::missingness::{ampute, AmputationSpec};
use crate::predictiveness::auc;
use crate::seed;
use crate::stats::normal_cdf;

/// Outcome regression f(β, x) inside the probit link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeForm {
    /// x β
    Linear,
    /// 2 [β1 x2 x3 − β2 tanh(x6)]
    NonlinearS2,
    /// 2 [β1 sin(π c1/4) + β2 c2 c3 + β3 tanh(c3) + β4 cos(π c4/4) + β5 c5 c1 − β6 tanh(c6)]
    NonlinearS345,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureDist {
    IidNormal,
    /// Unit variances; ρ2 between members of `active` (0-based), 0 between
    /// active and inactive features, ρ1^|i−j| among inactive features.
    CorrelatedNormal { rho1: f64, rho2: f64, active: Vec<usize> },
    /// X1 ~ N(0.5, 1), X2 ~ Bernoulli(0.5), X3 ~ Weibull(shape 1.75, scale 1.9),
    /// X4 ~ LogNormal(0.5, 0.5), X5 ~ Bernoulli(0.5), X6 ~ N(0.25, 1), rest N(0, 1).
    Nonnormal,
}

/// Complete generative description of a simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: u8,
    pub p: usize,
    pub outcome_form: OutcomeForm,
    pub feature_dist: FeatureDist,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub missing_prop: f64,
}

const WEIBULL_SHAPE: f64 = 1.75;
const WEIBULL_SCALE: f64 = 1.9;
const LOGNORMAL_MU: f64 = 0.5;
const LOGNORMAL_SIGMA: f64 = 0.5;

fn mixed_beta(p: usize) -> Vec<f64> {
    let mut b = vec![-1.0, 1.0, -0.5, 0.5, 1.0 / 3.0, -1.0 / 3.0];
    b.resize(p, 0.0);
    b
}

impl ScenarioSpec {
    /// The eight published configurations. Scenarios 2 and 6–8 have p = 6;
    /// the others accept any p ≥ 6.
    pub fn preset(id: u8, p: usize, missing_prop: f64) -> Result<Self> {
        let weak = vec![0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let (p, outcome_form, feature_dist, beta) = match id {
            1 => (p, OutcomeForm::Linear, FeatureDist::IidNormal, mixed_beta(p)),
            2 => (
                6,
                OutcomeForm::NonlinearS2,
                FeatureDist::CorrelatedNormal {
                    rho1: 0.3,
                    rho2: 0.95,
                    active: vec![1, 2, 5],
                },
                vec![1.0, 1.0],
            ),
            3 => (p, OutcomeForm::Linear, FeatureDist::Nonnormal, mixed_beta(p)),
            4 => (p, OutcomeForm::NonlinearS345, FeatureDist::IidNormal, mixed_beta(p)),
            5 => (p, OutcomeForm::NonlinearS345, FeatureDist::Nonnormal, mixed_beta(p)),
            6 => (6, OutcomeForm::Linear, FeatureDist::IidNormal, weak),
            7 => (
                6,
                OutcomeForm::Linear,
                FeatureDist::CorrelatedNormal {
                    rho1: 0.3,
                    rho2: 0.95,
                    active: vec![1, 5],
                },
                weak,
            ),
            8 => (6, OutcomeForm::NonlinearS345, FeatureDist::IidNormal, weak),
            other => return Err(Error::invalid(format!("scenario id must be 1-8, got {other}"))),
        };
        let spec = ScenarioSpec {
            id,
            p,
            outcome_form,
            feature_dist,
            beta0: 0.5,
            beta,
            missing_prop,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 6 {
            return Err(Error::invalid(format!("scenarios need p >= 6, got {}", self.p)));
        }
        let need = match self.outcome_form {
            OutcomeForm::Linear => self.p,
            OutcomeForm::NonlinearS2 => 2,
            OutcomeForm::NonlinearS345 => 6,
        };
        if self.beta.len() != need {
            return Err(Error::invalid(format!("expected {need} coefficients, got {}", self.beta.len())));
        }
        if !(0.0..1.0).contains(&self.missing_prop) {
            return Err(Error::invalid("missing_prop must lie in [0, 1)"));
        }
        if let FeatureDist::CorrelatedNormal { active, .. } = &self.feature_dist {
            if active.iter().any(|&j| j >= self.p) {
                return Err(Error::invalid("correlated active set exceeds p"));
            }
            self.cholesky()?;
        }
        Ok(())
    }

    /// Features on which the outcome regression depends (0-based).
    pub fn truth(&self) -> FeatureSet {
        let b = &self.beta;
        let mut active = Vec::new();
        match self.outcome_form {
            OutcomeForm::Linear => active.extend((0..self.p).filter(|&j| b[j] != 0.0)),
            OutcomeForm::NonlinearS2 => {
                if b[0] != 0.0 {
                    active.extend([1, 2]);
                }
                if b[1] != 0.0 {
                    active.push(5);
                }
            }
            OutcomeForm::NonlinearS345 => {
                let terms: [&[usize]; 6] = [&[0], &[1, 2], &[2], &[3], &[4, 0], &[5]];
                for (coef, t) in b.iter().zip(terms) {
                    if *coef != 0.0 {
                        active.extend_from_slice(t);
                    }
                }
            }
        }
        FeatureSet::new(active)
    }

    /// Amputation design: Y, X1, X3, X5 always observed and drive the
    /// missingness; chain (X2, X4, X6); the lowest-index noise features
    /// (3 of them when p ≤ 30, 40 otherwise) missing independently.
    pub fn amputation(&self) -> AmputationSpec {
        let truth = self.truth();
        let fixed = FeatureSet::new(vec![0, 2, 4]);
        let noise_count = if self.p <= 6 {
            0
        } else if self.p <= 30 {
            3
        } else {
            40
        };
        let independent: Vec<usize> = (6..self.p).filter(|j| !truth.contains(*j)).take(noise_count).collect();
        AmputationSpec {
            always_observed: fixed.clone(),
            monotone_chain: vec![1, 3, 5],
            independent_missing: independent,
            max_prop: self.missing_prop,
            weight_features: fixed,
        }
    }

    fn correlation(&self) -> Option<DMatrix<f64>> {
        let FeatureDist::CorrelatedNormal { rho1, rho2, active } = &self.feature_dist else {
            return None;
        };
        let p = self.p;
        Some(DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0
            } else if active.contains(&i) && active.contains(&j) {
                *rho2
            } else if active.contains(&i) != active.contains(&j) {
                // Exchangeable active block, independent of the rest.
                0.0
            } else {
                rho1.powi((i as i32 - j as i32).abs())
            }
        }))
    }

    fn cholesky(&self) -> Result<Option<DMatrix<f64>>> {
        match self.correlation() {
            None => Ok(None),
            Some(s) => s
                .cholesky()
                .map(|c| Some(c.l()))
                .ok_or_else(|| Error::invalid("feature correlation matrix is not positive definite")),
        }
    }

    /// Analytic mean and standard deviation of feature j.
    fn moments(&self, j: usize) -> (f64, f64) {
        if self.feature_dist != FeatureDist::Nonnormal {
            return (0.0, 1.0);
        }
        match j {
            0 => (0.5, 1.0),
            1 | 4 => (0.5, 0.5),
            2 => {
                let g1 = gamma(1.0 + 1.0 / WEIBULL_SHAPE);
                let g2 = gamma(1.0 + 2.0 / WEIBULL_SHAPE);
                (WEIBULL_SCALE * g1, WEIBULL_SCALE * (g2 - g1 * g1).sqrt())
            }
            3 => {
                let s2 = LOGNORMAL_SIGMA * LOGNORMAL_SIGMA;
                let mean = (LOGNORMAL_MU + s2 / 2.0).exp();
                (mean, ((s2.exp() - 1.0) * (2.0 * LOGNORMAL_MU + s2).exp()).sqrt())
            }
            5 => (0.25, 1.0),
            _ => (0.0, 1.0),
        }
    }

    fn draw_features(&self, n: usize, rng: &mut seed::Rng) -> Result<Vec<Vec<f64>>> {
        let p = self.p;
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); p];
        match self.cholesky()? {
            Some(l) => {
                let mut z = vec![0.0; p];
                for _ in 0..n {
                    z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                    for (i, col) in cols.iter_mut().enumerate() {
                        col.push((0..=i).map(|k| l[(i, k)] * z[k]).sum());
                    }
                }
            }
            None if self.feature_dist == FeatureDist::Nonnormal => {
                let n1 = Normal::new(0.5, 1.0).unwrap();
                let bern = Bernoulli::new(0.5).unwrap();
                let weib = Weibull::new(WEIBULL_SCALE, WEIBULL_SHAPE).unwrap();
                let logn = LogNormal::new(LOGNORMAL_MU, LOGNORMAL_SIGMA).unwrap();
                let n6 = Normal::new(0.25, 1.0).unwrap();
                for _ in 0..n {
                    cols[0].push(n1.sample(rng));
                    cols[1].push(bern.sample(rng) as u8 as f64);
                    cols[2].push(weib.sample(rng));
                    cols[3].push(logn.sample(rng));
                    cols[4].push(bern.sample(rng) as u8 as f64);
                    cols[5].push(n6.sample(rng));
                    for col in cols.iter_mut().skip(6) {
                        col.push(rng.sample(StandardNormal));
                    }
                }
            }
            None => {
                for _ in 0..n {
                    for col in cols.iter_mut() {
                        col.push(rng.sample(StandardNormal));
                    }
                }
            }
        }
        Ok(cols)
    }

    fn regression(&self, cols: &[Vec<f64>], i: usize) -> f64 {
        let b = &self.beta;
        match self.outcome_form {
            OutcomeForm::Linear => b.iter().zip(cols).map(|(c, x)| c * x[i]).sum(),
            OutcomeForm::NonlinearS2 => 2.0 * (b[0] * cols[1][i] * cols[2][i] - b[1] * cols[5][i].tanh()),
            OutcomeForm::NonlinearS345 => {
                let c = |j: usize| {
                    let (m, s) = self.moments(j);
                    (cols[j][i] - m) / s
                };
                2.0 * (b[0] * (PI / 4.0 * c(0)).sin()
                    + b[1] * c(1) * c(2)
                    + b[2] * c(2).tanh()
                    + b[3] * (PI / 4.0 * c(3)).cos()
                    + b[4] * c(4) * c(0)
                    - b[5] * c(5).tanh())
            }
        }
    }

    /// P(Y = 1 | X) for each row.
    pub fn true_scores(&self, cols: &[Vec<f64>]) -> Vec<f64> {
        let n = cols.first().map_or(0, Vec::len);
        (0..n).map(|i| normal_cdf(self.beta0 + self.regression(cols, i))).collect()
    }

    fn simulate(&self, n: usize, seed_value: u64) -> Result<(Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
        let mut rng = seed::rng_for(seed_value, &[seed::STREAM_DATA]);
        let cols = self.draw_features(n, &mut rng)?;
        let scores = self.true_scores(&cols);
        let y = scores.iter().map(|&s| (rng.gen::<f64>() < s) as u8 as f64).collect();
        Ok((cols, y, scores))
    }
}

/// Draw a dataset of size n (amputed when `missing_prop > 0`) and return it
/// with the active feature set.
pub fn gen_scenario(spec: &ScenarioSpec, n: usize, seed_value: u64) -> Result<(Dataset, FeatureSet)> {
    spec.validate()?;
    let (cols, y, _) = spec.simulate(n, seed_value)?;
    let complete = Dataset::complete(cols, y)?;
    let data = if spec.missing_prop > 0.0 {
        ampute(&complete, &spec.amputation(), seed_value)?
    } else {
        complete
    };
    Ok((data, spec.truth()))
}

/// Monte Carlo AUC of the true success probability against simulated outcomes.
pub fn optimal_auc(spec: &ScenarioSpec, mc_n: usize, seed_value: u64) -> Result<f64> {
    if mc_n < 10_000 {
        return Err(Error::invalid("optimal AUC needs at least 10^4 Monte Carlo draws"));
    }
    let (_, y, scores) = spec.simulate(mc_n, seed_value)?;
    auc(&scores, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truths() {
        assert_eq!(ScenarioSpec::preset(1, 30, 0.0).unwrap().truth(), FeatureSet::new((0..6).collect()));
        assert_eq!(ScenarioSpec::preset(2, 6, 0.0).unwrap().truth(), FeatureSet::new(vec![1, 2, 5]));
        assert_eq!(ScenarioSpec::preset(6, 6, 0.0).unwrap().truth(), FeatureSet::new(vec![1, 5]));
        assert_eq!(ScenarioSpec::preset(7, 6, 0.0).unwrap().truth(), FeatureSet::new(vec![1, 5]));
        assert_eq!(ScenarioSpec::preset(8, 6, 0.0).unwrap().truth(), FeatureSet::new(vec![1, 2, 5]));
        assert!(ScenarioSpec::preset(9, 6, 0.0).is_err());
    }

    #[test]
    fn complete_when_no_missingness() {
        let spec = ScenarioSpec::preset(1, 30, 0.0).unwrap();
        let (d, _) = gen_scenario(&spec, 100, 1).unwrap();
        assert!(d.is_complete());
        assert_eq!((d.n(), d.p()), (100, 30));
    }

    #[test]
    fn nonnormal_moments_match_sample() {
        let spec = ScenarioSpec::preset(3, 8, 0.0).unwrap();
        let (d, _) = gen_scenario(&spec, 200_000, 5).unwrap();
        for j in 0..8 {
            let (m, s) = spec.moments(j);
            let col = d.feature(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
            assert!((mean - m).abs() < 0.01 && (sd - s).abs() < 0.01, "feature {j}: {mean} {sd}");
        }
    }

    #[test]
    fn noise_missing_columns() {
        let s = ScenarioSpec::preset(1, 30, 0.4).unwrap().amputation();
        assert_eq!(s.independent_missing, vec![6, 7, 8]);
        assert_eq!(ScenarioSpec::preset(1, 500, 0.4).unwrap().amputation().independent_missing.len(), 40);
        assert!(ScenarioSpec::preset(2, 6, 0.4).unwrap().amputation().independent_missing.is_empty());
    }
}
