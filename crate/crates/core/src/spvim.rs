//! Shapley population variable importance: subset sampling, the constrained
//! weighted least-squares Shapley solver, and cross-fitted estimation with
//! influence-function and subset-sampling variance.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::Serialize;
use statrs::function::factorial::{binomial, ln_binomial};

use crate::data::{make_folds, Dataset, FeatureSet};
use crate::error::{Error, Result};
use crate::learners::StackConfig;
use crate::predictiveness::{CrossFitter, Measure, PredictivenessEstimate};
use crate::seed;

/// Largest p for which exhaustive enumeration is attempted.
pub const MAX_EXHAUSTIVE_P: usize = 24;
const DEFAULT_EXHAUSTIVE_P: usize = 12;
const DEFAULT_DRAWS_PER_FEATURE: usize = 48;
const RANK_TOL: f64 = 1e-12;

/// Shapley kernel weight for a subset of size `m` out of `p`; zero for the
/// anchors ∅ and the full set, which enter as constraints.
pub fn shapley_kernel_weight(p: usize, m: usize) -> f64 {
    if m == 0 || m >= p {
        return 0.0;
    }
    let denom = ln_binomial(p as u64, m as u64) + ((m * (p - m)) as f64).ln();
    (p - 1) as f64 * (-denom).exp()
}

/// Default subset budget: exhaustive for p ≤ 12, else min(2^p, 48·p).
pub fn default_budget(p: usize) -> usize {
    if p <= DEFAULT_EXHAUSTIVE_P {
        1usize << p
    } else {
        let draws = DEFAULT_DRAWS_PER_FEATURE * p;
        if p < usize::BITS as usize - 1 {
            draws.min(1usize << p)
        } else {
            draws
        }
    }
}

/// Distinct feature subsets drawn for the Shapley solve.
#[derive(Debug, Clone, Serialize)]
pub struct SubsetSample {
    p: usize,
    subsets: Vec<FeatureSet>,
    multiplicities: Vec<u64>,
    /// Index into `subsets` of every random draw, in draw order (sampled mode).
    #[serde(skip)]
    draws: Vec<usize>,
    exhaustive: bool,
}

impl SubsetSample {
    pub fn p(&self) -> usize {
        self.p
    }

    /// Distinct subsets; the first is ∅ and the second the full set.
    pub fn subsets(&self) -> &[FeatureSet] {
        &self.subsets
    }

    pub fn multiplicities(&self) -> &[u64] {
        &self.multiplicities
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    pub fn draw_count(&self) -> usize {
        self.draws.len()
    }

    /// Kernel weight of each subset size 0..=p.
    pub fn shapley_kernel_weights(&self) -> Vec<f64> {
        (0..=self.p).map(|m| shapley_kernel_weight(self.p, m)).collect()
    }

    /// Weight each non-anchor subset receives in the least-squares problem:
    /// the kernel weight when enumerating, the draw frequency when sampling
    /// (draws already occur in proportion to the kernel).
    fn solver_weights(&self) -> Vec<f64> {
        let d = self.draws.len().max(1) as f64;
        self.subsets
            .iter()
            .zip(&self.multiplicities)
            .enumerate()
            .map(|(i, (s, &m))| {
                if i < 2 {
                    0.0
                } else if self.exhaustive {
                    shapley_kernel_weight(self.p, s.len())
                } else {
                    m as f64 / d
                }
            })
            .collect()
    }
}

/// Draw subsets for the Shapley solve. A budget of at least 2^p enumerates
/// every subset once; otherwise ∅ and the full set are always included and
/// `budget - 2` subsets are drawn with size probability proportional to the
/// total kernel mass of that size, uniformly within size.
pub fn sample_subsets(p: usize, budget: usize, seed_value: u64) -> Result<SubsetSample> {
    if p == 0 {
        return Err(Error::invalid("need at least one feature"));
    }
    if budget < 2 {
        return Err(Error::invalid("subset budget must be at least 2"));
    }
    let exhaustive = p < usize::BITS as usize - 1 && budget >= (1usize << p);
    if exhaustive {
        if p > MAX_EXHAUSTIVE_P {
            return Err(Error::invalid(format!(
                "exhaustive enumeration is limited to p <= {MAX_EXHAUSTIVE_P}"
            )));
        }
        let full = (1u64 << p) - 1;
        let mut subsets = vec![FeatureSet::empty(), FeatureSet::full(p)];
        subsets.extend((1..full).map(|m| FeatureSet::from_mask(m, p)));
        let multiplicities = vec![1; subsets.len()];
        return Ok(SubsetSample {
            p,
            subsets,
            multiplicities,
            draws: Vec::new(),
            exhaustive: true,
        });
    }

    let mut subsets = vec![FeatureSet::empty(), FeatureSet::full(p)];
    let mut multiplicities = vec![1u64, 1];
    let mut position: HashMap<FeatureSet, usize> = HashMap::new();
    let mut draws = Vec::with_capacity(budget - 2);
    if p >= 2 {
        // P(size = m) ∝ C(p, m) · kernel(m) ∝ 1 / (m (p - m)).
        let mass: Vec<f64> = (1..p).map(|m| 1.0 / (m * (p - m)) as f64).collect();
        let total: f64 = mass.iter().sum();
        let mut rng = seed::rng(seed_value);
        for _ in 0..budget - 2 {
            let mut u = rng.gen::<f64>() * total;
            let mut m = p - 1;
            for (i, &w) in mass.iter().enumerate() {
                if u < w {
                    m = i + 1;
                    break;
                }
                u -= w;
            }
            let s = FeatureSet::new(index::sample(&mut rng, p, m).into_vec());
            let at = *position.entry(s.clone()).or_insert_with(|| {
                subsets.push(s);
                multiplicities.push(0);
                subsets.len() - 1
            });
            multiplicities[at] += 1;
            draws.push(at);
        }
    }
    Ok(SubsetSample {
        p,
        subsets,
        multiplicities,
        draws,
        exhaustive: false,
    })
}

/// The linear map from subset values to Shapley estimates induced by the
/// constrained least-squares problem for a fixed subset sample.
#[derive(Debug, Clone)]
pub struct ShapleyOperator {
    /// p × (number of distinct subsets)
    coef: DMatrix<f64>,
    /// Top-left p × p block of the inverse KKT matrix.
    projector: DMatrix<f64>,
}

impl ShapleyOperator {
    pub fn new(sample: &SubsetSample) -> Result<Self> {
        let p = sample.p;
        let w = sample.solver_weights();
        let mut kkt = DMatrix::<f64>::zeros(p + 1, p + 1);
        for (s, &ws) in sample.subsets.iter().zip(&w) {
            if ws == 0.0 {
                continue;
            }
            let idx = s.indices();
            for &a in idx {
                for &b in idx {
                    kkt[(a, b)] += ws;
                }
            }
        }
        for j in 0..p {
            kkt[(j, p)] = 1.0;
            kkt[(p, j)] = 1.0;
        }
        let rank_error = || Error::RankDeficient {
            p,
            budget: sample.draws.len() + 2,
        };
        let lu = kkt.lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..=p).map(|i| u[(i, i)].abs()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(max > 0.0) || min <= RANK_TOL * max {
            return Err(rank_error());
        }
        let inv = lu.try_inverse().ok_or_else(rank_error)?;
        let projector = inv.view((0, 0), (p, p)).into_owned();
        let q: DVector<f64> = inv.view((0, p), (p, 1)).column(0).into_owned();

        let n_sub = sample.subsets.len();
        let mut coef = DMatrix::<f64>::zeros(p, n_sub);
        let mut empty_col = -q.clone();
        for (c, (s, &ws)) in sample.subsets.iter().zip(&w).enumerate() {
            if ws == 0.0 {
                continue;
            }
            let mut col = DVector::<f64>::zeros(p);
            for &a in s.indices() {
                col += projector.column(a) * ws;
            }
            empty_col -= &col;
            coef.set_column(c, &col);
        }
        coef.set_column(0, &empty_col);
        coef.set_column(1, &q);
        Ok(ShapleyOperator { coef, projector })
    }

    /// Coefficient of each subset value in each ψ_j (p × subsets).
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coef
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        (&self.coef * DVector::from_column_slice(values)).iter().copied().collect()
    }
}

/// Solve for ψ given one value per subset of `sample` (aligned with
/// `sample.subsets()`).
pub fn shapley_solve(sample: &SubsetSample, values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != sample.subsets.len() {
        return Err(Error::invalid(format!(
            "{} values for {} subsets",
            values.len(),
            sample.subsets.len()
        )));
    }
    Ok(ShapleyOperator::new(sample)?.apply(values))
}

/// Direct evaluation of the Shapley sum over every subset not containing j.
pub fn shapley_exact(p: usize, values: &HashMap<FeatureSet, f64>) -> Result<Vec<f64>> {
    if p == 0 || p > 20 {
        return Err(Error::invalid("exact Shapley values are limited to 1 <= p <= 20"));
    }
    let look = |mask: u64| -> Result<f64> {
        let s = FeatureSet::from_mask(mask, p);
        values
            .get(&s)
            .copied()
            .ok_or_else(|| Error::invalid(format!("no value for subset {s}")))
    };
    let table: Vec<f64> = (0..1u64 << p).map(look).collect::<Result<_>>()?;
    let mut psi = vec![0.0; p];
    for (j, out) in psi.iter_mut().enumerate() {
        let bit = 1u64 << j;
        for mask in 0..1u64 << p {
            if mask & bit != 0 {
                continue;
            }
            let m = mask.count_ones() as u64;
            let w = 1.0 / (p as f64 * binomial(p as u64 - 1, m));
            *out += w * (table[(mask | bit) as usize] - table[mask as usize]);
        }
    }
    Ok(psi)
}

/// Estimated importance of every feature from one complete dataset.
#[derive(Debug, Clone, Serialize)]
pub struct SpvimEstimate {
    pub measure: Measure,
    pub psi: Vec<f64>,
    pub v_null: f64,
    pub v_full: f64,
    /// Total variance of each ψ_j.
    pub variances: Vec<f64>,
    pub eif_variances: Vec<f64>,
    pub sampling_variances: Vec<f64>,
    pub exhaustive: bool,
    #[serde(skip)]
    pub subset_values: Vec<(FeatureSet, PredictivenessEstimate)>,
}

impl SpvimEstimate {
    pub fn p(&self) -> usize {
        self.psi.len()
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        self.variances.iter().map(|v| v.sqrt()).collect()
    }

    /// Two-sided normal-theory confidence intervals.
    pub fn confidence_intervals(&self, level: f64) -> Vec<(f64, f64)> {
        let z = crate::stats::normal_quantile(0.5 + level / 2.0);
        self.psi
            .iter()
            .zip(self.standard_errors())
            .map(|(&p, se)| (p - z * se, p + z * se))
            .collect()
    }
}

/// Options for [`estimate_spvim`].
#[derive(Debug, Clone)]
pub struct SpvimOptions {
    pub measure: Option<Measure>,
    pub learners: StackConfig,
    pub folds: usize,
    /// Subset budget; `None` selects [`default_budget`].
    pub budget: Option<usize>,
}

impl SpvimOptions {
    pub fn new(learners: StackConfig) -> Self {
        SpvimOptions {
            measure: None,
            learners,
            folds: 5,
            budget: None,
        }
    }
}

/// Cross-fitted Shapley importance of every feature.
pub fn estimate_spvim(dataset: &Dataset, options: &SpvimOptions, seed_value: u64) -> Result<SpvimEstimate> {
    dataset.require_complete("importance estimation")?;
    let p = dataset.p();
    let measure = options
        .measure
        .unwrap_or_else(|| Measure::for_outcome(dataset.outcome_kind()));
    let budget = options.budget.unwrap_or_else(|| default_budget(p));
    let folds = make_folds(dataset, options.folds, seed::derive(seed_value, &[seed::STREAM_FOLDS]))?;
    let sample = sample_subsets(p, budget, seed::derive(seed_value, &[seed::STREAM_SUBSETS]))?;
    let op = ShapleyOperator::new(&sample)?;

    let fitter = CrossFitter::new(
        dataset,
        measure,
        &options.learners,
        &folds,
        seed::derive(seed_value, &[seed::STREAM_SPVIM]),
    )?;
    let estimates = fitter.estimate_many(sample.subsets())?;
    let values: Vec<f64> = estimates.iter().map(|e| e.value).collect();
    let psi = op.apply(&values);

    let n = dataset.n();
    let nf = n as f64;
    let coef = op.coefficients();
    let mut eif_variances = vec![0.0; p];
    let mut phi = vec![0.0; n];
    for (j, out) in eif_variances.iter_mut().enumerate() {
        phi.iter_mut().for_each(|v| *v = 0.0);
        for (c, e) in estimates.iter().enumerate() {
            let l = coef[(j, c)];
            if l == 0.0 || e.eif.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (f, &v) in phi.iter_mut().zip(&e.eif) {
                *f += l * v;
            }
        }
        *out = phi.iter().map(|v| v * v).sum::<f64>() / (nf * nf);
    }

    let mut sampling_variances = vec![0.0; p];
    if !sample.exhaustive && !sample.draws.is_empty() {
        // Per-draw influence on the solution: P a_d r_d.
        let d = sample.draws.len() as f64;
        let v0 = values[0];
        for &at in &sample.draws {
            let s = &sample.subsets[at];
            let resid = values[at] - v0 - s.indices().iter().map(|&j| psi[j]).sum::<f64>();
            if resid == 0.0 {
                continue;
            }
            for (j, out) in sampling_variances.iter_mut().enumerate() {
                let infl: f64 = s.indices().iter().map(|&a| op.projector[(j, a)]).sum::<f64>() * resid;
                *out += infl * infl;
            }
        }
        sampling_variances.iter_mut().for_each(|v| *v /= d * d);
    }

    let variances = eif_variances
        .iter()
        .zip(&sampling_variances)
        .map(|(a, b)| a + b)
        .collect();
    Ok(SpvimEstimate {
        measure,
        psi,
        v_null: values[0],
        v_full: values[1],
        variances,
        eif_variances,
        sampling_variances,
        exhaustive: sample.exhaustive,
        subset_values: sample.subsets.iter().cloned().zip(estimates).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_values(p: usize, f: impl Fn(&FeatureSet) -> f64) -> HashMap<FeatureSet, f64> {
        (0..1u64 << p)
            .map(|m| {
                let s = FeatureSet::from_mask(m, p);
                let v = f(&s);
                (s, v)
            })
            .collect()
    }

    fn solve_exhaustive(p: usize, values: &HashMap<FeatureSet, f64>) -> Vec<f64> {
        let sample = sample_subsets(p, 1 << p, 0).unwrap();
        let v: Vec<f64> = sample.subsets().iter().map(|s| values[s]).collect();
        shapley_solve(&sample, &v).unwrap()
    }

    fn two_feature_game() -> HashMap<FeatureSet, f64> {
        let mut m = HashMap::new();
        m.insert(FeatureSet::empty(), 0.5);
        m.insert(FeatureSet::new(vec![0]), 0.7);
        m.insert(FeatureSet::new(vec![1]), 0.6);
        m.insert(FeatureSet::full(2), 0.8);
        m
    }

    #[test]
    fn two_feature_example() {
        let g = two_feature_game();
        let exact = shapley_exact(2, &g).unwrap();
        let solved = solve_exhaustive(2, &g);
        for (a, b) in [(exact[0], 0.2), (exact[1], 0.1), (solved[0], 0.2), (solved[1], 0.1)] {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn additive_and_null_games() {
        let beta = [0.3, -0.1, 0.7, 0.05];
        let add = all_values(4, |s| 1.5 + s.indices().iter().map(|&j| beta[j]).sum::<f64>());
        let psi = solve_exhaustive(4, &add);
        for (a, b) in psi.iter().zip(beta) {
            assert!((a - b).abs() < 1e-12);
        }
        let null = all_values(3, |_| 0.42);
        assert!(solve_exhaustive(3, &null).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn symmetric_game_gives_equal_values() {
        let g = all_values(4, |s| (s.len() as f64).sqrt());
        let psi = shapley_exact(4, &g).unwrap();
        assert!(psi.iter().all(|v| (v - psi[0]).abs() < 1e-12));
        assert!((psi.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn incomplete_map_is_rejected() {
        let mut g = two_feature_game();
        g.remove(&FeatureSet::new(vec![1]));
        assert!(shapley_exact(2, &g).is_err());
    }

    #[test]
    fn kernel_weight_is_symmetric() {
        for p in 2..10 {
            for m in 1..p {
                let a = shapley_kernel_weight(p, m);
                let b = shapley_kernel_weight(p, p - m);
                assert!((a - b).abs() <= 1e-14 * a.max(b));
                let direct = (p - 1) as f64 / (binomial(p as u64, m as u64) * (m * (p - m)) as f64);
                assert!((a - direct).abs() <= 1e-12 * direct);
            }
        }
    }

    #[test]
    fn exhaustive_sample_lists_every_subset() {
        let s = sample_subsets(2, 4, 0).unwrap();
        assert!(s.is_exhaustive());
        assert_eq!(s.subsets().len(), 4);
        let s = sample_subsets(10, 50, 3).unwrap();
        assert!(!s.is_exhaustive());
        assert_eq!(s.draw_count(), 48);
        assert_eq!(s.subsets()[0], FeatureSet::empty());
        assert_eq!(s.subsets()[1], FeatureSet::full(10));
        assert_eq!(s.multiplicities().iter().sum::<u64>(), 50);
        assert_eq!(s.subsets().iter().filter(|x| x.is_empty()).count(), 1);
    }

    #[test]
    fn default_budget_rule() {
        assert_eq!(default_budget(6), 64);
        assert_eq!(default_budget(12), 4096);
        assert_eq!(default_budget(13), 13 * 48);
        assert_eq!(default_budget(30), 1440);
    }

    #[test]
    fn tiny_budget_is_rank_deficient() {
        let s = sample_subsets(10, 3, 1).unwrap();
        let v = vec![0.0; s.subsets().len()];
        assert!(matches!(shapley_solve(&s, &v), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn sampled_solution_is_efficient() {
        let p = 14;
        let s = sample_subsets(p, 600, 9).unwrap();
        let v: Vec<f64> = s
            .subsets()
            .iter()
            .map(|x| 0.5 + 0.03 * x.len() as f64 + if x.contains(2) { 0.1 } else { 0.0 })
            .collect();
        let psi = shapley_solve(&s, &v).unwrap();
        assert!((psi.iter().sum::<f64>() - (v[1] - v[0])).abs() < 1e-9);
        // Additive games are recovered from any identifying sample.
        assert!((psi[2] - 0.13).abs() < 1e-9);
    }
}
