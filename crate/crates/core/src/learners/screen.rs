//! Univariate rank-correlation screen applied before fitting on large subsets.

use crate::data::{Dataset, FeatureSet};

/// Subsets at or below this size are not screened.
const NO_SCREEN_MAX: usize = 2;
/// Subsets at or above this size keep `LARGE_KEEP` features, others `SMALL_KEEP`.
const LARGE_SUBSET: usize = 100;
const SMALL_KEEP: usize = 2;
const LARGE_KEEP: usize = 10;

/// Average ranks (1-based), ties sharing the mean of their positions.
pub(crate) fn average_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && v[order[j]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j + 1) as f64 / 2.0;
        for &o in &order[i..j] {
            ranks[o] = r;
        }
        i = j;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

/// Spearman correlation with average ranks for ties; 0 when either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Absolute rank correlations of every feature with the outcome on a set of rows.
#[derive(Debug, Clone)]
pub struct RankScreen {
    scores: Vec<f64>,
}

impl RankScreen {
    pub fn new(dataset: &Dataset, rows: &[usize]) -> Self {
        let y: Vec<f64> = rows.iter().map(|&i| dataset.outcome()[i]).collect();
        let ry = average_ranks(&y);
        let scores = (0..dataset.p())
            .map(|j| {
                let col = dataset.feature(j);
                let x: Vec<f64> = rows.iter().map(|&i| col[i]).collect();
                pearson(&average_ranks(&x), &ry).abs()
            })
            .collect();
        RankScreen { scores }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Keep the strongest features of `subset`; lower index wins ties.
    pub fn apply(&self, subset: &FeatureSet) -> FeatureSet {
        let m = subset.len();
        if m <= NO_SCREEN_MAX {
            return subset.clone();
        }
        let keep = if m >= LARGE_SUBSET { LARGE_KEEP } else { SMALL_KEEP };
        let mut idx = subset.indices().to_vec();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx.truncate(keep);
        FeatureSet::new(idx)
    }
}

/// Screen `subset` using every row of the dataset.
pub fn screen_by_rank_correlation(dataset: &Dataset, subset: &FeatureSet) -> FeatureSet {
    let rows: Vec<usize> = (0..dataset.n()).collect();
    RankScreen::new(dataset, &rows).apply(subset)
}
