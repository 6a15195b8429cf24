//! Gradient-boosted depth-one trees on quantile-binned features.

use super::linear::{sigmoid, softplus};
use crate::data::OutcomeKind;

const MAX_CUTS: usize = 63;
const MIN_LEAF: usize = 10;
const LEAF_L2: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
struct Stump {
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct StumpEnsemble {
    base: f64,
    stumps: Vec<Stump>,
    logistic: bool,
    loss_trace: Vec<f64>,
}

/// Candidate thresholds: midpoints between distinct values, thinned to at
/// most `MAX_CUTS` quantile positions.
fn cut_points(col: &[f64]) -> Vec<f64> {
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut uniq = sorted.clone();
    uniq.dedup();
    if uniq.len() <= MAX_CUTS + 1 {
        return uniq.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    let n = sorted.len();
    let bins = MAX_CUTS + 1;
    let mut cuts: Vec<f64> = Vec::with_capacity(MAX_CUTS);
    for c in 1..bins {
        let idx = (c * n) / bins;
        if idx == 0 || idx >= n || sorted[idx - 1] == sorted[idx] {
            // Move the cut to the next change in value.
            let mut k = idx.max(1);
            while k < n && sorted[k - 1] == sorted[k] {
                k += 1;
            }
            if k >= n {
                continue;
            }
            let t = 0.5 * (sorted[k - 1] + sorted[k]);
            if cuts.last().is_none_or(|&l| t > l) {
                cuts.push(t);
            }
        } else {
            let t = 0.5 * (sorted[idx - 1] + sorted[idx]);
            if cuts.last().is_none_or(|&l| t > l) {
                cuts.push(t);
            }
        }
    }
    cuts
}

fn mean_loss(f: &[f64], y: &[f64], logistic: bool) -> f64 {
    let n = y.len() as f64;
    if logistic {
        f.iter().zip(y).map(|(&e, &t)| softplus(e) - t * e).sum::<f64>() / n
    } else {
        f.iter().zip(y).map(|(&e, &t)| 0.5 * (e - t) * (e - t)).sum::<f64>() / n
    }
}

impl StumpEnsemble {
    pub(crate) fn fit(x: &[Vec<f64>], y: &[f64], rounds: usize, shrinkage: f64, task: OutcomeKind) -> Self {
        let n = y.len();
        let logistic = task == OutcomeKind::Binary;
        let ybar = y.iter().sum::<f64>() / n as f64;
        let base = if logistic {
            let p = ybar.clamp(1e-6, 1.0 - 1e-6);
            (p / (1.0 - p)).ln()
        } else {
            ybar
        };

        let cuts: Vec<Vec<f64>> = x.iter().map(|c| cut_points(c)).collect();
        let bins: Vec<Vec<u16>> = x
            .iter()
            .zip(&cuts)
            .map(|(col, cs)| col.iter().map(|&v| cs.partition_point(|&t| t <= v) as u16).collect())
            .collect();

        let mut f = vec![base; n];
        let mut loss = mean_loss(&f, y, logistic);
        let mut loss_trace = vec![loss];
        let mut stumps = Vec::new();
        let mut g = vec![0.0; n];
        let mut h = vec![0.0; n];
        let mut cand = vec![0.0; n];

        for _ in 0..rounds {
            for i in 0..n {
                if logistic {
                    let mu = sigmoid(f[i]);
                    g[i] = mu - y[i];
                    h[i] = mu * (1.0 - mu);
                } else {
                    g[i] = f[i] - y[i];
                    h[i] = 1.0;
                }
            }
            let g_tot: f64 = g.iter().sum();
            let h_tot: f64 = h.iter().sum();
            let parent = g_tot * g_tot / (h_tot + LEAF_L2);

            // (gain, feature, cut, gl, hl)
            let mut best: Option<(f64, usize, usize, f64, f64)> = None;
            for (j, cs) in cuts.iter().enumerate() {
                if cs.is_empty() {
                    continue;
                }
                let nb = cs.len() + 1;
                let mut gs = vec![0.0; nb];
                let mut hs = vec![0.0; nb];
                let mut cnt = vec![0usize; nb];
                for (i, &b) in bins[j].iter().enumerate() {
                    gs[b as usize] += g[i];
                    hs[b as usize] += h[i];
                    cnt[b as usize] += 1;
                }
                let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
                for c in 0..cs.len() {
                    gl += gs[c];
                    hl += hs[c];
                    nl += cnt[c];
                    if nl < MIN_LEAF || n - nl < MIN_LEAF {
                        continue;
                    }
                    let (gr, hr) = (g_tot - gl, h_tot - hl);
                    let gain = gl * gl / (hl + LEAF_L2) + gr * gr / (hr + LEAF_L2) - parent;
                    if best.is_none_or(|b| gain > b.0) {
                        best = Some((gain, j, c, gl, hl));
                    }
                }
            }
            let Some((gain, j, c, gl, hl)) = best else { break };
            if gain <= 1e-14 {
                break;
            }
            let (gr, hr) = (g_tot - gl, h_tot - hl);
            let left = -gl / (hl + LEAF_L2);
            let right = -gr / (hr + LEAF_L2);
            let split_bin = c as u16;

            let mut step = shrinkage;
            let mut accepted = None;
            for _ in 0..30 {
                for i in 0..n {
                    cand[i] = f[i] + step * if bins[j][i] <= split_bin { left } else { right };
                }
                let new_loss = mean_loss(&cand, y, logistic);
                if new_loss <= loss {
                    accepted = Some(new_loss);
                    break;
                }
                step *= 0.5;
            }
            let Some(new_loss) = accepted else { break };
            std::mem::swap(&mut f, &mut cand);
            loss = new_loss;
            loss_trace.push(loss);
            stumps.push(Stump {
                feature: j,
                threshold: cuts[j][c],
                left: step * left,
                right: step * right,
            });
        }

        StumpEnsemble {
            base,
            stumps,
            logistic,
            loss_trace,
        }
    }

    pub(crate) fn loss_trace(&self) -> &[f64] {
        &self.loss_trace
    }

    pub(crate) fn predict(&self, x: &[Vec<f64>], n: usize) -> Vec<f64> {
        let mut f = vec![self.base; n];
        for s in &self.stumps {
            let col = &x[s.feature];
            for (fi, &v) in f.iter_mut().zip(col) {
                *fi += if v < s.threshold { s.left } else { s.right };
            }
        }
        if self.logistic {
            f.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cut_points_are_strictly_increasing() {
        let col: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64).collect();
        let cuts = cut_points(&col);
        assert!(cuts.len() <= MAX_CUTS);
        assert!(cuts.windows(2).all(|w| w[0] < w[1]));
        let few = cut_points(&[1.0, 1.0, 2.0, 3.0]);
        assert_eq!(few, vec![1.5, 2.5]);
    }

    #[test]
    fn bins_agree_with_prediction_threshold() {
        // x < threshold must coincide with bin <= cut index.
        let col: Vec<f64> = (0..200).map(|i| (i as f64).sqrt()).collect();
        let cuts = cut_points(&col);
        for (c, &t) in cuts.iter().enumerate() {
            for &v in &col {
                let bin = cuts.partition_point(|&u| u <= v);
                assert_eq!(bin <= c, v < t);
            }
        }
    }

    #[test]
    fn step_function_is_learned() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v > 0.5 { 2.0 } else { -1.0 }).collect();
        let m = StumpEnsemble::fit(std::slice::from_ref(&x), &y, 50, 0.5, OutcomeKind::Continuous);
        let p = m.predict(&[vec![0.1, 0.9]], 2);
        assert!((p[0] + 1.0).abs() < 0.05 && (p[1] - 2.0).abs() < 0.05, "{p:?}");
    }
}
