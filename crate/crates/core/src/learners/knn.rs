use std::cmp::Ordering;

/// Nearest-neighbour regressor on features standardized by training moments.
#[derive(Debug, Clone)]
pub(crate) struct KnnModel {
    means: Vec<f64>,
    scales: Vec<f64>,
    /// Row-major training matrix, `n * d`.
    train: Vec<f64>,
    y: Vec<f64>,
    d: usize,
    k: usize,
}

impl KnnModel {
    pub(crate) fn fit(x: &[Vec<f64>], y: &[f64], k: usize) -> Self {
        let n = y.len();
        let d = x.len();
        let mut means = Vec::with_capacity(d);
        let mut scales = Vec::with_capacity(d);
        for col in x {
            let m = col.iter().sum::<f64>() / n as f64;
            let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt();
            means.push(m);
            scales.push(if sd > 1e-12 { sd } else { 1.0 });
        }
        let mut train = vec![0.0; n * d];
        for (j, col) in x.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                train[i * d + j] = (v - means[j]) / scales[j];
            }
        }
        KnnModel {
            means,
            scales,
            train,
            y: y.to_vec(),
            d,
            k: k.min(n),
        }
    }

    pub(crate) fn predict(&self, x: &[Vec<f64>], n: usize) -> Vec<f64> {
        let m = self.y.len();
        let k = self.k;
        let mut dist: Vec<(f64, f64)> = Vec::with_capacity(m);
        let mut q = vec![0.0; self.d];
        let mut out = Vec::with_capacity(n);
        // Ordering by (distance, outcome) makes the neighbour average independent
        // of training row order even when distances tie.
        let cmp = |a: &(f64, f64), b: &(f64, f64)| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1));
        for i in 0..n {
            for j in 0..self.d {
                q[j] = (x[j][i] - self.means[j]) / self.scales[j];
            }
            if k == m {
                out.push(self.y.iter().sum::<f64>() / m as f64);
                continue;
            }
            dist.clear();
            for (r, row) in self.train.chunks_exact(self.d).enumerate() {
                let s: f64 = row.iter().zip(&q).map(|(a, b)| (a - b) * (a - b)).sum();
                dist.push((s, self.y[r]));
            }
            dist.select_nth_unstable_by(k - 1, cmp);
            let mut head: Vec<(f64, f64)> = dist[..k].to_vec();
            head.sort_by(|a, b| cmp(a, b).then(Ordering::Equal));
            out.push(head.iter().map(|t| t.1).sum::<f64>() / k as f64);
        }
        out
    }
}
