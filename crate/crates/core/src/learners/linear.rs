use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SCALE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Link {
    Identity { clip_unit: bool },
    Logit,
}

/// Linear predictor on standardized inputs; constant columns get coefficient 0.
#[derive(Debug, Clone)]
pub(crate) struct LinearModel {
    means: Vec<f64>,
    scales: Vec<f64>,
    coef: Vec<f64>,
    intercept: f64,
    link: Link,
}

struct Standardized {
    z: Vec<Vec<f64>>,
    means: Vec<f64>,
    scales: Vec<f64>,
    active: Vec<usize>,
}

fn standardize(x: &[Vec<f64>]) -> Standardized {
    let mut means = Vec::with_capacity(x.len());
    let mut scales = Vec::with_capacity(x.len());
    let mut z = Vec::new();
    let mut active = Vec::new();
    for (j, col) in x.iter().enumerate() {
        let n = col.len() as f64;
        let m = col.iter().sum::<f64>() / n;
        let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
        means.push(m);
        if sd > SCALE_EPS * (1.0 + m.abs()) {
            scales.push(sd);
            z.push(col.iter().map(|v| (v - m) / sd).collect());
            active.push(j);
        } else {
            scales.push(1.0);
        }
    }
    Standardized { z, means, scales, active }
}

/// Solve a symmetric positive (semi)definite system, falling back to a
/// pseudo-inverse when Cholesky fails.
pub(crate) fn solve_spd(a: DMatrix<f64>, b: DVector<f64>) -> Result<DVector<f64>> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(&b));
    }
    a.svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| Error::Numerical(e.to_string()))
}

pub(crate) fn fit_ridge_linear(x: &[Vec<f64>], y: &[f64], lambda: f64, clip_unit: bool) -> Result<LinearModel> {
    let n = y.len();
    let st = standardize(x);
    let d = st.active.len();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let mut coef = vec![0.0; x.len()];
    if d > 0 {
        let nf = n as f64;
        let mut a = DMatrix::<f64>::zeros(d, d);
        let mut b = DVector::<f64>::zeros(d);
        for r in 0..d {
            for c in r..d {
                let s: f64 = st.z[r].iter().zip(&st.z[c]).map(|(u, v)| u * v).sum::<f64>() / nf;
                a[(r, c)] = s;
                a[(c, r)] = s;
            }
            a[(r, r)] += lambda;
            b[r] = st.z[r].iter().zip(y).map(|(u, v)| u * (v - ybar)).sum::<f64>() / nf;
        }
        let beta = solve_spd(a, b)?;
        for (k, &j) in st.active.iter().enumerate() {
            coef[j] = beta[k];
        }
    }
    Ok(LinearModel {
        means: st.means,
        scales: st.scales,
        coef,
        intercept: ybar,
        link: Link::Identity { clip_unit },
    })
}

#[inline]
pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log(1 + exp(t)) without overflow.
#[inline]
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Penalized logistic regression by damped Newton iterations.
///
/// Objective: mean log loss + (lambda / 2) * ||beta||^2, intercept unpenalized.
pub(crate) fn fit_ridge_logistic(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<LinearModel> {
    let n = y.len();
    let nf = n as f64;
    let st = standardize(x);
    let d = st.active.len();
    let ybar = (y.iter().sum::<f64>() / nf).clamp(1e-6, 1.0 - 1e-6);

    let objective = |theta: &DVector<f64>| -> f64 {
        let mut loss = 0.0;
        for i in 0..n {
            let mut eta = theta[0];
            for k in 0..d {
                eta += theta[k + 1] * st.z[k][i];
            }
            loss += softplus(eta) - y[i] * eta;
        }
        let pen: f64 = (1..=d).map(|k| theta[k] * theta[k]).sum();
        loss / nf + 0.5 * lambda * pen
    };

    let mut theta = DVector::<f64>::zeros(d + 1);
    theta[0] = (ybar / (1.0 - ybar)).ln();
    let mut current = objective(&theta);
    let mut eta = vec![0.0; n];
    for _ in 0..100 {
        for (i, e) in eta.iter_mut().enumerate() {
            *e = theta[0] + (0..d).map(|k| theta[k + 1] * st.z[k][i]).sum::<f64>();
        }
        let mut grad = DVector::<f64>::zeros(d + 1);
        let mut hess = DMatrix::<f64>::zeros(d + 1, d + 1);
        let mut feat = vec![0.0; d + 1];
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let w = (mu * (1.0 - mu)).max(1e-12);
            let r = mu - y[i];
            feat[0] = 1.0;
            for k in 0..d {
                feat[k + 1] = st.z[k][i];
            }
            for a in 0..=d {
                grad[a] += r * feat[a];
                for b in a..=d {
                    hess[(a, b)] += w * feat[a] * feat[b];
                }
            }
        }
        for a in 0..=d {
            grad[a] /= nf;
            for b in a..=d {
                hess[(a, b)] /= nf;
                hess[(b, a)] = hess[(a, b)];
            }
        }
        for k in 1..=d {
            grad[k] += lambda * theta[k];
            hess[(k, k)] += lambda;
        }
        let step = solve_spd(hess, grad)?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &theta - &step * t;
            let val = objective(&cand);
            if val <= current {
                theta = cand;
                current = val;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted || step.amax() * t < 1e-10 {
            break;
        }
    }
    if !theta.iter().all(|v| v.is_finite()) {
        return Err(Error::Numerical("logistic fit diverged".into()));
    }
    let mut coef = vec![0.0; x.len()];
    for (k, &j) in st.active.iter().enumerate() {
        coef[j] = theta[k + 1];
    }
    Ok(LinearModel {
        means: st.means,
        scales: st.scales,
        coef,
        intercept: theta[0],
        link: Link::Logit,
    })
}

impl LinearModel {
    /// Coefficients on the standardized scale.
    #[cfg(test)]
    pub(crate) fn coefficients(&self) -> &[f64] {
        &self.coef
    }

    pub(crate) fn predict(&self, x: &[Vec<f64>], n: usize) -> Vec<f64> {
        let mut eta = vec![self.intercept; n];
        for (j, col) in x.iter().enumerate() {
            let b = self.coef[j];
            if b == 0.0 {
                continue;
            }
            let (m, s) = (self.means[j], self.scales[j]);
            for (e, v) in eta.iter_mut().zip(col) {
                *e += b * (v - m) / s;
            }
        }
        match self.link {
            Link::Identity { clip_unit: true } => eta.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            Link::Identity { clip_unit: false } => eta,
            Link::Logit => eta.iter().map(|&v| sigmoid(v)).collect(),
        }
    }
}
