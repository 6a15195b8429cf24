use serde::Serialize;

use crate::error::{Error, Result};
use crate::spvim::SpvimEstimate;

/// Importance estimates combined across imputations by Rubin's rules.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PooledEstimate {
    pub psi_bar: Vec<f64>,
    pub within_var: Vec<f64>,
    pub between_var: Vec<f64>,
    pub total_var: Vec<f64>,
    pub m: usize,
}

impl PooledEstimate {
    /// A single complete-data estimate: no between-imputation component.
    pub fn from_single(estimate: &SpvimEstimate) -> Self {
        let p = estimate.psi.len();
        PooledEstimate {
            psi_bar: estimate.psi.clone(),
            within_var: estimate.variances.clone(),
            between_var: vec![0.0; p],
            total_var: estimate.variances.clone(),
            m: 1,
        }
    }

    pub fn p(&self) -> usize {
        self.psi_bar.len()
    }
}

/// Mean of `v` that is independent of input order and exact when all
/// entries are equal.
fn stable_mean(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let lo = v[0];
    lo + v.iter().map(|x| x - lo).sum::<f64>() / v.len() as f64
}

/// Pool per-imputation point estimates and variances componentwise.
pub fn pool_rubin_values(psis: &[Vec<f64>], variances: &[Vec<f64>]) -> Result<PooledEstimate> {
    let m = psis.len();
    if m < 2 {
        return Err(Error::invalid("pooling needs at least two imputations"));
    }
    if variances.len() != m {
        return Err(Error::invalid("one variance vector per estimate is required"));
    }
    let p = psis[0].len();
    if psis.iter().chain(variances).any(|v| v.len() != p) {
        return Err(Error::invalid("estimates have different feature counts"));
    }
    let mf = m as f64;
    let mut out = PooledEstimate {
        psi_bar: Vec::with_capacity(p),
        within_var: Vec::with_capacity(p),
        between_var: Vec::with_capacity(p),
        total_var: Vec::with_capacity(p),
        m,
    };
    for j in 0..p {
        let mut col: Vec<f64> = psis.iter().map(|v| v[j]).collect();
        let bar = stable_mean(&mut col);
        let mut dev: Vec<f64> = col.iter().map(|x| (x - bar) * (x - bar)).collect();
        dev.sort_by(f64::total_cmp);
        let between = dev.iter().sum::<f64>() / (mf - 1.0);
        let mut var: Vec<f64> = variances.iter().map(|v| v[j]).collect();
        let within = stable_mean(&mut var);
        out.psi_bar.push(bar);
        out.within_var.push(within);
        out.between_var.push(between);
        out.total_var.push(within + (mf + 1.0) / mf * between);
    }
    Ok(out)
}

pub fn pool_rubin(estimates: &[SpvimEstimate]) -> Result<PooledEstimate> {
    let psis: Vec<Vec<f64>> = estimates.iter().map(|e| e.psi.clone()).collect();
    let vars: Vec<Vec<f64>> = estimates.iter().map(|e| e.variances.clone()).collect();
    pool_rubin_values(&psis, &vars)
}
