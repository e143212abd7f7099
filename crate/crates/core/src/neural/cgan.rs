//! Cross-graph attention: per node, softmax over relations of
//! `k · tanh(p(x_{i,r}))`, then an attention-weighted sum of the relation
//! representations.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::linear::LinearMap;
use super::{check_cols, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CganParams {
    /// `d → a`
    pub p_net: LinearMap,
    /// length `a`
    pub k_vec: Array1<f64>,
}

impl CganParams {
    pub fn zeros(dim: usize, attn_dim: usize) -> Self {
        Self {
            p_net: LinearMap::zeros(dim, attn_dim),
            k_vec: Array1::zeros(attn_dim),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CganCache {
    /// `tanh(p(x_{·,r}))` per relation, `n × a`.
    hidden: [Matrix; 3],
    attention: Matrix,
}

impl CganCache {
    pub fn attention(&self) -> &Matrix {
        &self.attention
    }
}

fn check_inputs(reps: &[Matrix; 3], params: &CganParams) -> Result<()> {
    if params.k_vec.len() != params.p_net.out_dim() {
        return Err(Error::Shape(format!(
            "k_vec length {} differs from attention size {}",
            params.k_vec.len(),
            params.p_net.out_dim()
        )));
    }
    let (n, d) = reps[0].dim();
    for r in reps.iter() {
        if r.dim() != (n, d) {
            return Err(Error::Shape(format!(
                "relation representations disagree: {:?} vs {:?}",
                r.dim(),
                (n, d)
            )));
        }
    }
    check_cols(&reps[0], params.p_net.in_dim(), "attention input")
}

/// Returns `(fused n×d, attention n×3)`.
pub fn cgan_forward(reps: &[Matrix; 3], params: &CganParams) -> Result<(Matrix, Matrix)> {
    let (fused, cache) = cgan_forward_cached(reps, params)?;
    Ok((fused, cache.attention))
}

pub fn cgan_forward_cached(reps: &[Matrix; 3], params: &CganParams) -> Result<(Matrix, CganCache)> {
    check_inputs(reps, params)?;
    let (n, d) = reps[0].dim();
    let mut hidden: [Matrix; 3] = Default::default();
    let mut logits = Matrix::zeros((n, 3));
    for r in 0..3 {
        let h = params.p_net.forward(&reps[r])?.mapv(f64::tanh);
        logits.column_mut(r).assign(&h.dot(&params.k_vec));
        hidden[r] = h;
    }
    let mut attention = Matrix::zeros((n, 3));
    let mut fused = Matrix::zeros((n, d));
    for i in 0..n {
        let row = logits.row(i);
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let exps = row.mapv(|v| (v - max).exp());
        let total = exps.sum();
        for r in 0..3 {
            let a = exps[r] / total;
            attention[[i, r]] = a;
            fused.row_mut(i).scaled_add(a, &reps[r].row(i));
        }
    }
    Ok((fused, CganCache { hidden, attention }))
}

/// Accumulates into `grad`; returns the gradient w.r.t. each relation representation.
pub fn cgan_backward(
    reps: &[Matrix; 3],
    cache: &CganCache,
    params: &CganParams,
    d_fused: &Matrix,
    grad: &mut CganParams,
) -> [Matrix; 3] {
    let (n, d) = reps[0].dim();
    let att = &cache.attention;
    let mut d_reps: [Matrix; 3] = std::array::from_fn(|_| Matrix::zeros((n, d)));
    let mut d_logits = Matrix::zeros((n, 3));
    for i in 0..n {
        let g = d_fused.row(i);
        let d_alpha: [f64; 3] = std::array::from_fn(|r| g.dot(&reps[r].row(i)));
        let mean: f64 = (0..3).map(|r| att[[i, r]] * d_alpha[r]).sum();
        for r in 0..3 {
            d_reps[r].row_mut(i).scaled_add(att[[i, r]], &g);
            d_logits[[i, r]] = att[[i, r]] * (d_alpha[r] - mean);
        }
    }
    for r in 0..3 {
        let h = &cache.hidden[r];
        let dl = d_logits.column(r);
        grad.k_vec += &h.t().dot(&dl);
        // d tanh: (1 - h²) ⊙ (dl ⊗ k)
        let mut d_pre = Matrix::zeros(h.dim());
        for i in 0..n {
            for m in 0..h.ncols() {
                let t = h[[i, m]];
                d_pre[[i, m]] = dl[i] * params.k_vec[m] * (1.0 - t * t);
            }
        }
        let dx = params.p_net.backward(&reps[r], &d_pre, &mut grad.p_net);
        d_reps[r] += &dx;
    }
    d_reps
}
