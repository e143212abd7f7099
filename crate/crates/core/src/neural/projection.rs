use serde::{Deserialize, Serialize};

use super::linear::{Activation, LinearMap};
use super::Matrix;
use crate::error::{Error, Result};

/// Two-layer projection head `u = layer2(relu(layer1(h)))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionParams {
    pub layer1: LinearMap,
    pub layer2: LinearMap,
}

impl ProjectionParams {
    pub fn zeros(dim: usize, proj_dim: usize) -> Self {
        Self {
            layer1: LinearMap::zeros(dim, proj_dim),
            layer2: LinearMap::zeros(proj_dim, proj_dim),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectionCache {
    input: Matrix,
    pre: Matrix,
    hidden: Matrix,
}

pub fn project(reps: &Matrix, params: &ProjectionParams) -> Result<Matrix> {
    Ok(project_cached(reps, params)?.0)
}

pub fn project_cached(reps: &Matrix, params: &ProjectionParams) -> Result<(Matrix, ProjectionCache)> {
    if params.layer1.out_dim() != params.layer2.in_dim() {
        return Err(Error::Shape(format!(
            "projection layers do not chain: {} → {}",
            params.layer1.out_dim(),
            params.layer2.in_dim()
        )));
    }
    let pre = params.layer1.forward(reps)?;
    let hidden = Activation::Relu.apply(&pre);
    let out = params.layer2.forward(&hidden)?;
    Ok((
        out,
        ProjectionCache {
            input: reps.clone(),
            pre,
            hidden,
        },
    ))
}

pub fn project_backward(
    cache: &ProjectionCache,
    params: &ProjectionParams,
    d_out: &Matrix,
    grad: &mut ProjectionParams,
) -> Matrix {
    let d_hidden = params.layer2.backward(&cache.hidden, d_out, &mut grad.layer2);
    let d_pre = Activation::Relu.backward(&cache.pre, &d_hidden);
    params.layer1.backward(&cache.input, &d_pre, &mut grad.layer1)
}
