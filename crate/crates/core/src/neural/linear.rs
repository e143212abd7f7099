use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::{check_cols, Matrix};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn apply(self, pre: &Matrix) -> Matrix {
        match self {
            Activation::Relu => pre.mapv(|v| v.max(0.0)),
            Activation::Identity => pre.clone(),
        }
    }

    /// `d_out ⊙ act'(pre)`; the ReLU derivative at exactly zero is taken as 0.
    pub fn backward(self, pre: &Matrix, d_out: &Matrix) -> Matrix {
        match self {
            Activation::Relu => {
                let mut d = d_out.clone();
                d.zip_mut_with(pre, |g, &p| {
                    if p <= 0.0 {
                        *g = 0.0
                    }
                });
                d
            }
            Activation::Identity => d_out.clone(),
        }
    }
}

/// Affine map `y = W x + b` with `W` stored `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearMap {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            weight: Array2::zeros((out_dim, in_dim)),
            bias: Array1::zeros(out_dim),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let mut map = Self::zeros(in_dim, out_dim);
        glorot_fill(map.weight.as_slice_mut().expect("standard layout"), in_dim, out_dim, rng);
        map
    }

    pub fn in_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Row-wise application: `n × in_dim → n × out_dim`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        check_cols(x, self.in_dim(), "linear map input")?;
        Ok(x.dot(&self.weight.t()) + &self.bias)
    }

    /// Accumulates `dW`, `db` into `grad` and returns `dX`.
    pub fn backward(&self, x: &Matrix, d_out: &Matrix, grad: &mut LinearMap) -> Matrix {
        grad.weight += &d_out.t().dot(x);
        grad.bias += &d_out.sum_axis(Axis(0));
        d_out.dot(&self.weight)
    }

    pub fn is_finite(&self) -> bool {
        self.weight.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

pub(crate) fn glorot_fill<R: Rng>(out: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut R) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    for v in out {
        *v = dist.sample(rng);
    }
}
