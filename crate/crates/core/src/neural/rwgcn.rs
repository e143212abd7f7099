//! Relation-aware graph convolution.
//!
//! For node `i` with neighbors `N(i)` in one relation:
//!
//! ```text
//! agg_i = Σ_{j ∈ N(i)} σ(gate(x_j − x_i)) ⊙ (x_j − x_i)
//! out_i = act(transform([x_i ‖ agg_i]))
//! ```
//!
//! The gate is a single fully connected unit (scalar weight per edge) or, as
//! an option, one unit per input coordinate.

use ndarray::{concatenate, s, Array1, Axis};
use serde::{Deserialize, Serialize};

use super::linear::{Activation, LinearMap};
use super::Matrix;
use crate::error::{Error, Result};
use crate::graph::RelationAdjacency;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateKind {
    #[default]
    Scalar,
    Elementwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwGcnLayerParams {
    /// `d_in → 1` (scalar) or `d_in → d_in` (elementwise), followed by a sigmoid.
    pub gate: LinearMap,
    /// `2·d_in → d_out`.
    pub transform: LinearMap,
}

impl RwGcnLayerParams {
    pub fn zeros(in_dim: usize, out_dim: usize, gate: GateKind) -> Self {
        let gate_out = match gate {
            GateKind::Scalar => 1,
            GateKind::Elementwise => in_dim,
        };
        Self {
            gate: LinearMap::zeros(in_dim, gate_out),
            transform: LinearMap::zeros(2 * in_dim, out_dim),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.gate.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.transform.out_dim()
    }

    fn check(&self) -> Result<()> {
        let d = self.in_dim();
        if self.transform.in_dim() != 2 * d {
            return Err(Error::Shape(format!(
                "transform input {} is not twice the gate input {d}",
                self.transform.in_dim()
            )));
        }
        let g = self.gate.out_dim();
        if g != 1 && g != d {
            return Err(Error::Shape(format!("gate output {g} must be 1 or {d}")));
        }
        Ok(())
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct RwGcnCache {
    input: Matrix,
    concat: Matrix,
    /// Gate outputs per directed edge, in (node, neighbor) order.
    gates: Vec<f64>,
    pre: Matrix,
    activation: Activation,
}

impl RwGcnCache {
    pub fn output(&self) -> Matrix {
        self.activation.apply(&self.pre)
    }

    pub fn gates(&self) -> &[f64] {
        &self.gates
    }
}

pub fn rwgcn_forward(
    features: &Matrix,
    adjacency: &RelationAdjacency,
    layer: &RwGcnLayerParams,
    activation: Activation,
) -> Result<Matrix> {
    Ok(rwgcn_forward_cached(features, adjacency, layer, activation)?.output())
}

pub fn rwgcn_forward_cached(
    features: &Matrix,
    adjacency: &RelationAdjacency,
    layer: &RwGcnLayerParams,
    activation: Activation,
) -> Result<RwGcnCache> {
    layer.check()?;
    let (n, d) = features.dim();
    if d != layer.in_dim() {
        return Err(Error::Shape(format!("features have {d} columns, layer expects {}", layer.in_dim())));
    }
    if adjacency.n() != n {
        return Err(Error::Shape(format!("adjacency has {} nodes, features {n}", adjacency.n())));
    }
    let k = layer.gate.out_dim();
    let mut agg = Matrix::zeros((n, d));
    let mut gates = Vec::new();
    let mut edge = Array1::<f64>::zeros(d);
    for i in 0..n {
        let xi = features.row(i);
        for &j in adjacency.neighbors(i) {
            edge.assign(&features.row(j));
            edge -= &xi;
            let z = layer.gate.weight.dot(&edge) + &layer.gate.bias;
            let mut row = agg.row_mut(i);
            if k == 1 {
                let s = sigmoid(z[0]);
                gates.push(s);
                row.scaled_add(s, &edge);
            } else {
                for m in 0..d {
                    let s = sigmoid(z[m]);
                    gates.push(s);
                    row[m] += s * edge[m];
                }
            }
        }
    }
    let concat = concatenate(Axis(1), &[features.view(), agg.view()])
        .map_err(|e| Error::Shape(e.to_string()))?;
    let pre = layer.transform.forward(&concat)?;
    Ok(RwGcnCache {
        input: features.clone(),
        concat,
        gates,
        pre,
        activation,
    })
}

/// Backward through one layer; accumulates into `grad` and returns `d features`.
pub fn rwgcn_backward(
    cache: &RwGcnCache,
    adjacency: &RelationAdjacency,
    layer: &RwGcnLayerParams,
    d_out: &Matrix,
    grad: &mut RwGcnLayerParams,
) -> Matrix {
    let x = &cache.input;
    let (n, d) = x.dim();
    let k = layer.gate.out_dim();
    let d_pre = cache.activation.backward(&cache.pre, d_out);
    let d_concat = layer.transform.backward(&cache.concat, &d_pre, &mut grad.transform);
    let mut d_x = d_concat.slice(s![.., ..d]).to_owned();
    let d_agg = d_concat.slice(s![.., d..]);

    let mut edge = Array1::<f64>::zeros(d);
    let mut dz = Array1::<f64>::zeros(k);
    let mut cursor = 0;
    for i in 0..n {
        let g = d_agg.row(i);
        for &j in adjacency.neighbors(i) {
            edge.assign(&x.row(j));
            edge -= &x.row(i);
            let mut d_edge;
            if k == 1 {
                let s = cache.gates[cursor];
                cursor += 1;
                dz[0] = g.dot(&edge) * s * (1.0 - s);
                d_edge = g.to_owned() * s;
            } else {
                let sg = &cache.gates[cursor..cursor + d];
                cursor += d;
                d_edge = Array1::zeros(d);
                for m in 0..d {
                    dz[m] = g[m] * edge[m] * sg[m] * (1.0 - sg[m]);
                    d_edge[m] = sg[m] * g[m];
                }
            }
            // dW_gate += dz ⊗ edge
            for r in 0..k {
                grad.gate.weight.row_mut(r).scaled_add(dz[r], &edge);
            }
            grad.gate.bias += &dz;
            d_edge += &layer.gate.weight.t().dot(&dz);
            d_x.row_mut(j).scaled_add(1.0, &d_edge);
            d_x.row_mut(i).scaled_add(-1.0, &d_edge);
        }
    }
    d_x
}

fn layer_activation(index: usize, count: usize) -> Activation {
    if index + 1 == count {
        Activation::Identity
    } else {
        Activation::Relu
    }
}

/// Sequential layers: ReLU after each hidden layer, identity after the last.
pub fn rwgcn_stack(
    features: &Matrix,
    adjacency: &RelationAdjacency,
    layers: &[RwGcnLayerParams],
) -> Result<Matrix> {
    let mut h = features.clone();
    for (l, layer) in layers.iter().enumerate() {
        h = rwgcn_forward(&h, adjacency, layer, layer_activation(l, layers.len()))?;
    }
    Ok(h)
}

/// Returns the stack output together with one cache per layer.
pub fn rwgcn_stack_cached(
    features: &Matrix,
    adjacency: &RelationAdjacency,
    layers: &[RwGcnLayerParams],
) -> Result<(Matrix, Vec<RwGcnCache>)> {
    let mut h = features.clone();
    let mut caches = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate() {
        let cache = rwgcn_forward_cached(&h, adjacency, layer, layer_activation(l, layers.len()))?;
        h = cache.output();
        caches.push(cache);
    }
    Ok((h, caches))
}

pub fn rwgcn_stack_backward(
    caches: &[RwGcnCache],
    adjacency: &RelationAdjacency,
    layers: &[RwGcnLayerParams],
    d_out: &Matrix,
    grads: &mut [RwGcnLayerParams],
) -> Matrix {
    let mut d = d_out.clone();
    for l in (0..layers.len()).rev() {
        d = rwgcn_backward(&caches[l], adjacency, &layers[l], &d, &mut grads[l]);
    }
    d
}
