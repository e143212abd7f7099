use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::ops::{Deref, DerefMut};
use std::path::Path;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cgan::CganParams;
use super::linear::{glorot_fill, LinearMap};
use super::projection::ProjectionParams;
use super::rwgcn::{GateKind, RwGcnLayerParams};
use crate::error::{Error, Result};
use crate::graph::Relation;

/// Architecture of the encoder and projection head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub input_dim: usize,
    /// Width of every graph-convolution layer output.
    pub hidden_dim: usize,
    /// Graph-convolution layers per relation.
    pub layers: usize,
    pub proj_dim: usize,
    pub attn_dim: usize,
    pub gate: GateKind,
}

impl ArchSpec {
    /// Defaults: hidden = projection = `2·d`, two layers, attention `⌈d/2⌉`.
    pub fn for_input(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim: 2 * input_dim,
            layers: 2,
            proj_dim: 2 * input_dim,
            attn_dim: input_dim.div_ceil(2).max(1),
            gate: GateKind::Scalar,
        }
    }

    /// Width of the per-relation (and fused) representation.
    pub fn output_dim(&self) -> usize {
        if self.layers == 0 {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_dim", self.input_dim),
            ("hidden_dim", self.hidden_dim),
            ("proj_dim", self.proj_dim),
            ("attn_dim", self.attn_dim),
        ] {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// All learnable weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    pub arch: ArchSpec,
    /// Independent graph-convolution stacks, indexed by [`Relation::index`].
    pub per_relation: [Vec<RwGcnLayerParams>; 3],
    pub cgan: CganParams,
    pub projection: ProjectionParams,
}

impl ModelParameters {
    pub fn zeros(arch: ArchSpec) -> Self {
        let layers = || {
            (0..arch.layers)
                .map(|l| {
                    let d_in = if l == 0 { arch.input_dim } else { arch.hidden_dim };
                    RwGcnLayerParams::zeros(d_in, arch.hidden_dim, arch.gate)
                })
                .collect::<Vec<_>>()
        };
        let d = arch.output_dim();
        Self {
            arch,
            per_relation: [layers(), layers(), layers()],
            cgan: CganParams::zeros(d, arch.attn_dim),
            projection: ProjectionParams::zeros(d, arch.proj_dim),
        }
    }

    pub fn layers(&self, relation: Relation) -> &[RwGcnLayerParams] {
        &self.per_relation[relation.index()]
    }

    fn linear_maps(&self) -> Vec<(String, &LinearMap)> {
        let mut out = Vec::new();
        for r in Relation::ALL {
            for (l, layer) in self.per_relation[r.index()].iter().enumerate() {
                out.push((format!("{r}.layer{l}.gate"), &layer.gate));
                out.push((format!("{r}.layer{l}.transform"), &layer.transform));
            }
        }
        out.push(("cgan.p_net".into(), &self.cgan.p_net));
        out.push(("projection.layer1".into(), &self.projection.layer1));
        out.push(("projection.layer2".into(), &self.projection.layer2));
        out
    }

    /// `(name, shape, row-major values)` for every tensor, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (name, map) in self.linear_maps() {
            out.push((
                format!("{name}.weight"),
                map.weight.shape().to_vec(),
                map.weight.as_slice().expect("standard layout"),
            ));
            out.push((
                format!("{name}.bias"),
                map.bias.shape().to_vec(),
                map.bias.as_slice().expect("standard layout"),
            ));
        }
        out.push((
            "cgan.k_vec".into(),
            self.cgan.k_vec.shape().to_vec(),
            self.cgan.k_vec.as_slice().expect("standard layout"),
        ));
        out
    }

    /// Mutable views of every tensor, in the same order as [`tensors`](Self::tensors).
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        fn push<'a>(map: &'a mut LinearMap, out: &mut Vec<&'a mut [f64]>) {
            out.push(map.weight.as_slice_mut().expect("standard layout"));
            out.push(map.bias.as_slice_mut().expect("standard layout"));
        }
        let mut out = Vec::new();
        for layers in self.per_relation.iter_mut() {
            for layer in layers.iter_mut() {
                push(&mut layer.gate, &mut out);
                push(&mut layer.transform, &mut out);
            }
        }
        push(&mut self.cgan.p_net, &mut out);
        push(&mut self.projection.layer1, &mut out);
        push(&mut self.projection.layer2, &mut out);
        out.push(self.cgan.k_vec.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, _, v)| v.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().into_iter().flat_map(|(_, _, v)| v.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let total = self.num_scalars();
        if flat.len() != total {
            return Err(Error::Shape(format!("flat vector has {} entries, expected {total}", flat.len())));
        }
        let mut offset = 0;
        for slice in self.slices_mut() {
            let len = slice.len();
            slice.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }
}

/// Gradient of a scalar loss, shape-congruent with [`ModelParameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub ModelParameters);

impl Gradients {
    pub fn zeros_like(params: &ModelParameters) -> Self {
        Gradients(ModelParameters::zeros(params.arch))
    }

    pub fn into_inner(self) -> ModelParameters {
        self.0
    }
}

impl Deref for Gradients {
    type Target = ModelParameters;
    fn deref(&self) -> &ModelParameters {
        &self.0
    }
}

impl DerefMut for Gradients {
    fn deref_mut(&mut self) -> &mut ModelParameters {
        &mut self.0
    }
}

/// Glorot-uniform weights (including the attention key), zero biases.
pub fn init_parameters(arch: ArchSpec, seed: u64) -> Result<ModelParameters> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParameters::zeros(arch);
    for layers in params.per_relation.iter_mut() {
        for layer in layers.iter_mut() {
            let d_in = layer.in_dim();
            layer.gate = LinearMap::glorot(d_in, layer.gate.out_dim(), &mut rng);
            layer.transform = LinearMap::glorot(2 * d_in, layer.out_dim(), &mut rng);
        }
    }
    let d = arch.output_dim();
    params.cgan.p_net = LinearMap::glorot(d, arch.attn_dim, &mut rng);
    let mut k = Array1::zeros(arch.attn_dim);
    glorot_fill(k.as_slice_mut().expect("standard layout"), arch.attn_dim, 1, &mut rng);
    params.cgan.k_vec = k;
    params.projection.layer1 = LinearMap::glorot(d, arch.proj_dim, &mut rng);
    params.projection.layer2 = LinearMap::glorot(arch.proj_dim, arch.proj_dim, &mut rng);
    Ok(params)
}

pub const CHECKPOINT_FORMAT: &str = "connhs-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Architecture, seed and every tensor (row-major) in one JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    format: String,
    pub arch: ArchSpec,
    pub seed: u64,
    tensors: Vec<TensorRecord>,
}

impl Checkpoint {
    pub fn new(params: &ModelParameters, seed: u64) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            arch: params.arch,
            seed,
            tensors: params
                .tensors()
                .into_iter()
                .map(|(name, shape, data)| TensorRecord {
                    name,
                    shape,
                    data: data.to_vec(),
                })
                .collect(),
        }
    }

    pub fn parameters(&self) -> Result<ModelParameters> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidConfig(format!("unknown checkpoint format {:?}", self.format)));
        }
        let mut params = ModelParameters::zeros(self.arch);
        let expected: Vec<(String, Vec<usize>)> = params
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if expected.len() != self.tensors.len() {
            return Err(Error::Shape(format!(
                "checkpoint holds {} tensors, architecture needs {}",
                self.tensors.len(),
                expected.len()
            )));
        }
        for ((slot, (name, shape)), rec) in params.slices_mut().into_iter().zip(&expected).zip(&self.tensors) {
            if &rec.name != name || &rec.shape != shape || rec.data.len() != slot.len() {
                return Err(Error::Shape(format!(
                    "tensor {:?} {:?} does not match expected {name:?} {shape:?}",
                    rec.name, rec.shape
                )));
            }
            slot.copy_from_slice(&rec.data);
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, self)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
    }
}
