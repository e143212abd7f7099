//! Self-supervised pretraining loop.
//!
//! Each epoch runs the graph convolution on every semantic subgraph, fuses the
//! results with cross-graph attention, projects each relation output, scores
//! the fused representations, selects negatives and takes one Adam step on the
//! contrastive loss. Training is full-batch and deterministic for a fixed seed.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::contrastive::{
    nhs_loss_backward_with_floor, nhs_loss_with_floor, nhs_select_negatives, similarity_matrix_with_floor, LossConfig,
    NegativeMask, NORM_FLOOR,
};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::graph::{separate, MultiRelationalTextGraph};
use crate::neural::{
    cgan_forward_cached, init_parameters, project_backward, project_cached, rwgcn_stack_backward,
    rwgcn_stack_cached, ArchSpec, CganCache, Checkpoint, Gradients, Matrix, ModelParameters,
    ProjectionCache, RwGcnCache,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidConfig("eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    pub first_moment: Gradients,
    pub second_moment: Gradients,
}

impl OptimizerState {
    pub fn new(params: &ModelParameters, cfg: &AdamConfig) -> Self {
        Self {
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            step_count: 0,
            first_moment: Gradients::zeros_like(params),
            second_moment: Gradients::zeros_like(params),
        }
    }
}

/// Bias-corrected Adam update.
pub fn adam_step(
    params: &ModelParameters,
    grads: &Gradients,
    state: &OptimizerState,
) -> Result<(ModelParameters, OptimizerState)> {
    if grads.arch != params.arch || state.first_moment.arch != params.arch {
        return Err(Error::Shape("gradient/optimizer state shape differs from parameters".into()));
    }
    let mut params = params.clone();
    let mut state = state.clone();
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let grad_slices = grads.tensors();
    let m_slices = state.first_moment.0.slices_mut();
    let v_slices = state.second_moment.0.slices_mut();
    for (((theta, (name, _, g)), m), v) in params
        .slices_mut()
        .into_iter()
        .zip(grad_slices)
        .zip(m_slices)
        .zip(v_slices)
    {
        for k in 0..theta.len() {
            let gk = g[k];
            if !gk.is_finite() {
                return Err(Error::NonFiniteValue(format!("gradient of {name}[{k}]")));
            }
            m[k] = b1 * m[k] + (1.0 - b1) * gk;
            v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            theta[k] -= state.learning_rate * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok((params, state))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Stop once this many consecutive epochs fail to lower the best loss.
    pub patience: usize,
    pub loss: LossConfig,
    pub seed: u64,
    pub adam: AdamConfig,
    pub checkpoint_path: Option<PathBuf>,
    /// Fill `wall_time_ms` in the log; off by default so logs are byte-reproducible.
    pub record_timing: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 500,
            patience: 50,
            loss: LossConfig::default(),
            seed: 0,
            adam: AdamConfig::default(),
            checkpoint_path: None,
            record_timing: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.adam.validate()?;
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be positive".into()));
        }
        if self.max_epochs > 0 && self.patience > self.max_epochs {
            return Err(Error::InvalidConfig(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub mean_negatives_per_anchor: f64,
    pub structure_sifted: usize,
    pub attribute_sifted: usize,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn first_loss(&self) -> Option<f64> {
        self.epochs.first().map(|e| e.loss)
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for rec in &self.epochs {
            w.serialize(rec)?;
        }
        if self.epochs.is_empty() {
            w.write_record([
                "epoch",
                "loss",
                "mean_negatives_per_anchor",
                "structure_sifted",
                "attribute_sifted",
                "wall_time_ms",
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

struct ForwardState {
    stacks: [(Matrix, Vec<RwGcnCache>); 3],
    fused: Matrix,
    attention: Matrix,
    #[allow(dead_code)]
    cgan: CganCache,
    projections: Option<[(Matrix, ProjectionCache); 3]>,
}

fn forward(
    features: &Matrix,
    graph: &MultiRelationalTextGraph,
    params: &ModelParameters,
    with_projection: bool,
) -> Result<ForwardState> {
    if features.nrows() != graph.n() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} graph nodes",
            features.nrows(),
            graph.n()
        )));
    }
    let views = separate(graph);
    let mut stacks: [(Matrix, Vec<RwGcnCache>); 3] = Default::default();
    for (slot, view) in stacks.iter_mut().zip(&views) {
        *slot = rwgcn_stack_cached(features, view.adjacency, params.layers(view.relation))?;
    }
    let reps: [Matrix; 3] = std::array::from_fn(|r| stacks[r].0.clone());
    let (fused, cgan) = cgan_forward_cached(&reps, &params.cgan)?;
    let attention = cgan.attention().clone();
    let projections = if with_projection {
        let [a, b, c] = &reps;
        Some([
            project_cached(a, &params.projection)?,
            project_cached(b, &params.projection)?,
            project_cached(c, &params.projection)?,
        ])
    } else {
        None
    };
    Ok(ForwardState {
        stacks,
        fused,
        attention,
        cgan,
        projections,
    })
}

/// Outcome of one loss evaluation over the whole graph.
#[derive(Debug, Clone)]
pub struct LossEvaluation {
    pub loss: f64,
    pub gradients: Gradients,
    pub mask: NegativeMask,
}

/// Full-pipeline loss and its exact gradient with respect to every parameter.
///
/// The fused representation only enters the objective through the negative
/// mask, which is piecewise constant, so the attention parameters always
/// receive a zero gradient here.
pub fn loss_and_gradients(
    features: &Matrix,
    graph: &MultiRelationalTextGraph,
    params: &ModelParameters,
    loss_cfg: &LossConfig,
) -> Result<LossEvaluation> {
    let state = forward(features, graph, params, true)?;
    let score = similarity_matrix_with_floor(&state.fused, NORM_FLOOR)?;
    let mask = nhs_select_negatives(graph, &score, loss_cfg)?;
    let projections = state.projections.as_ref().expect("projection requested");
    let views: [Matrix; 3] = std::array::from_fn(|r| projections[r].0.clone());
    let (loss, d_views) = nhs_loss_backward_with_floor(&views, &mask, loss_cfg, NORM_FLOOR)?;

    let mut grads = Gradients::zeros_like(params);
    let subgraphs = separate(graph);
    for (r, view) in subgraphs.iter().enumerate() {
        let d_rep = project_backward(
            &projections[r].1,
            &params.projection,
            &d_views[r],
            &mut grads.projection,
        );
        let idx = view.relation.index();
        rwgcn_stack_backward(
            &state.stacks[r].1,
            view.adjacency,
            &params.per_relation[idx],
            &d_rep,
            &mut grads.0.per_relation[idx],
        );
    }
    Ok(LossEvaluation {
        loss,
        gradients: grads,
        mask,
    })
}

/// Forward-only pipeline loss (the function differentiated by [`loss_and_gradients`]).
pub fn pipeline_loss(
    features: &Matrix,
    graph: &MultiRelationalTextGraph,
    params: &ModelParameters,
    loss_cfg: &LossConfig,
) -> Result<f64> {
    let state = forward(features, graph, params, true)?;
    let score = similarity_matrix_with_floor(&state.fused, NORM_FLOOR)?;
    let mask = nhs_select_negatives(graph, &score, loss_cfg)?;
    let projections = state.projections.expect("projection requested");
    let views = projections.map(|(u, _)| u);
    nhs_loss_with_floor(&views, &mask, loss_cfg, NORM_FLOOR)
}

/// Pretrain from a seeded initialization.
pub fn pretrain(
    corpus: &Corpus,
    graph: &MultiRelationalTextGraph,
    cfg: &TrainConfig,
    arch: &ArchSpec,
) -> Result<(ModelParameters, TrainLog)> {
    if arch.input_dim != corpus.dim() {
        return Err(Error::Shape(format!(
            "architecture input {} differs from corpus dimension {}",
            arch.input_dim,
            corpus.dim()
        )));
    }
    let params = init_parameters(*arch, cfg.seed)?;
    pretrain_from(corpus, graph, cfg, params)
}

/// Pretrain starting from the given parameters.
pub fn pretrain_from(
    corpus: &Corpus,
    graph: &MultiRelationalTextGraph,
    cfg: &TrainConfig,
    mut params: ModelParameters,
) -> Result<(ModelParameters, TrainLog)> {
    cfg.validate()?;
    if graph.node_order().iter().zip(corpus.docs()).any(|(id, d)| *id != d.id) || graph.n() != corpus.len() {
        return Err(Error::Shape("graph node order does not follow the corpus".into()));
    }
    let features = corpus.content_matrix();
    let mut state = OptimizerState::new(&params, &cfg.adam);
    let mut log = TrainLog::default();
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let start = Instant::now();

    for epoch in 0..cfg.max_epochs {
        let eval = loss_and_gradients(&features, graph, &params, &cfg.loss)?;
        if !eval.loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: eval.loss });
        }
        let stats = eval.mask.stats();
        log.epochs.push(EpochRecord {
            epoch,
            loss: eval.loss,
            mean_negatives_per_anchor: eval.mask.mean_negatives_per_anchor(),
            structure_sifted: stats.structure_sifted,
            attribute_sifted: stats.attribute_sifted,
            wall_time_ms: if cfg.record_timing {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        });
        if eval.loss < best {
            best = eval.loss;
            stale = 0;
        } else {
            stale += 1;
        }
        let (next, next_state) = adam_step(&params, &eval.gradients, &state).map_err(|e| match e {
            Error::NonFiniteValue(_) => Error::Divergence { epoch, loss: eval.loss },
            other => other,
        })?;
        params = next;
        state = next_state;
        if stale >= cfg.patience {
            log.stopped_early = true;
            break;
        }
    }
    if let Some(path) = &cfg.checkpoint_path {
        Checkpoint::new(&params, cfg.seed).save(path)?;
    }
    Ok((params, log))
}

/// Inference output: per-relation representations and their attention fusion.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub per_relation: [Matrix; 3],
    pub fused: Matrix,
    pub attention: Matrix,
}

pub fn encode(
    corpus: &Corpus,
    graph: &MultiRelationalTextGraph,
    params: &ModelParameters,
) -> Result<Encoding> {
    encode_features(&corpus.content_matrix(), graph, params)
}

pub fn encode_features(
    features: &Matrix,
    graph: &MultiRelationalTextGraph,
    params: &ModelParameters,
) -> Result<Encoding> {
    let state = forward(features, graph, params, false)?;
    Ok(Encoding {
        per_relation: state.stacks.map(|(m, _)| m),
        fused: state.fused,
        attention: state.attention,
    })
}
