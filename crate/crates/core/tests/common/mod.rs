//! Straight-line reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's numeric code: loops over plain
//! `Vec<f64>` rows, written directly from the model definitions.

#![allow(dead_code)]

use std::collections::BTreeSet;

use connhs::contrastive::LossMode;
use connhs::corpus::{Corpus, DocumentFeatures, Split};
use connhs::graph::{MultiRelationalTextGraph, Relation, ThresholdConfig};
use connhs::neural::{CganParams, LinearMap, ModelParameters, ProjectionParams, RwGcnLayerParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &ndarray::Array2<f64>) -> Rows {
    m.outer_iter().map(|r| r.to_vec()).collect()
}

pub fn max_abs_diff(a: &Rows, b: &Rows) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| {
            assert_eq!(x.len(), y.len());
            x.iter().zip(y).map(|(p, q)| (p - q).abs())
        })
        .fold(0.0, f64::max)
}

pub fn cos(x: &[f64], y: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut xx = 0.0;
    let mut yy = 0.0;
    for k in 0..x.len() {
        dot += x[k] * y[k];
        xx += x[k] * x[k];
        yy += y[k] * y[k];
    }
    dot / (xx.sqrt() * yy.sqrt())
}

// ---------------------------------------------------------------- graph

/// Edge sets `(i, j)` with `i < j` for title, keyword, event.
pub fn brute_force_edges(corpus: &Corpus, cfg: &ThresholdConfig) -> [BTreeSet<(usize, usize)>; 3] {
    let docs = corpus.docs();
    let count = |a: &Rows, b: &Rows, rho: f64| {
        let mut c = 0usize;
        for x in a {
            for y in b {
                if cos(x, y) > rho {
                    c += 1;
                }
            }
        }
        c
    };
    let mut out: [BTreeSet<(usize, usize)>; 3] = Default::default();
    for i in 0..docs.len() {
        for j in i + 1..docs.len() {
            if cos(&docs[i].title_vec, &docs[j].title_vec) > cfg.rho_t {
                out[0].insert((i, j));
            }
            if count(&docs[i].keyword_vecs, &docs[j].keyword_vecs, cfg.rho_k) > cfg.gamma_k {
                out[1].insert((i, j));
            }
            if count(&docs[i].event_vecs, &docs[j].event_vecs, cfg.rho_e) > cfg.gamma_e {
                out[2].insert((i, j));
            }
        }
    }
    out
}

pub fn graph_edges(graph: &MultiRelationalTextGraph) -> [BTreeSet<(usize, usize)>; 3] {
    Relation::ALL.map(|r| graph.adjacency(r).edges().into_iter().collect())
}

/// Corpus of `n` documents with random feature lists of mixed lengths.
///
/// Vectors are drawn around a few shared directions so that thresholds in
/// the usual range produce a mix of edges and non-edges.
pub fn random_corpus(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Corpus {
    let anchors: Rows = (0..3).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let vec_near = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let a = &anchors[rng.random_range(0..anchors.len())];
        a.iter().map(|x| x + rng.random_range(-0.5..0.5)).collect()
    };
    let docs = (0..n)
        .map(|i| {
            let kw = rng.random_range(0..=5);
            let ev = rng.random_range(0..=4);
            DocumentFeatures {
                id: format!("doc{i}"),
                label: Some(format!("c{}", i % 2)),
                split: Split::Train,
                content_vec: vec_near(rng),
                title_vec: vec_near(rng),
                keyword_vecs: (0..kw).map(|_| vec_near(rng)).collect(),
                event_vecs: (0..ev).map(|_| vec_near(rng)).collect(),
            }
        })
        .collect();
    Corpus::new(docs, dim).unwrap()
}

/// Symmetric neighbor lists with each pair present with probability `p`.
pub fn random_neighbors(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut nb = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(p) {
                nb[i].push(j);
                nb[j].push(i);
            }
        }
    }
    nb
}

pub fn edge_list(nb: &[Vec<usize>]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (i, list) in nb.iter().enumerate() {
        for &j in list {
            if i < j {
                out.push((i, j));
            }
        }
    }
    out
}

// ---------------------------------------------------------------- neural

pub fn random_matrix(n: usize, d: usize, rng: &mut ChaCha8Rng) -> ndarray::Array2<f64> {
    ndarray::Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))
}

pub fn randomize_map(map: &mut LinearMap, rng: &mut ChaCha8Rng) {
    map.weight.mapv_inplace(|_| rng.random_range(-0.8..0.8));
    map.bias.mapv_inplace(|_| rng.random_range(-0.3..0.3));
}

fn affine(map: &LinearMap, x: &[f64]) -> Vec<f64> {
    let (out, inp) = map.weight.dim();
    assert_eq!(inp, x.len());
    (0..out)
        .map(|o| {
            let mut s = map.bias[o];
            for k in 0..inp {
                s += map.weight[[o, k]] * x[k];
            }
            s
        })
        .collect()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// One layer: gated sum of edge differences, concatenated with the node's
/// own features, then the transform and (optionally) a ReLU.
pub fn ref_rwgcn_layer(x: &Rows, nb: &[Vec<usize>], layer: &RwGcnLayerParams, relu: bool) -> Rows {
    let d = x[0].len();
    (0..x.len())
        .map(|i| {
            let mut agg = vec![0.0; d];
            for &j in &nb[i] {
                let edge: Vec<f64> = (0..d).map(|k| x[j][k] - x[i][k]).collect();
                let z = affine(&layer.gate, &edge);
                for k in 0..d {
                    let g = if z.len() == 1 { sigmoid(z[0]) } else { sigmoid(z[k]) };
                    agg[k] += g * edge[k];
                }
            }
            let mut cat = x[i].clone();
            cat.extend(agg);
            let out = affine(&layer.transform, &cat);
            if relu {
                out.into_iter().map(|v| v.max(0.0)).collect()
            } else {
                out
            }
        })
        .collect()
}

pub fn ref_rwgcn_stack(x: &Rows, nb: &[Vec<usize>], layers: &[RwGcnLayerParams]) -> Rows {
    let mut h = x.clone();
    for (l, layer) in layers.iter().enumerate() {
        h = ref_rwgcn_layer(&h, nb, layer, l + 1 < layers.len());
    }
    h
}

/// Returns `(fused, attention)`.
pub fn ref_cgan(reps: [&Rows; 3], params: &CganParams) -> (Rows, Rows) {
    let n = reps[0].len();
    let d = reps[0][0].len();
    let mut fused = Vec::with_capacity(n);
    let mut att = Vec::with_capacity(n);
    for i in 0..n {
        let logits: Vec<f64> = (0..3)
            .map(|r| {
                let h = affine(&params.p_net, &reps[r][i]);
                h.iter().zip(params.k_vec.iter()).map(|(a, k)| k * a.tanh()).sum()
            })
            .collect();
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        let a: Vec<f64> = logits.iter().map(|v| v.exp() / z).collect();
        let mut f = vec![0.0; d];
        for r in 0..3 {
            for k in 0..d {
                f[k] += a[r] * reps[r][i][k];
            }
        }
        fused.push(f);
        att.push(a);
    }
    (fused, att)
}

pub fn ref_project(x: &Rows, params: &ProjectionParams) -> Rows {
    x.iter()
        .map(|row| {
            let h: Vec<f64> = affine(&params.layer1, row).into_iter().map(|v| v.max(0.0)).collect();
            affine(&params.layer2, &h)
        })
        .collect()
}

/// Per-relation stacks followed by attention fusion.
pub fn ref_encode(x: &Rows, nbs: &[Vec<Vec<usize>>; 3], params: &ModelParameters) -> ([Rows; 3], Rows, Rows) {
    let per: [Rows; 3] = std::array::from_fn(|r| ref_rwgcn_stack(x, &nbs[r], &params.per_relation[r]));
    let (fused, att) = ref_cgan([&per[0], &per[1], &per[2]], &params.cgan);
    (per, fused, att)
}

/// Smallest |pre-activation| over every ReLU unit in the encoder and projection
/// head. Central differences are only meaningful when this exceeds the step.
pub fn relu_margin(x: &Rows, nbs: &[Vec<Vec<usize>>; 3], params: &ModelParameters) -> f64 {
    let mut margin = f64::INFINITY;
    let mut track = |pre: &Rows| {
        for v in pre.iter().flatten() {
            margin = margin.min(v.abs());
        }
    };
    for r in 0..3 {
        let layers = &params.per_relation[r];
        let mut h = x.clone();
        for (l, layer) in layers.iter().enumerate() {
            let pre = ref_rwgcn_layer(&h, &nbs[r], layer, false);
            if l + 1 < layers.len() {
                track(&pre);
                h = pre.into_iter().map(|row| row.into_iter().map(|v| v.max(0.0)).collect()).collect();
            } else {
                h = pre;
            }
        }
        let hidden: Rows = h.iter().map(|row| affine(&params.projection.layer1, row)).collect();
        track(&hidden);
    }
    margin
}

/// Neighbor lists of each relation, in `Relation::ALL` order.
pub fn neighbor_lists(graph: &MultiRelationalTextGraph) -> [Vec<Vec<usize>>; 3] {
    Relation::ALL.map(|r| {
        let adj = graph.adjacency(r);
        (0..adj.n()).map(|i| adj.neighbors(i).to_vec()).collect()
    })
}

/// Overwrite every parameter with a uniform draw, biases included.
pub fn randomize_params(params: &mut ModelParameters, scale: f64, rng: &mut ChaCha8Rng) {
    for slice in params.slices_mut() {
        for v in slice.iter_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

// ---------------------------------------------------------------- contrastive

/// Brute-force negative sets: every `j ≠ i`, minus neighbors in any relation
/// (when the mode sifts structure), minus `score > threshold` (when it sifts
/// attributes).
pub fn ref_negatives(
    nbs: &[Vec<Vec<usize>>; 3],
    score: &Rows,
    mode: LossMode,
    threshold: f64,
) -> Vec<Vec<usize>> {
    let n = score.len();
    let structure = matches!(mode, LossMode::Nhs | LossMode::NhsNa);
    let attribute = matches!(mode, LossMode::Nhs | LossMode::NhsGs);
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .filter(|&j| !(structure && nbs.iter().any(|nb| nb[i].contains(&j))))
                .filter(|&j| !(attribute && score[i][j] > threshold))
                .collect()
        })
        .collect()
}

/// Mean over anchors of `−log(pos / (pos + intra + inter))`, every term
/// enumerated separately.
pub fn ref_loss(views: [&Rows; 3], negatives: [&Vec<Vec<usize>>; 3], tau: f64) -> f64 {
    let n = views[0].len();
    let e = |a: &[f64], b: &[f64]| (cos(a, b) / tau).exp();
    let mut total = 0.0;
    for a in 0..3 {
        for i in 0..n {
            let anchor = &views[a][i];
            let mut pos = 0.0;
            for r in (0..3).filter(|&r| r != a) {
                pos += e(anchor, &views[r][i]);
            }
            let mut neg = 0.0;
            for &j in &negatives[a][i] {
                neg += e(anchor, &views[a][j]);
            }
            for r in (0..3).filter(|&r| r != a) {
                for &j in &negatives[r][i] {
                    neg += e(anchor, &views[r][j]);
                }
            }
            total += -(pos / (pos + neg)).ln();
        }
    }
    total / (3 * n) as f64
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
