//! Contrastive objective over the three relation views with neighbor
//! hierarchical sifting of negatives.
//!
//! For anchor node `i` in view `r'` with projected rows `u`:
//!
//! ```text
//! pos   = Σ_{r ≠ r'} exp(sim(u_i^{r'}, u_i^{r}) / τ)
//! intra = Σ_{j ∈ D_i^{r'}} exp(sim(u_i^{r'}, u_j^{r'}) / τ)
//! inter = Σ_{r ≠ r'} Σ_{j ∈ D_i^{r}} exp(sim(u_i^{r'}, u_j^{r}) / τ)
//! ℓ     = −log(pos / (pos + intra + inter))
//! ```
//!
//! and the loss is the mean of `ℓ` over all `3·n` anchors. Negative sets `D`
//! come from [`nhs_select_negatives`]: first-order neighbors in any relation
//! are removed (structure sift), as are nodes whose fused-representation
//! similarity to the anchor exceeds `sift_threshold` (attribute sift).

use ndarray::{Array1, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MultiRelationalTextGraph;
use crate::neural::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossMode {
    /// Structure and attribute sifting.
    #[serde(rename = "NHS")]
    Nhs,
    /// Attribute sifting only (structure signal removed).
    #[serde(rename = "NHS_gs")]
    NhsGs,
    /// Structure sifting only (attribute signal removed).
    #[serde(rename = "NHS_na")]
    NhsNa,
    /// No sifting.
    #[serde(rename = "NT_Xent")]
    NtXent,
}

impl LossMode {
    pub const ALL: [LossMode; 4] = [LossMode::Nhs, LossMode::NhsGs, LossMode::NhsNa, LossMode::NtXent];

    pub fn name(self) -> &'static str {
        match self {
            LossMode::Nhs => "NHS",
            LossMode::NhsGs => "NHS_gs",
            LossMode::NhsNa => "NHS_na",
            LossMode::NtXent => "NT_Xent",
        }
    }

    pub fn sifts_structure(self) -> bool {
        matches!(self, LossMode::Nhs | LossMode::NhsNa)
    }

    pub fn sifts_attributes(self) -> bool {
        matches!(self, LossMode::Nhs | LossMode::NhsGs)
    }
}

impl std::fmt::Display for LossMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for LossMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LossMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || m.name().replace('_', "-").eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown loss mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub tau: f64,
    pub sift_threshold: f64,
    pub mode: LossMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            sift_threshold: 0.8,
            mode: LossMode::Nhs,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidConfig(format!("tau must be positive, got {}", self.tau)));
        }
        if !(-1.0..=1.0).contains(&self.sift_threshold) {
            return Err(Error::InvalidConfig(format!(
                "sift_threshold {} outside [-1, 1]",
                self.sift_threshold
            )));
        }
        Ok(())
    }
}

/// Pairwise cosine similarities of fused representations.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    values: Matrix,
}

impl SimilarityMatrix {
    pub fn from_matrix(values: Matrix) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::Shape(format!("similarity matrix is {:?}", values.dim())));
        }
        Ok(Self { values })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }
}

/// Norm floor used by the training pipeline.
///
/// A projection row whose hidden ReLU units are all inactive equals its bias,
/// which starts at zero; rows shorter than the floor are divided by the floor
/// instead of their own length.
pub const NORM_FLOOR: f64 = 1e-12;

/// Row lengths; a zero row is an error when `floor` is zero.
fn row_norms(m: &Matrix, floor: f64) -> Result<Vec<f64>> {
    m.rows()
        .into_iter()
        .map(|r| {
            let n = r.dot(&r).sqrt();
            if n == 0.0 && floor == 0.0 {
                Err(Error::ZeroVector)
            } else {
                Ok(n)
            }
        })
        .collect()
}

pub fn similarity_matrix(fused: &Matrix) -> Result<SimilarityMatrix> {
    similarity_matrix_with_floor(fused, 0.0)
}

/// As [`similarity_matrix`], dividing by `max(|x|, floor)`; zero rows score 0 against everything.
pub fn similarity_matrix_with_floor(fused: &Matrix, floor: f64) -> Result<SimilarityMatrix> {
    let norms: Vec<f64> = row_norms(fused, floor)?.into_iter().map(|v| v.max(floor)).collect();
    let n = fused.nrows();
    let mut values = Matrix::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let s = (fused.row(i).dot(&fused.row(j)) / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            values[[i, j]] = s;
            values[[j, i]] = s;
        }
    }
    Ok(SimilarityMatrix { values })
}

/// Exclusion counts over (anchor, candidate) pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiftStats {
    /// Pairs removed because the candidate is a first-order neighbor.
    pub structure_sifted: usize,
    /// Pairs removed by the similarity rule and not already by structure.
    pub attribute_sifted: usize,
}

/// Admissible negatives per view and anchor, as sorted index lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeMask {
    per_view: [Vec<Vec<usize>>; 3],
    stats: SiftStats,
}

impl NegativeMask {
    /// Build from explicit sets; entries are sorted and deduplicated.
    pub fn from_sets(mut per_view: [Vec<Vec<usize>>; 3]) -> Result<Self> {
        let n = per_view[0].len();
        for view in per_view.iter_mut() {
            if view.len() != n {
                return Err(Error::Shape("negative sets disagree on node count".into()));
            }
            for (i, set) in view.iter_mut().enumerate() {
                set.sort_unstable();
                set.dedup();
                if set.iter().any(|&j| j >= n || j == i) {
                    return Err(Error::Shape(format!("invalid negative for anchor {i}")));
                }
            }
        }
        Ok(Self {
            per_view,
            stats: SiftStats::default(),
        })
    }

    pub fn n(&self) -> usize {
        self.per_view[0].len()
    }

    pub fn negatives(&self, view: usize, anchor: usize) -> &[usize] {
        &self.per_view[view][anchor]
    }

    pub fn sets(&self) -> &[Vec<Vec<usize>>; 3] {
        &self.per_view
    }

    pub fn stats(&self) -> SiftStats {
        self.stats
    }

    pub fn is_empty(&self) -> bool {
        self.per_view.iter().all(|v| v.iter().all(Vec::is_empty))
    }

    pub fn mean_negatives_per_anchor(&self) -> f64 {
        let total: usize = self.per_view.iter().flatten().map(Vec::len).sum();
        let anchors = 3 * self.n();
        if anchors == 0 {
            0.0
        } else {
            total as f64 / anchors as f64
        }
    }
}

pub fn nhs_select_negatives(
    graph: &MultiRelationalTextGraph,
    score: &SimilarityMatrix,
    cfg: &LossConfig,
) -> Result<NegativeMask> {
    let n = graph.n();
    if score.n() != n {
        return Err(Error::Shape(format!("score matrix is {}×{0}, graph has {n} nodes", score.n())));
    }
    let mut neighbor = vec![false; n * n];
    for adj in graph.adjacencies() {
        for i in 0..n {
            for &j in adj.neighbors(i) {
                neighbor[i * n + j] = true;
            }
        }
    }
    let mut stats = SiftStats::default();
    let mut sets = Vec::with_capacity(n);
    for i in 0..n {
        let mut set = Vec::new();
        for j in (0..n).filter(|&j| j != i) {
            if cfg.mode.sifts_structure() && neighbor[i * n + j] {
                stats.structure_sifted += 1;
                continue;
            }
            if cfg.mode.sifts_attributes() && score.get(i, j) > cfg.sift_threshold {
                stats.attribute_sifted += 1;
                continue;
            }
            set.push(j);
        }
        sets.push(set);
    }
    Ok(NegativeMask {
        per_view: [sets.clone(), sets.clone(), sets],
        stats,
    })
}

/// Row-normalized views and their `n × n` cross-view similarity blocks.
struct ViewGeometry {
    /// Raw row lengths.
    norms: [Vec<f64>; 3],
    floor: f64,
    unit: [Matrix; 3],
    /// `sims[a][b] = Û_a Û_bᵀ`
    sims: [[Matrix; 3]; 3],
}

fn geometry(views: &[Matrix; 3], mask: &NegativeMask, floor: f64) -> Result<ViewGeometry> {
    let (n, d) = views[0].dim();
    if n == 0 {
        return Err(Error::Shape("empty view".into()));
    }
    if views.iter().any(|v| v.dim() != (n, d)) {
        return Err(Error::Shape("views differ in shape".into()));
    }
    if mask.n() != n {
        return Err(Error::Shape(format!("mask covers {} nodes, views {n}", mask.n())));
    }
    let mut norms: [Vec<f64>; 3] = Default::default();
    let mut unit: [Matrix; 3] = Default::default();
    for r in 0..3 {
        norms[r] = row_norms(&views[r], floor)?;
        let mut u = views[r].clone();
        for (mut row, &len) in u.rows_mut().into_iter().zip(&norms[r]) {
            row /= len.max(floor);
        }
        unit[r] = u;
    }
    let sims = std::array::from_fn(|a| std::array::from_fn(|b| unit[a].dot(&unit[b].t())));
    Ok(ViewGeometry { norms, floor, unit, sims })
}

#[inline]
fn scaled_exp(sim: f64, tau: f64) -> f64 {
    ((sim - 1.0) / tau).exp()
}

/// Exponentiated similarities split into positive and negative parts.
///
/// Every exponent is shifted by `−1/τ`; the shift cancels in the ratio and
/// keeps the terms in `(0, 1]`.
struct LossTerms {
    /// `neg[a][r][i, j] = exp((s − 1)/τ)` for `j ∈ D_i^(r)`, else 0 (anchor view `a`).
    neg: [[Matrix; 3]; 3],
    /// `pos_e[a][r][i]`: positive term between views `a` and `r ≠ a`.
    pos_e: [[Array1<f64>; 3]; 3],
    pos: [Array1<f64>; 3],
    total: [Array1<f64>; 3],
}

fn dense_masks(mask: &NegativeMask) -> [Matrix; 3] {
    let n = mask.n();
    std::array::from_fn(|r| {
        let mut m = Matrix::zeros((n, n));
        for i in 0..n {
            for &j in mask.negatives(r, i) {
                m[[i, j]] = 1.0;
            }
        }
        m
    })
}

fn loss_terms(geo: &ViewGeometry, mask: &NegativeMask, tau: f64) -> LossTerms {
    let n = mask.n();
    let masks = dense_masks(mask);
    let neg: [[Matrix; 3]; 3] = std::array::from_fn(|a| {
        std::array::from_fn(|r| {
            let mut e = Matrix::zeros((n, n));
            Zip::from(&mut e)
                .and(&geo.sims[a][r])
                .and(&masks[r])
                .for_each(|e, &s, &m| {
                    if m != 0.0 {
                        *e = scaled_exp(s, tau);
                    }
                });
            e
        })
    });
    let pos_e: [[Array1<f64>; 3]; 3] = std::array::from_fn(|a| {
        std::array::from_fn(|r| {
            if r == a {
                Array1::zeros(n)
            } else {
                geo.sims[a][r].diag().mapv(|s| scaled_exp(s, tau))
            }
        })
    });
    let pos: [Array1<f64>; 3] = std::array::from_fn(|a| {
        let mut p = Array1::zeros(n);
        for r in (0..3).filter(|&r| r != a) {
            p += &pos_e[a][r];
        }
        p
    });
    let total = std::array::from_fn(|a| {
        let mut z = pos[a].clone();
        for r in 0..3 {
            z += &neg[a][r].sum_axis(Axis(1));
        }
        z
    });
    LossTerms {
        neg,
        pos_e,
        pos,
        total,
    }
}

fn mean_log_ratio(terms: &LossTerms) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for a in 0..3 {
        for (p, z) in terms.pos[a].iter().zip(&terms.total[a]) {
            sum += -(p / z).ln();
            count += 1;
        }
    }
    sum / count as f64
}

pub fn nhs_loss(views: &[Matrix; 3], mask: &NegativeMask, cfg: &LossConfig) -> Result<f64> {
    nhs_loss_with_floor(views, mask, cfg, 0.0)
}

/// As [`nhs_loss`], normalizing rows by `max(|u|, floor)`.
pub fn nhs_loss_with_floor(views: &[Matrix; 3], mask: &NegativeMask, cfg: &LossConfig, floor: f64) -> Result<f64> {
    cfg.validate()?;
    let geo = geometry(views, mask, floor)?;
    Ok(mean_log_ratio(&loss_terms(&geo, mask, cfg.tau)))
}

/// Loss value and its gradient w.r.t. each view matrix.
pub fn nhs_loss_backward(
    views: &[Matrix; 3],
    mask: &NegativeMask,
    cfg: &LossConfig,
) -> Result<(f64, [Matrix; 3])> {
    nhs_loss_backward_with_floor(views, mask, cfg, 0.0)
}

pub fn nhs_loss_backward_with_floor(
    views: &[Matrix; 3],
    mask: &NegativeMask,
    cfg: &LossConfig,
    floor: f64,
) -> Result<(f64, [Matrix; 3])> {
    cfg.validate()?;
    let geo = geometry(views, mask, floor)?;
    let (n, d) = views[0].dim();
    let tau = cfg.tau;
    let terms = loss_terms(&geo, mask, tau);
    let loss = mean_log_ratio(&terms);
    let scale = 1.0 / (3 * n) as f64;

    // ∂ℓ/∂s = e/τ · (1/Z − [positive]/P), per anchor row
    let d_sims: [[Matrix; 3]; 3] = std::array::from_fn(|a| {
        let inv_z = terms.total[a].mapv(|z| scale / (tau * z));
        std::array::from_fn(|r| {
            let mut ds = &terms.neg[a][r] * &inv_z.view().insert_axis(Axis(1));
            if r != a {
                for i in 0..n {
                    let e = terms.pos_e[a][r][i];
                    ds[[i, i]] += scale * e / tau * (1.0 / terms.total[a][i] - 1.0 / terms.pos[a][i]);
                }
            }
            ds
        })
    });

    let mut d_unit: [Matrix; 3] = std::array::from_fn(|_| Matrix::zeros((n, d)));
    for a in 0..3 {
        for b in 0..3 {
            let ds = &d_sims[a][b];
            d_unit[a] += &ds.dot(&geo.unit[b]);
            d_unit[b] += &ds.t().dot(&geo.unit[a]);
        }
    }
    // Through row normalization: du = (dû − (dû·û) û) / |u|, or dû / floor below the floor
    let grads = std::array::from_fn(|r| {
        let mut g = d_unit[r].clone();
        for i in 0..n {
            if geo.norms[r][i] < geo.floor {
                let mut row = g.row_mut(i);
                row /= geo.floor;
                continue;
            }
            let u = geo.unit[r].row(i);
            let proj = g.row(i).dot(&u);
            let mut row = g.row_mut(i);
            row.scaled_add(-proj, &u);
            row /= geo.norms[r][i];
        }
        g
    });
    Ok((loss, grads))
}
