//! Multi-relational text graph construction.
//!
//! Three boolean relations link documents: title similarity above `rho_t`, and
//! for keywords and events, more than `gamma` cross pairs whose similarity is
//! above `rho`. Every comparison is strict.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Title,
    Keyword,
    Event,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::Title, Relation::Keyword, Relation::Event];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::Title => "title",
            Relation::Keyword => "keyword",
            Relation::Event => "event",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which list-valued feature an association relation is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssociationFeature {
    Event,
    Keyword,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub rho_t: f64,
    pub rho_e: f64,
    pub rho_k: f64,
    pub gamma_e: usize,
    pub gamma_k: usize,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            rho_t: 0.7,
            rho_e: 0.6,
            rho_k: 0.6,
            gamma_e: 3,
            gamma_k: 6,
        }
    }
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho_t", self.rho_t), ("rho_e", self.rho_e), ("rho_k", self.rho_k)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!("{name}={v} outside [-1, 1]")));
            }
        }
        Ok(())
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Cosine similarity given precomputed norms; identical arithmetic to [`cosine_similarity`].
#[inline]
fn cosine_with_norms(x: &[f64], y: &[f64], nx: f64, ny: f64) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (dot / (nx * ny)).clamp(-1.0, 1.0)
}

pub fn cosine_similarity(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let (nx, ny) = (norm(x), norm(y));
    if nx == 0.0 || ny == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(cosine_with_norms(x, y, nx, ny))
}

/// A symmetric, irreflexive boolean relation stored as sorted neighbor lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationAdjacency {
    relation: Relation,
    neighbors: Vec<Vec<usize>>,
}

impl RelationAdjacency {
    pub fn empty(relation: Relation, n: usize) -> Self {
        Self {
            relation,
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Build from an undirected edge list; self-loops are rejected, duplicates collapse.
    pub fn from_edges(relation: Relation, n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::Shape(format!("edge ({i}, {j}) out of range for n={n}")));
            }
            if i == j {
                return Err(Error::Shape(format!("self-loop at node {i}")));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self { relation, neighbors })
    }

    /// Build by evaluating `edge(i, j)` for every `i < j`. Rows are evaluated in parallel.
    pub fn from_predicate<F>(relation: Relation, n: usize, edge: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> Result<bool> + Sync,
    {
        let upper: Vec<Vec<usize>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut row = Vec::new();
                for j in i + 1..n {
                    if edge(i, j)? {
                        row.push(j);
                    }
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let mut neighbors = vec![Vec::new(); n];
        for (i, row) in upper.iter().enumerate() {
            for &j in row {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        Ok(Self { relation, neighbors })
    }

    pub fn relation(&self) -> Relation {
        self.relation
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges as `(i, j)` with `i < j`, lexicographically sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, list) in self.neighbors.iter().enumerate() {
            out.extend(list.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }
}

/// Nodes plus one adjacency per relation, in `Relation::ALL` order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiRelationalTextGraph {
    node_order: Vec<String>,
    adjacencies: [RelationAdjacency; 3],
}

impl MultiRelationalTextGraph {
    pub fn new(node_order: Vec<String>, adjacencies: [RelationAdjacency; 3]) -> Result<Self> {
        let n = node_order.len();
        for (k, adj) in adjacencies.iter().enumerate() {
            if adj.n() != n {
                return Err(Error::Shape(format!(
                    "{} adjacency has {} nodes, expected {n}",
                    adj.relation(),
                    adj.n()
                )));
            }
            if adj.relation() != Relation::ALL[k] {
                return Err(Error::Shape(format!(
                    "adjacency slot {k} holds relation {}",
                    adj.relation()
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = node_order.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::DuplicateId(dup.clone()));
        }
        Ok(Self {
            node_order,
            adjacencies,
        })
    }

    pub fn n(&self) -> usize {
        self.node_order.len()
    }

    pub fn node_order(&self) -> &[String] {
        &self.node_order
    }

    pub fn adjacency(&self, relation: Relation) -> &RelationAdjacency {
        &self.adjacencies[relation.index()]
    }

    pub fn adjacencies(&self) -> &[RelationAdjacency; 3] {
        &self.adjacencies
    }

    /// True when `i` and `j` are adjacent in any relation.
    pub fn adjacent_any(&self, i: usize, j: usize) -> bool {
        self.adjacencies.iter().any(|a| a.has_edge(i, j))
    }

    pub fn edge_counts(&self) -> [usize; 3] {
        [0, 1, 2].map(|k| self.adjacencies[k].edge_count())
    }

    pub fn export(&self) -> GraphExport {
        GraphExport {
            n: self.n(),
            node_order: self.node_order.clone(),
            relations: RelationEdges {
                title: self.adjacencies[0].edges(),
                keyword: self.adjacencies[1].edges(),
                event: self.adjacencies[2].edges(),
            },
        }
    }

    pub fn from_export(export: &GraphExport) -> Result<Self> {
        let n = export.n;
        if export.node_order.len() != n {
            return Err(Error::Shape(format!(
                "node_order has {} ids, n = {n}",
                export.node_order.len()
            )));
        }
        Self::new(
            export.node_order.clone(),
            [
                RelationAdjacency::from_edges(Relation::Title, n, &export.relations.title)?,
                RelationAdjacency::from_edges(Relation::Keyword, n, &export.relations.keyword)?,
                RelationAdjacency::from_edges(Relation::Event, n, &export.relations.event)?,
            ],
        )
    }

    pub fn write_export<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer(out, &self.export())?;
        Ok(())
    }

    pub fn save_export(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_export(&mut file)?;
        file.write_all(b"\n")?;
        Ok(())
    }
}

/// JSON shape of an exported graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphExport {
    pub n: usize,
    pub node_order: Vec<String>,
    pub relations: RelationEdges,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationEdges {
    pub title: Vec<(usize, usize)>,
    pub keyword: Vec<(usize, usize)>,
    pub event: Vec<(usize, usize)>,
}

fn norms_checked(vs: &[Vec<f64>]) -> Result<Vec<f64>> {
    vs.iter()
        .map(|v| {
            let n = norm(v);
            if n == 0.0 {
                Err(Error::ZeroVector)
            } else {
                Ok(n)
            }
        })
        .collect()
}

/// Count all `(a, b)` in `set_a × set_b` with `Sim(a, b) > rho`.
pub fn count_matching_pairs(set_a: &[Vec<f64>], set_b: &[Vec<f64>], rho: f64) -> Result<usize> {
    let na = norms_checked(set_a)?;
    let nb = norms_checked(set_b)?;
    count_with_norms(set_a, &na, set_b, &nb, rho)
}

fn count_with_norms(
    set_a: &[Vec<f64>],
    na: &[f64],
    set_b: &[Vec<f64>],
    nb: &[f64],
    rho: f64,
) -> Result<usize> {
    let mut count = 0;
    for (a, &la) in set_a.iter().zip(na) {
        for (b, &lb) in set_b.iter().zip(nb) {
            if a.len() != b.len() {
                return Err(Error::LengthMismatch {
                    left: a.len(),
                    right: b.len(),
                });
            }
            if cosine_with_norms(a, b, la, lb) > rho {
                count += 1;
            }
        }
    }
    Ok(count)
}

pub fn build_title_relation(corpus: &Corpus, rho_t: f64) -> Result<RelationAdjacency> {
    let titles: Vec<Vec<f64>> = corpus.docs().iter().map(|d| d.title_vec.clone()).collect();
    let norms = norms_checked(&titles)?;
    RelationAdjacency::from_predicate(Relation::Title, corpus.len(), |i, j| {
        Ok(cosine_with_norms(&titles[i], &titles[j], norms[i], norms[j]) > rho_t)
    })
}

pub fn build_association_relation(
    corpus: &Corpus,
    feature: AssociationFeature,
    rho: f64,
    gamma: usize,
) -> Result<RelationAdjacency> {
    let (relation, sets): (Relation, Vec<&Vec<Vec<f64>>>) = match feature {
        AssociationFeature::Event => (
            Relation::Event,
            corpus.docs().iter().map(|d| &d.event_vecs).collect(),
        ),
        AssociationFeature::Keyword => (
            Relation::Keyword,
            corpus.docs().iter().map(|d| &d.keyword_vecs).collect(),
        ),
    };
    let norms: Vec<Vec<f64>> = sets.iter().map(|s| norms_checked(s)).collect::<Result<_>>()?;
    RelationAdjacency::from_predicate(relation, corpus.len(), |i, j| {
        let count = count_with_norms(sets[i], &norms[i], sets[j], &norms[j], rho)?;
        Ok(count > gamma)
    })
}

pub fn build_graph(corpus: &Corpus, cfg: &ThresholdConfig) -> Result<MultiRelationalTextGraph> {
    cfg.validate()?;
    let title = build_title_relation(corpus, cfg.rho_t)?;
    let keyword =
        build_association_relation(corpus, AssociationFeature::Keyword, cfg.rho_k, cfg.gamma_k)?;
    let event =
        build_association_relation(corpus, AssociationFeature::Event, cfg.rho_e, cfg.gamma_e)?;
    let order = corpus.docs().iter().map(|d| d.id.clone()).collect();
    MultiRelationalTextGraph::new(order, [title, keyword, event])
}

/// A single-relation semantic subgraph sharing the parent's node order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticSubgraph<'a> {
    pub relation: Relation,
    pub node_order: &'a [String],
    pub adjacency: &'a RelationAdjacency,
}

/// Split the multi-relational graph into its three single-relation views.
pub fn separate(graph: &MultiRelationalTextGraph) -> [SemanticSubgraph<'_>; 3] {
    Relation::ALL.map(|r| SemanticSubgraph {
        relation: r,
        node_order: graph.node_order(),
        adjacency: graph.adjacency(r),
    })
}
