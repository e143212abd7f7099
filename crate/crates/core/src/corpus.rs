//! Document feature model, embedding bundle IO and synthetic corpora.
//!
//! The primary pipeline only ever sees vectors: the content embedding used as
//! the initial node representation, a title embedding, and variable-length
//! lists of keyword and event embeddings. Text processing happens upstream and
//! reaches this crate through the bundle format handled here.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BUNDLE_SCHEMA: &str = "connhs-bundle/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentFeatures {
    pub id: String,
    pub label: Option<String>,
    pub split: Split,
    pub content_vec: Vec<f64>,
    pub title_vec: Vec<f64>,
    pub keyword_vecs: Vec<Vec<f64>>,
    pub event_vecs: Vec<Vec<f64>>,
}

impl DocumentFeatures {
    fn validate(&self, dim: usize) -> Result<()> {
        let check = |field: &str, v: &[f64]| -> Result<()> {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    record: self.id.clone(),
                    field: field.to_string(),
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    record: self.id.clone(),
                    field: field.to_string(),
                });
            }
            Ok(())
        };
        check("content_vec", &self.content_vec)?;
        check("title_vec", &self.title_vec)?;
        for (k, v) in self.keyword_vecs.iter().enumerate() {
            check(&format!("keyword_vecs[{k}]"), v)?;
        }
        for (k, v) in self.event_vecs.iter().enumerate() {
            check(&format!("event_vecs[{k}]"), v)?;
        }
        Ok(())
    }
}

/// A validated, immutable collection of documents sharing one embedding dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    docs: Vec<DocumentFeatures>,
    dim: usize,
    class_set: BTreeSet<String>,
    encoder: String,
}

impl Corpus {
    pub fn new(docs: Vec<DocumentFeatures>, dim: usize) -> Result<Self> {
        Self::with_encoder(docs, dim, "unspecified")
    }

    pub fn with_encoder(docs: Vec<DocumentFeatures>, dim: usize, encoder: &str) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be at least 1".into()));
        }
        let mut seen = HashSet::with_capacity(docs.len());
        for doc in &docs {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
            doc.validate(dim)?;
        }
        let class_set = docs.iter().filter_map(|d| d.label.clone()).collect();
        Ok(Self {
            docs,
            dim,
            class_set,
            encoder: encoder.to_string(),
        })
    }

    pub fn docs(&self) -> &[DocumentFeatures] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encoder(&self) -> &str {
        &self.encoder
    }

    pub fn class_set(&self) -> &BTreeSet<String> {
        &self.class_set
    }

    /// Classes in their fixed (sorted) order; class indices refer to this list.
    pub fn classes(&self) -> Vec<String> {
        self.class_set.iter().cloned().collect()
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_set.iter().position(|c| c == label)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.docs.iter().position(|d| d.id == id)
    }

    /// Row-major `n × dim` matrix of content vectors (initial node features).
    pub fn content_matrix(&self) -> ndarray::Array2<f64> {
        let mut m = ndarray::Array2::zeros((self.docs.len(), self.dim));
        for (mut row, doc) in m.rows_mut().into_iter().zip(&self.docs) {
            row.assign(&ndarray::ArrayView1::from(&doc.content_vec));
        }
        m
    }

    /// Serialize to the JSON Lines bundle format.
    pub fn write_bundle<W: Write>(&self, mut out: W) -> Result<()> {
        let manifest = Manifest {
            schema: BUNDLE_SCHEMA.to_string(),
            dim: self.dim,
            encoder: self.encoder.clone(),
        };
        serde_json::to_writer(&mut out, &manifest)?;
        out.write_all(b"\n")?;
        for doc in &self.docs {
            serde_json::to_writer(&mut out, doc)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save_bundle(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = File::create(path)?;
        self.write_bundle(BufWriter::new(file))
    }

    pub fn to_bundle_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_bundle(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    schema: String,
    dim: usize,
    encoder: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    label: Option<String>,
    split: Split,
    content_vec: Vec<f64>,
    title_vec: Vec<f64>,
    keyword_vecs: Vec<Vec<f64>>,
    event_vecs: Vec<Vec<f64>>,
}

/// Read and validate a bundle file.
pub fn load_bundle(path: impl AsRef<Path>) -> Result<Corpus> {
    let file = File::open(path)?;
    read_bundle(BufReader::new(file))
}

pub fn read_bundle<R: BufRead>(reader: R) -> Result<Corpus> {
    let mut lines = reader.lines().enumerate();
    let manifest: Manifest = loop {
        match lines.next() {
            None => {
                return Err(Error::Schema {
                    line: 1,
                    record: None,
                    message: "missing manifest line".into(),
                })
            }
            Some((_, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line).map_err(|e| Error::Schema {
                    line: 1,
                    record: None,
                    message: format!("manifest: {e}"),
                })?;
            }
        }
    };
    if manifest.schema != BUNDLE_SCHEMA {
        return Err(Error::Schema {
            line: 1,
            record: None,
            message: format!("unsupported schema {:?}, expected {BUNDLE_SCHEMA:?}", manifest.schema),
        });
    }

    let mut docs = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Schema {
            line: line_no,
            record: None,
            message: e.to_string(),
        })?;
        let id = value.get("id").and_then(|v| v.as_str()).map(str::to_string);
        let raw: RawRecord = serde_json::from_value(value).map_err(|e| Error::Schema {
            line: line_no,
            record: id,
            message: e.to_string(),
        })?;
        docs.push(DocumentFeatures {
            id: raw.id,
            label: raw.label,
            split: raw.split,
            content_vec: raw.content_vec,
            title_vec: raw.title_vec,
            keyword_vecs: raw.keyword_vecs,
            event_vecs: raw.event_vecs,
        });
    }
    Corpus::with_encoder(docs, manifest.dim, &manifest.encoder)
}

/// Parameters of the planted-cluster generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_clusters: usize,
    pub docs_per_cluster: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of the noise on content and title
    /// vectors. Keyword and event vectors get noise of this total length instead.
    pub intra_noise: f64,
    /// Fraction of each cluster whose first keyword is drawn near a foreign centroid.
    pub cross_confuser_rate: f64,
    pub seed: u64,
    /// Pairwise cosine between centroids (exact when `n_clusters < dim`).
    #[serde(default = "default_centroid_cosine")]
    pub centroid_cosine: f64,
}

fn default_centroid_cosine() -> f64 {
    0.5
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_clusters: 4,
            docs_per_cluster: 50,
            dim: 32,
            intra_noise: 0.3,
            cross_confuser_rate: 0.1,
            seed: 0,
            centroid_cosine: default_centroid_cosine(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 {
            return Err(Error::InvalidConfig("n_clusters must be positive".into()));
        }
        if self.docs_per_cluster == 0 {
            return Err(Error::InvalidConfig("docs_per_cluster must be positive".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidConfig("dim must be positive".into()));
        }
        if !(self.intra_noise.is_finite() && self.intra_noise >= 0.0) {
            return Err(Error::InvalidConfig("intra_noise must be a nonnegative real".into()));
        }
        if !(0.0..=1.0).contains(&self.cross_confuser_rate) {
            return Err(Error::InvalidConfig("cross_confuser_rate must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.centroid_cosine) {
            return Err(Error::InvalidConfig("centroid_cosine must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Random unit vectors, orthogonalized against each other while that is possible.
fn orthonormal(k: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if out.len() < dim {
            for c in &out {
                let proj: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= proj * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        out.push(v);
    }
    out
}

/// Unit centroids `√a·g + √(1−a)·e_c` around a shared direction `g`.
fn centroids(k: usize, dim: usize, cosine: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let basis = orthonormal(k + 1, dim, rng);
    let (shared, own) = (cosine.sqrt(), (1.0 - cosine).sqrt());
    basis[1..]
        .iter()
        .map(|e| {
            let mut v: Vec<f64> = basis[0].iter().zip(e).map(|(g, x)| shared * g + own * x).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= norm);
            v
        })
        .collect()
}

fn jitter(center: &[f64], scale: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    center
        .iter()
        .map(|c| {
            let z: f64 = StandardNormal.sample(rng);
            c + scale * z
        })
        .collect()
}

/// Generate a planted-cluster corpus. Pure function of `spec`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let centers = centroids(spec.n_clusters, spec.dim, spec.centroid_cosine, &mut rng);
    let per = spec.docs_per_cluster;
    let n_test = (per as f64 * 0.2).round() as usize;
    let n_confusers = if spec.n_clusters > 1 {
        (per as f64 * spec.cross_confuser_rate).round() as usize
    } else {
        0
    };
    let noise = spec.intra_noise;
    let feature_noise = noise / (spec.dim as f64).sqrt();

    let mut docs = Vec::with_capacity(spec.n_clusters * per);
    for (c, center) in centers.iter().enumerate() {
        let mut order: Vec<usize> = (0..per).collect();
        order.shuffle(&mut rng);
        let confusers: HashSet<usize> = order[..n_confusers].iter().copied().collect();
        for t in 0..per {
            let content_vec = jitter(center, noise, &mut rng);
            let title_vec = jitter(center, noise, &mut rng);
            let n_kw = rng.random_range(2..=4);
            let mut keyword_vecs: Vec<Vec<f64>> =
                (0..n_kw).map(|_| jitter(center, feature_noise, &mut rng)).collect();
            let n_ev = rng.random_range(1..=3);
            let event_vecs = (0..n_ev).map(|_| jitter(center, feature_noise, &mut rng)).collect();
            if confusers.contains(&t) {
                let mut other = rng.random_range(0..spec.n_clusters - 1);
                if other >= c {
                    other += 1;
                }
                keyword_vecs[0] = jitter(&centers[other], feature_noise, &mut rng);
            }
            docs.push(DocumentFeatures {
                id: format!("c{c}-d{t}"),
                label: Some(c.to_string()),
                split: if t < per - n_test { Split::Train } else { Split::Test },
                content_vec,
                title_vec,
                keyword_vecs,
                event_vecs,
            });
        }
    }
    Corpus::with_encoder(docs, spec.dim, "synthetic")
}

/// Labeled/unlabeled partition of the training documents (ids in corpus order).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSplit {
    pub labeled: Vec<String>,
    pub unlabeled: Vec<String>,
}

/// Stratified labeled subsample of the training split with a fixed default seed.
pub fn split_views(corpus: &Corpus, label_rate: f64) -> Result<LabelSplit> {
    split_views_seeded(corpus, label_rate, 0)
}

/// Stratified labeled subsample: `⌈rate · n_c⌉` (at least one) documents per class.
///
/// For a fixed seed the labeled sets are nested as the rate grows.
pub fn split_views_seeded(corpus: &Corpus, label_rate: f64, seed: u64) -> Result<LabelSplit> {
    if !(label_rate > 0.0 && label_rate <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "label rate {label_rate} outside (0, 1]"
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    let mut n_train = 0usize;
    for (i, doc) in corpus.docs().iter().enumerate() {
        if doc.split != Split::Train {
            continue;
        }
        n_train += 1;
        if let Some(label) = &doc.label {
            by_class.entry(label.as_str()).or_default().push(i);
        }
    }
    if by_class.is_empty() {
        return Err(Error::InvalidConfig("no labeled training documents".into()));
    }
    let budget = (label_rate * n_train as f64).ceil() as usize;
    if budget < by_class.len() {
        return Err(Error::InsufficientLabels {
            rate: label_rate,
            labeled: budget,
            classes: by_class.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; corpus.len()];
    for members in by_class.values() {
        let mut order = members.clone();
        order.shuffle(&mut rng);
        let take = ((label_rate * members.len() as f64).ceil() as usize).clamp(1, members.len());
        for &i in &order[..take] {
            chosen[i] = true;
        }
    }
    let mut split = LabelSplit {
        labeled: Vec::new(),
        unlabeled: Vec::new(),
    };
    for (i, doc) in corpus.docs().iter().enumerate() {
        if doc.split != Split::Train {
            continue;
        }
        if chosen[i] {
            split.labeled.push(doc.id.clone());
        } else {
            split.unlabeled.push(doc.id.clone());
        }
    }
    Ok(split)
}
