//! Downstream evaluation: a logistic-regression probe on the fused
//! representations, classification metrics, and the experiment harnesses.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ClassifierConfig, ExperimentConfig};
use crate::contrastive::LossMode;
use crate::corpus::{split_views_seeded, Corpus, Split};
use crate::error::{Error, Result};
use crate::graph::{build_graph, MultiRelationalTextGraph};
use crate::neural::{Matrix, ModelParameters};
use crate::trainer::{encode, pretrain, Encoding, TrainLog};

/// Multinomial logistic regression over `classes.len()` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrModel {
    pub classes: Vec<String>,
    /// `classes × d`
    pub weights: Matrix,
    pub bias: Array1<f64>,
}

impl LrModel {
    pub fn zeros(classes: Vec<String>, dim: usize) -> Self {
        let c = classes.len();
        Self {
            classes,
            weights: Matrix::zeros((c, dim)),
            bias: Array1::zeros(c),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn scores(&self, reps: &Matrix) -> Result<Matrix> {
        if reps.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "representation width {} differs from model width {}",
                reps.ncols(),
                self.dim()
            )));
        }
        Ok(reps.dot(&self.weights.t()) + &self.bias)
    }

    pub fn probabilities(&self, reps: &Matrix) -> Result<Matrix> {
        let mut s = self.scores(reps)?;
        for mut row in s.rows_mut() {
            let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let total = row.sum();
            row /= total;
        }
        Ok(s)
    }
}

/// Full-batch gradient descent on the mean cross-entropy from a zero start.
///
/// `labels[i]` indexes into `classes`.
pub fn train_lr(
    reps: &Matrix,
    labels: &[usize],
    classes: &[String],
    epochs: usize,
    lr: f64,
) -> Result<LrModel> {
    if reps.nrows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: reps.nrows(),
            right: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= classes.len()) {
        return Err(Error::InvalidConfig(format!(
            "label index {bad} outside {} classes",
            classes.len()
        )));
    }
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();
    if classes.len() < 2 || present.len() < 2 {
        return Err(Error::SingleClass(present.len()));
    }
    let m = reps.nrows() as f64;
    let mut model = LrModel::zeros(classes.to_vec(), reps.ncols());
    for _ in 0..epochs {
        let mut delta = model.probabilities(reps)?;
        for (i, &y) in labels.iter().enumerate() {
            delta[[i, y]] -= 1.0;
        }
        let gw = delta.t().dot(reps) / m;
        let gb = delta.sum_axis(Axis(0)) / m;
        model.weights.scaled_add(-lr, &gw);
        model.bias.scaled_add(-lr, &gb);
    }
    if model.weights.iter().chain(model.bias.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("logistic regression weights".into()));
    }
    Ok(model)
}

/// Argmax class index per row; the lowest index wins ties.
pub fn predict(model: &LrModel, reps: &Matrix) -> Result<Vec<usize>> {
    let scores = model.scores(reps)?;
    Ok(scores
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus one-vs-rest counts and macro-averaged precision and F1.
pub fn compute_metrics(predicted: &[usize], truth: &[usize], classes: &[String]) -> Result<MetricsReport> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::InvalidConfig("no predictions to score".into()));
    }
    if let Some(&bad) = predicted.iter().chain(truth).find(|&&y| y >= classes.len()) {
        return Err(Error::InvalidConfig(format!(
            "label index {bad} outside {} classes",
            classes.len()
        )));
    }
    let n = truth.len();
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    let mut per_class = Vec::with_capacity(classes.len());
    for (k, class) in classes.iter().enumerate() {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p == k, t == k) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        per_class.push(ClassMetrics {
            class: class.clone(),
            tp,
            fp,
            tn: n - tp - fp - fn_,
            fn_,
            precision,
            recall,
            f1,
        });
    }
    let c = classes.len().max(1) as f64;
    Ok(MetricsReport {
        accuracy: ratio(correct, n),
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / c,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / c,
        per_class,
    })
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub run_id: String,
    pub mode: String,
    pub label_rate: f64,
    pub swept_param: Option<String>,
    pub swept_value: Option<f64>,
    pub seed: u64,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub f1_macro: f64,
    pub epochs_trained: usize,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub record: ResultRecord,
    pub metrics: MetricsReport,
}

/// Graph, trained parameters and their encoding of the corpus.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub graph: MultiRelationalTextGraph,
    pub params: ModelParameters,
    pub log: TrainLog,
    pub encoding: Encoding,
    pub wall_time_ms: u64,
}

pub fn pretrain_and_encode(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<Pretrained> {
    cfg.validate()?;
    let start = Instant::now();
    let graph = build_graph(corpus, &cfg.thresholds)?;
    let arch = cfg.arch.resolve(corpus.dim());
    let (params, log) = pretrain(corpus, &graph, &cfg.train_config(), &arch)?;
    let encoding = encode(corpus, &graph, &params)?;
    Ok(Pretrained {
        graph,
        params,
        log,
        encoding,
        wall_time_ms: elapsed_ms(start, cfg.train.record_timing),
    })
}

fn elapsed_ms(start: Instant, enabled: bool) -> u64 {
    if enabled {
        start.elapsed().as_millis() as u64
    } else {
        0
    }
}

fn normalize_rows(reps: &Matrix) -> Matrix {
    let mut out = reps.clone();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// Fit the probe on the labeled training subsample and score the test split.
pub fn evaluate_representations(
    corpus: &Corpus,
    reps: &Matrix,
    label_rate: f64,
    classifier: &ClassifierConfig,
) -> Result<MetricsReport> {
    if reps.nrows() != corpus.len() {
        return Err(Error::Shape(format!(
            "{} representation rows for {} documents",
            reps.nrows(),
            corpus.len()
        )));
    }
    classifier.validate()?;
    let reps = if classifier.normalize {
        normalize_rows(reps)
    } else {
        reps.clone()
    };
    let classes = corpus.classes();
    let split = split_views_seeded(corpus, label_rate, classifier.split_seed)?;
    let label_of = |i: usize| -> Option<usize> {
        corpus.docs()[i]
            .label
            .as_deref()
            .and_then(|l| corpus.class_index(l))
    };
    let train_rows: Vec<usize> = split
        .labeled
        .iter()
        .filter_map(|id| corpus.index_of(id))
        .collect();
    let train_labels: Vec<usize> = train_rows.iter().filter_map(|&i| label_of(i)).collect();
    let test_rows: Vec<usize> = corpus
        .docs()
        .iter()
        .enumerate()
        .filter(|(_, d)| d.split == Split::Test && d.label.is_some())
        .map(|(i, _)| i)
        .collect();
    if test_rows.is_empty() {
        return Err(Error::InvalidConfig("no labeled test documents".into()));
    }
    let truth: Vec<usize> = test_rows.iter().filter_map(|&i| label_of(i)).collect();
    let model = train_lr(
        &reps.select(Axis(0), &train_rows),
        &train_labels,
        &classes,
        classifier.epochs,
        classifier.learning_rate,
    )?;
    let predicted = predict(&model, &reps.select(Axis(0), &test_rows))?;
    compute_metrics(&predicted, &truth, &classes)
}

fn record(
    run_id: String,
    mode: &str,
    cfg: &ExperimentConfig,
    label_rate: f64,
    metrics: &MetricsReport,
    epochs_trained: usize,
    wall_time_ms: u64,
) -> ResultRecord {
    ResultRecord {
        run_id,
        mode: mode.to_string(),
        label_rate,
        swept_param: None,
        swept_value: None,
        seed: cfg.train.seed,
        accuracy: metrics.accuracy,
        precision_macro: metrics.precision,
        f1_macro: metrics.f1,
        epochs_trained,
        wall_time_ms,
    }
}

/// Build graph, pretrain, encode, fit the probe and score the test split.
pub fn run_experiment(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<RunResult> {
    let start = Instant::now();
    let pre = pretrain_and_encode(corpus, cfg)?;
    let metrics = evaluate_representations(corpus, &pre.encoding.fused, cfg.label_rate, &cfg.classifier)?;
    Ok(RunResult {
        record: record(
            "run-0".into(),
            cfg.loss.mode.name(),
            cfg,
            cfg.label_rate,
            &metrics,
            pre.log.len(),
            elapsed_ms(start, cfg.train.record_timing),
        ),
        metrics,
    })
}

/// Mode label used for the content-vector baseline.
pub const RAW_MODE: &str = "raw";

/// The same probe fitted directly on content vectors.
pub fn run_raw_baseline(corpus: &Corpus, cfg: &ExperimentConfig) -> Result<RunResult> {
    cfg.validate()?;
    let metrics = evaluate_representations(corpus, &corpus.content_matrix(), cfg.label_rate, &cfg.classifier)?;
    Ok(RunResult {
        record: record("raw-0".into(), RAW_MODE, cfg, cfg.label_rate, &metrics, 0, 0),
        metrics,
    })
}

/// Pretrains once and evaluates the shared representations at every rate.
pub fn run_label_rate_sweep(corpus: &Corpus, cfg: &ExperimentConfig, rates: &[f64]) -> Result<Vec<RunResult>> {
    let pre = pretrain_and_encode(corpus, cfg)?;
    rates
        .par_iter()
        .enumerate()
        .map(|(k, &rate)| {
            let start = Instant::now();
            let metrics = evaluate_representations(corpus, &pre.encoding.fused, rate, &cfg.classifier)?;
            let ms = pre.wall_time_ms + elapsed_ms(start, cfg.train.record_timing);
            Ok(RunResult {
                record: record(
                    format!("label-rate-{k}"),
                    cfg.loss.mode.name(),
                    cfg,
                    rate,
                    &metrics,
                    pre.log.len(),
                    ms,
                ),
                metrics,
            })
        })
        .collect()
}

/// One full pipeline per loss mode, everything else shared.
pub fn run_ablation(corpus: &Corpus, cfg: &ExperimentConfig, modes: &[LossMode]) -> Result<Vec<RunResult>> {
    modes
        .par_iter()
        .enumerate()
        .map(|(k, &mode)| {
            let mut run_cfg = cfg.clone();
            run_cfg.loss.mode = mode;
            let mut out = run_experiment(corpus, &run_cfg)?;
            out.record.run_id = format!("ablation-{k}");
            Ok(out)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    RhoT,
    RhoE,
    RhoK,
    GammaE,
    GammaK,
    Tau,
    SiftThreshold,
}

impl SweepParam {
    pub const ALL: [SweepParam; 7] = [
        SweepParam::RhoT,
        SweepParam::RhoE,
        SweepParam::RhoK,
        SweepParam::GammaE,
        SweepParam::GammaK,
        SweepParam::Tau,
        SweepParam::SiftThreshold,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::RhoT => "rho_t",
            SweepParam::RhoE => "rho_e",
            SweepParam::RhoK => "rho_k",
            SweepParam::GammaE => "gamma_e",
            SweepParam::GammaK => "gamma_k",
            SweepParam::Tau => "tau",
            SweepParam::SiftThreshold => "sift_threshold",
        }
    }

    /// Write `value` into the matching config field.
    pub fn apply(self, cfg: &mut ExperimentConfig, value: f64) -> Result<()> {
        let count = || -> Result<usize> {
            if value >= 0.0 && value.fract() == 0.0 && value.is_finite() {
                Ok(value as usize)
            } else {
                Err(Error::InvalidConfig(format!(
                    "{} takes a non-negative integer, got {value}",
                    self.name()
                )))
            }
        };
        match self {
            SweepParam::RhoT => cfg.thresholds.rho_t = value,
            SweepParam::RhoE => cfg.thresholds.rho_e = value,
            SweepParam::RhoK => cfg.thresholds.rho_k = value,
            SweepParam::GammaE => cfg.thresholds.gamma_e = count()?,
            SweepParam::GammaK => cfg.thresholds.gamma_k = count()?,
            SweepParam::Tau => cfg.loss.tau = value,
            SweepParam::SiftThreshold => cfg.loss.sift_threshold = value,
        }
        cfg.validate()
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_").to_ascii_lowercase();
        SweepParam::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown sweep parameter {s:?}")))
    }
}

/// One experiment per value of `param`, all other settings fixed.
pub fn run_sensitivity_sweep(
    corpus: &Corpus,
    cfg: &ExperimentConfig,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<RunResult>> {
    let configs = values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            param.apply(&mut c, v)?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .zip(values.par_iter())
        .enumerate()
        .map(|(k, (run_cfg, &v))| {
            let mut out = run_experiment(corpus, run_cfg)?;
            out.record.run_id = format!("sweep-{k}");
            out.record.swept_param = Some(param.name().to_string());
            out.record.swept_value = Some(v);
            Ok(out)
        })
        .collect()
}

#[derive(Serialize)]
struct ResultsDocument<'a> {
    config: &'a ExperimentConfig,
    results: Vec<&'a ResultRecord>,
}

/// JSON results with the resolved configuration under `config`.
pub fn write_results_json<W: Write>(out: W, cfg: &ExperimentConfig, runs: &[RunResult]) -> Result<()> {
    let doc = ResultsDocument {
        config: cfg,
        results: runs.iter().map(|r| &r.record).collect(),
    };
    let mut out = out;
    serde_json::to_writer_pretty(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// CSV results; the first line is a `# config: {json}` comment.
pub fn write_results_csv<W: Write>(mut out: W, cfg: &ExperimentConfig, runs: &[RunResult]) -> Result<()> {
    writeln!(out, "# config: {}", cfg.to_json()?)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "run_id",
        "mode",
        "label_rate",
        "swept_param",
        "swept_value",
        "seed",
        "accuracy",
        "precision_macro",
        "f1_macro",
        "epochs_trained",
        "wall_time_ms",
    ])?;
    for run in runs {
        w.serialize(&run.record)?;
    }
    w.flush()?;
    Ok(())
}
