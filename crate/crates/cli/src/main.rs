use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use connhs::config::ExperimentConfig;
use connhs::contrastive::LossMode;
use connhs::corpus::{generate_synthetic, load_bundle, Corpus, SyntheticSpec};
use connhs::eval::{
    run_ablation, run_experiment, run_label_rate_sweep, run_raw_baseline, run_sensitivity_sweep, write_results_csv,
    write_results_json, RunResult, SweepParam,
};
use connhs::graph::{build_graph, Relation};
use connhs::neural::GateKind;
use connhs::trainer::pretrain;
use connhs::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "connhs", version, about = "Contrastive multi-graph document classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic planted-cluster corpus bundle.
    Gen(GenArgs),
    /// Build the three-relation document graph and export it.
    BuildGraph {
        #[command(flatten)]
        common: Common,
        /// Graph export destination (default: <out-dir>/graph.json).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pretrain the encoder and write a checkpoint and epoch log.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// One pretrain + probe run at the configured label rate.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Also score the probe on the raw content vectors.
        #[arg(long)]
        with_raw: bool,
    },
    /// Vary one hyperparameter over a list of values.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        param: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
    /// Compare loss variants.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', value_parser = parse_mode)]
        modes: Vec<LossMode>,
    },
    /// Evaluate one pretrained encoder at several label rates.
    LabelRate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        rates: Vec<f64>,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    clusters: u64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    per: u64,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    #[arg(long, default_value_t = 0, env = "CONNHS_SEED")]
    seed: u64,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    #[arg(long, default_value_t = 0.1)]
    confuser_rate: f64,
    #[arg(long, default_value_t = 0.5)]
    centroid_cosine: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum GateArg {
    Scalar,
    Elementwise,
}

/// Flags shared by every pipeline command. Each overrides the matching
/// field of the config file.
#[derive(Args)]
struct Common {
    /// TOML document with ExperimentConfig fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    bundle: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    rho_t: Option<f64>,
    #[arg(long)]
    rho_e: Option<f64>,
    #[arg(long)]
    rho_k: Option<f64>,
    #[arg(long)]
    gamma_e: Option<usize>,
    #[arg(long)]
    gamma_k: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sift_threshold: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<LossMode>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long, env = "CONNHS_SEED")]
    seed: Option<u64>,
    /// Comma-separated pretraining seeds for the harness commands.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    label_rate: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    proj_dim: Option<usize>,
    #[arg(long, value_enum)]
    gate: Option<GateArg>,
    #[arg(long)]
    record_timing: bool,
}

fn parse_mode(s: &str) -> Result<LossMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

impl Common {
    fn resolve(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v;
                }
            };
        }
        set!(self.rho_t => cfg.thresholds.rho_t);
        set!(self.rho_e => cfg.thresholds.rho_e);
        set!(self.rho_k => cfg.thresholds.rho_k);
        set!(self.gamma_e => cfg.thresholds.gamma_e);
        set!(self.gamma_k => cfg.thresholds.gamma_k);
        set!(self.tau => cfg.loss.tau);
        set!(self.sift_threshold => cfg.loss.sift_threshold);
        set!(self.mode => cfg.loss.mode);
        set!(self.max_epochs => cfg.train.max_epochs);
        set!(self.patience => cfg.train.patience);
        if self.patience.is_none() && cfg.train.max_epochs > 0 {
            // a short --max-epochs run should not trip the patience bound
            cfg.train.patience = cfg.train.patience.min(cfg.train.max_epochs);
        }
        set!(self.seed => cfg.train.seed);
        set!(self.learning_rate => cfg.train.learning_rate);
        set!(self.label_rate => cfg.label_rate);
        set!(self.split_seed => cfg.classifier.split_seed);
        set!(self.layers => cfg.arch.layers);
        if let Some(h) = self.hidden_dim {
            cfg.arch.hidden_dim = Some(h);
        }
        if let Some(p) = self.proj_dim {
            cfg.arch.proj_dim = Some(p);
        }
        if let Some(g) = self.gate {
            cfg.arch.gate = match g {
                GateArg::Scalar => GateKind::Scalar,
                GateArg::Elementwise => GateKind::Elementwise,
            };
        }
        if self.record_timing {
            cfg.train.record_timing = true;
        }
        if !self.seeds.is_empty() {
            cfg.harness.seeds = self.seeds.clone();
        }
        if let Some(b) = &self.bundle {
            cfg.io.bundle = Some(b.clone());
        }
        if let Some(o) = &self.out_dir {
            cfg.io.out_dir = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn corpus_for(cfg: &ExperimentConfig) -> anyhow::Result<Corpus> {
    let path = cfg.io.bundle.as_ref().ok_or_else(|| anyhow!("no bundle given (--bundle or io.bundle)"))?;
    load_bundle(path).with_context(|| format!("loading {}", path.display()))
}

fn out_dir(cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    let dir = cfg.io.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_results(cfg: &ExperimentConfig, runs: &[RunResult]) -> anyhow::Result<()> {
    let dir = out_dir(cfg)?;
    let json = dir.join("results.json");
    write_results_json(BufWriter::new(File::create(&json)?), cfg, runs)?;
    let csv = dir.join("results.csv");
    let mut w = BufWriter::new(File::create(&csv)?);
    write_results_csv(&mut w, cfg, runs)?;
    w.flush()?;
    for run in runs {
        let r = &run.record;
        println!(
            "{}\t{}\tseed={}\tlabel_rate={}\taccuracy={:.4}\tf1={:.4}",
            r.run_id, r.mode, r.seed, r.label_rate, r.accuracy, r.f1_macro
        );
    }
    println!("wrote {} and {}", json.display(), csv.display());
    Ok(())
}

/// Run `f` once per configured seed, tagging run ids when there is more than one.
fn per_seed<F>(cfg: &ExperimentConfig, f: F) -> anyhow::Result<Vec<RunResult>>
where
    F: Fn(&ExperimentConfig) -> connhs::Result<Vec<RunResult>>,
{
    let seeds = if cfg.harness.seeds.is_empty() { vec![cfg.train.seed] } else { cfg.harness.seeds.clone() };
    let mut all = Vec::new();
    for &seed in &seeds {
        let mut c = cfg.clone();
        c.train.seed = seed;
        // parallel runs must not race on one checkpoint file
        c.io.checkpoint = None;
        let mut runs = f(&c)?;
        if seeds.len() > 1 {
            for r in &mut runs {
                r.record.run_id = format!("{}-s{seed}", r.record.run_id);
            }
        }
        all.extend(runs);
    }
    Ok(all)
}

fn gen(args: &GenArgs) -> anyhow::Result<()> {
    let spec = SyntheticSpec {
        n_clusters: args.clusters as usize,
        docs_per_cluster: args.per as usize,
        dim: args.dim as usize,
        intra_noise: args.noise,
        cross_confuser_rate: args.confuser_rate,
        seed: args.seed,
        centroid_cosine: args.centroid_cosine,
    };
    let corpus = generate_synthetic(&spec)?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    corpus.save_bundle(&args.out)?;
    println!("wrote {} documents to {}", corpus.len(), args.out.display());
    Ok(())
}

fn build_graph_cmd(common: &Common, out: Option<&Path>) -> anyhow::Result<()> {
    let cfg = common.resolve()?;
    let corpus = corpus_for(&cfg)?;
    let graph = build_graph(&corpus, &cfg.thresholds)?;
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => out_dir(&cfg)?.join("graph.json"),
    };
    graph.save_export(&path)?;
    let counts = graph.edge_counts();
    for rel in Relation::ALL {
        println!("{}\t{}", rel.name(), counts[rel.index()]);
    }
    Ok(())
}

fn train_cmd(common: &Common, checkpoint: Option<&Path>, log: Option<&Path>) -> anyhow::Result<()> {
    let mut cfg = common.resolve()?;
    if let Some(c) = checkpoint {
        cfg.io.checkpoint = Some(c.to_path_buf());
    }
    if let Some(l) = log {
        cfg.io.log = Some(l.to_path_buf());
    }
    let dir = out_dir(&cfg)?;
    let checkpoint = cfg.io.checkpoint.get_or_insert_with(|| dir.join("checkpoint.json")).clone();
    let log_path = cfg.io.log.clone().unwrap_or_else(|| dir.join("train_log.csv"));
    let corpus = corpus_for(&cfg)?;
    let graph = build_graph(&corpus, &cfg.thresholds)?;
    let arch = cfg.arch.resolve(corpus.dim());
    let (_, train_log) = pretrain(&corpus, &graph, &cfg.train_config(), &arch)?;
    train_log.save_csv(&log_path)?;
    match (train_log.first_loss(), train_log.last_loss()) {
        (Some(first), Some(last)) => {
            println!("epochs={} first_loss={first:.6} last_loss={last:.6}", train_log.len())
        }
        _ => println!("epochs=0"),
    }
    println!("wrote {} and {}", checkpoint.display(), log_path.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Gen(args) => gen(args),
        Command::BuildGraph { common, out } => build_graph_cmd(common, out.as_deref()),
        Command::Train { common, checkpoint, log } => train_cmd(common, checkpoint.as_deref(), log.as_deref()),
        Command::Eval { common, with_raw } => {
            let cfg = common.resolve()?;
            let corpus = corpus_for(&cfg)?;
            let mut runs = vec![run_experiment(&corpus, &cfg)?];
            if *with_raw {
                runs.push(run_raw_baseline(&corpus, &cfg)?);
            }
            write_results(&cfg, &runs)
        }
        Command::Sweep { common, param, values } => {
            let mut cfg = common.resolve()?;
            if let Some(p) = param {
                cfg.harness.sweep_param = Some(p.clone());
            }
            if !values.is_empty() {
                cfg.harness.sweep_values = values.clone();
            }
            let name = cfg.harness.sweep_param.clone().ok_or_else(|| anyhow!("--param is required"))?;
            let param: SweepParam = name.parse()?;
            if cfg.harness.sweep_values.is_empty() {
                bail!("--values is required");
            }
            let corpus = corpus_for(&cfg)?;
            let runs = per_seed(&cfg, |c| run_sensitivity_sweep(&corpus, c, param, &c.harness.sweep_values))?;
            write_results(&cfg, &runs)
        }
        Command::Ablate { common, modes } => {
            let mut cfg = common.resolve()?;
            if !modes.is_empty() {
                cfg.harness.modes = modes.clone();
            }
            let corpus = corpus_for(&cfg)?;
            let runs = per_seed(&cfg, |c| run_ablation(&corpus, c, &c.harness.modes))?;
            write_results(&cfg, &runs)
        }
        Command::LabelRate { common, rates } => {
            let mut cfg = common.resolve()?;
            if !rates.is_empty() {
                cfg.harness.label_rates = rates.clone();
            }
            let corpus = corpus_for(&cfg)?;
            let runs = per_seed(&cfg, |c| run_label_rate_sweep(&corpus, c, &c.harness.label_rates))?;
            write_results(&cfg, &runs)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let diverged = err.chain().any(|e| matches!(e.downcast_ref::<Error>(), Some(Error::Divergence { .. })));
            ExitCode::from(if diverged { EXIT_DIVERGED } else { EXIT_INPUT })
        }
    }
}
