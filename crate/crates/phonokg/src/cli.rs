//! Command-line front end: a flat `key = value` config, per-subcommand
//! flag overrides (flags win), and a file-based pipeline under one output
//! directory. Every run rewrites `config.snapshot` with the fully
//! resolved configuration, and re-running from a snapshot reproduces the
//! same artifacts byte for byte at `--threads 1`.

use crate::analysis::{
    affinity_propagation, agglomerative, information_yield, kmeans, median_preference,
    negative_sq_euclidean, pca_project, ClusterAssignment,
};
use crate::dataset::{
    dedup_first, gen_synthetic, ingest_labels, ingest_wide, write_atomic, Category, ColumnMap,
    LabelKind, LabelTable, PronunciationTable, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, RankSide};
use crate::graph::{audit_split, split as split_graph, KnowledgeGraph, Partition, SplitAssignment};
use crate::models::{ModelKind, ModelParams};
use crate::numerics::derive_seed;
use crate::probes::{
    mlp_fit, mode_baseline, probe_eval, ridge_fit, split_train_test, MlpConfig,
};
use crate::training::{load_checkpoint, save_checkpoint, train, CorruptionMode, TrainConfig};
use clap::{Args, Parser, Subcommand};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Resolved run configuration. Field defaults are the documented
/// defaults; a config file and then command-line flags override them.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub wide_path: Option<PathBuf>,
    pub labels_path: Option<PathBuf>,
    pub canonical_path: Option<PathBuf>,
    pub split_path: Option<PathBuf>,
    pub column_map: ColumnMap,
    pub ingest_dedup: bool,
    pub synth: SyntheticSpec,
    pub split_ratios: (f64, f64, f64),
    pub train: TrainConfig,
    pub model: ModelKind,
    pub eval_split: Partition,
    pub eval_filtered: bool,
    pub eval_heads: bool,
    pub kmeans_k: usize,
    pub agglomerative_k: usize,
    pub ap_damping: f64,
    pub ap_max_iter: usize,
    pub analysis_embedding: EmbeddingChoice,
    pub ridge_lambda: f64,
    pub mlp_hidden: usize,
    pub mlp_epochs: usize,
    pub mlp_learning_rate: f64,
    pub probe_train_fraction: f64,
    pub probe_embedding: EmbeddingChoice,
    pub export_svg: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingChoice {
    Bump,
    Position,
}

impl EmbeddingChoice {
    fn name(self) -> &'static str {
        match self {
            EmbeddingChoice::Bump => "bump",
            EmbeddingChoice::Position => "position",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "bump" => Ok(EmbeddingChoice::Bump),
            "position" => Ok(EmbeddingChoice::Position),
            other => Err(Error::Config(format!("unknown embedding '{other}'"))),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            threads: 0,
            out_dir: PathBuf::from("out"),
            wide_path: None,
            labels_path: None,
            canonical_path: None,
            split_path: None,
            column_map: ColumnMap::default(),
            ingest_dedup: true,
            synth: SyntheticSpec::default(),
            split_ratios: (0.80, 0.13, 0.07),
            train: TrainConfig::default(),
            model: ModelKind::BoxE,
            eval_split: Partition::Valid,
            eval_filtered: true,
            eval_heads: false,
            kmeans_k: 30,
            agglomerative_k: 10,
            ap_damping: 0.9,
            ap_max_iter: 200,
            analysis_embedding: EmbeddingChoice::Bump,
            ridge_lambda: 1.0,
            mlp_hidden: 128,
            mlp_epochs: 200,
            mlp_learning_rate: 1e-3,
            probe_train_fraction: 0.67,
            probe_embedding: EmbeddingChoice::Bump,
            export_svg: false,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean '{value}' for key '{key}'"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    if value.is_empty() {
        None
    } else {
        Some(PathBuf::from(value))
    }
}

impl RunConfig {
    /// Apply a config file of `key = value` lines; `#` starts a comment.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path).map_err(|_| {
            Error::Config(format!("config file not found: {}", path.display()))
        })?;
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}: line {}: expected key = value", path.display(), no + 1))
            })?;
            self.apply_kv(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Set one key. Unknown keys are rejected.
    pub fn apply_kv(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(rest) = key.strip_prefix("column.") {
            let (dialect, cat) = rest.rsplit_once('.').ok_or_else(|| {
                Error::Config(format!("bad column key '{key}' (column.<dialect>.<category>)"))
            })?;
            let category: Category = cat
                .parse()
                .map_err(|_| Error::Config(format!("bad category in column key '{key}'")))?;
            self.column_map.set(dialect, category, value);
            return Ok(());
        }
        match key {
            "seed" => self.seed = parse_num(key, value)?,
            "threads" => self.threads = parse_num(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "wide_path" => self.wide_path = opt_path(value),
            "labels_path" => self.labels_path = opt_path(value),
            "canonical_path" => self.canonical_path = opt_path(value),
            "split_path" => self.split_path = opt_path(value),
            "ingest.dedup" => self.ingest_dedup = parse_bool(key, value)?,
            "synth.chars" => self.synth.n_chars = parse_num(key, value)?,
            "synth.dialects" => self.synth.n_dialects = parse_num(key, value)?,
            "synth.initials" => self.synth.n_initials = parse_num(key, value)?,
            "synth.finals" => self.synth.n_finals = parse_num(key, value)?,
            "synth.tones" => self.synth.n_tones = parse_num(key, value)?,
            "synth.merger_rate" => self.synth.merger_rate = parse_num(key, value)?,
            "synth.missing_rate" => self.synth.missing_rate = parse_num(key, value)?,
            "split.train" => self.split_ratios.0 = parse_num(key, value)?,
            "split.valid" => self.split_ratios.1 = parse_num(key, value)?,
            "split.test" => self.split_ratios.2 = parse_num(key, value)?,
            "train.model" => self.model = ModelKind::parse(value)?,
            "train.dim" => self.train.dim = parse_num(key, value)?,
            "train.epochs" => self.train.epochs = parse_num(key, value)?,
            "train.batch_size" => self.train.batch_size = parse_num(key, value)?,
            "train.negatives" => self.train.negatives = parse_num(key, value)?,
            "train.margin" => self.train.margin = parse_num(key, value)?,
            "train.adversarial_temperature" => {
                self.train.adversarial_temperature = parse_num(key, value)?
            }
            "train.learning_rate" => self.train.learning_rate = parse_num(key, value)?,
            "train.corruption" => self.train.corruption = CorruptionMode::parse(value)?,
            "eval.split" => {
                self.eval_split = match value {
                    "train" => Partition::Train,
                    "valid" => Partition::Valid,
                    "test" => Partition::Test,
                    _ => return Err(Error::Config(format!("bad eval.split '{value}'"))),
                }
            }
            "eval.filtered" => self.eval_filtered = parse_bool(key, value)?,
            "eval.heads" => self.eval_heads = parse_bool(key, value)?,
            "analysis.kmeans_k" => self.kmeans_k = parse_num(key, value)?,
            "analysis.agglomerative_k" => self.agglomerative_k = parse_num(key, value)?,
            "analysis.ap_damping" => self.ap_damping = parse_num(key, value)?,
            "analysis.ap_max_iter" => self.ap_max_iter = parse_num(key, value)?,
            "analysis.embedding" => self.analysis_embedding = EmbeddingChoice::parse(value)?,
            "probe.ridge_lambda" => self.ridge_lambda = parse_num(key, value)?,
            "probe.mlp_hidden" => self.mlp_hidden = parse_num(key, value)?,
            "probe.mlp_epochs" => self.mlp_epochs = parse_num(key, value)?,
            "probe.mlp_learning_rate" => self.mlp_learning_rate = parse_num(key, value)?,
            "probe.train_fraction" => self.probe_train_fraction = parse_num(key, value)?,
            "probe.embedding" => self.probe_embedding = EmbeddingChoice::parse(value)?,
            "export.svg" => self.export_svg = parse_bool(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// The fully resolved configuration as sorted key = value pairs.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let path_str = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        m.insert("seed".into(), self.seed.to_string());
        m.insert("threads".into(), self.threads.to_string());
        m.insert("out_dir".into(), self.out_dir.display().to_string());
        m.insert("wide_path".into(), path_str(&self.wide_path));
        m.insert("labels_path".into(), path_str(&self.labels_path));
        m.insert("canonical_path".into(), path_str(&self.canonical_path));
        m.insert("split_path".into(), path_str(&self.split_path));
        m.insert("ingest.dedup".into(), self.ingest_dedup.to_string());
        for (dialect, cols) in &self.column_map.dialects {
            for cat in Category::ALL {
                if let Some(col) = &cols[cat.index()] {
                    m.insert(format!("column.{dialect}.{cat}"), col.clone());
                }
            }
        }
        m.insert("synth.chars".into(), self.synth.n_chars.to_string());
        m.insert("synth.dialects".into(), self.synth.n_dialects.to_string());
        m.insert("synth.initials".into(), self.synth.n_initials.to_string());
        m.insert("synth.finals".into(), self.synth.n_finals.to_string());
        m.insert("synth.tones".into(), self.synth.n_tones.to_string());
        m.insert("synth.merger_rate".into(), self.synth.merger_rate.to_string());
        m.insert("synth.missing_rate".into(), self.synth.missing_rate.to_string());
        m.insert("split.train".into(), self.split_ratios.0.to_string());
        m.insert("split.valid".into(), self.split_ratios.1.to_string());
        m.insert("split.test".into(), self.split_ratios.2.to_string());
        m.insert("train.model".into(), self.model.name().into());
        m.insert("train.dim".into(), self.train.dim.to_string());
        m.insert("train.epochs".into(), self.train.epochs.to_string());
        m.insert("train.batch_size".into(), self.train.batch_size.to_string());
        m.insert("train.negatives".into(), self.train.negatives.to_string());
        m.insert("train.margin".into(), self.train.margin.to_string());
        m.insert(
            "train.adversarial_temperature".into(),
            self.train.adversarial_temperature.to_string(),
        );
        m.insert(
            "train.learning_rate".into(),
            self.train.learning_rate.to_string(),
        );
        m.insert("train.corruption".into(), self.train.corruption.name().into());
        m.insert("eval.split".into(), self.eval_split.name().into());
        m.insert("eval.filtered".into(), self.eval_filtered.to_string());
        m.insert("eval.heads".into(), self.eval_heads.to_string());
        m.insert("analysis.kmeans_k".into(), self.kmeans_k.to_string());
        m.insert(
            "analysis.agglomerative_k".into(),
            self.agglomerative_k.to_string(),
        );
        m.insert("analysis.ap_damping".into(), self.ap_damping.to_string());
        m.insert("analysis.ap_max_iter".into(), self.ap_max_iter.to_string());
        m.insert(
            "analysis.embedding".into(),
            self.analysis_embedding.name().into(),
        );
        m.insert("probe.ridge_lambda".into(), self.ridge_lambda.to_string());
        m.insert("probe.mlp_hidden".into(), self.mlp_hidden.to_string());
        m.insert("probe.mlp_epochs".into(), self.mlp_epochs.to_string());
        m.insert(
            "probe.mlp_learning_rate".into(),
            self.mlp_learning_rate.to_string(),
        );
        m.insert(
            "probe.train_fraction".into(),
            self.probe_train_fraction.to_string(),
        );
        m.insert("probe.embedding".into(), self.probe_embedding.name().into());
        m.insert("export.svg".into(), self.export_svg.to_string());
        m
    }

    fn canonical_path(&self) -> PathBuf {
        self.canonical_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("canonical.tsv"))
    }

    fn split_path(&self) -> PathBuf {
        self.split_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("split.tsv"))
    }

    fn labels_path(&self) -> PathBuf {
        self.labels_path
            .clone()
            .unwrap_or_else(|| self.out_dir.join("labels.tsv"))
    }

    fn require_file(&self, path: &Path, hint: &str) -> Result<()> {
        if !path.is_file() {
            return Err(Error::Config(format!(
                "missing input {}: {hint}",
                path.display()
            )));
        }
        Ok(())
    }

    fn write_snapshot(&self) -> Result<()> {
        let mut text = String::new();
        for (k, v) in self.snapshot() {
            text.push_str(&format!("{k} = {v}\n"));
        }
        write_atomic(&self.out_dir.join("config.snapshot"), text.as_bytes())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "phonokg",
    version,
    about = "Multi-dialect phonology knowledge graphs: embeddings, link prediction, clustering and probes"
)]
struct Cli {
    /// Plain-text config file (`key = value`, # comments). Flags override.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory receiving all artifacts of the run.
    #[arg(short, long, global = true)]
    out_dir: Option<PathBuf>,
    /// Master seed; each stage derives its own stream from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker-thread cap; 1 gives the canonical deterministic trace.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct TrainArgs {
    /// Model family: boxe, rotate or complex.
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Negatives per positive.
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    /// Self-adversarial softmax temperature.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Corruption mode: tail or both.
    #[arg(long)]
    corruption: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert a wide survey TSV to the canonical long format.
    Ingest {
        /// Wide input TSV (header row, first column char_id).
        #[arg(long)]
        wide: Option<PathBuf>,
        /// Keep duplicate readings instead of dropping all but the first.
        #[arg(long)]
        keep_duplicates: bool,
    },
    /// Generate a synthetic corpus with known proto-language labels.
    Synth {
        #[arg(long)]
        chars: Option<usize>,
        #[arg(long)]
        dialects: Option<usize>,
        #[arg(long)]
        initials: Option<usize>,
        #[arg(long)]
        finals: Option<usize>,
        #[arg(long)]
        tones: Option<usize>,
        #[arg(long)]
        merger_rate: Option<f64>,
        #[arg(long)]
        missing_rate: Option<f64>,
    },
    /// Build the knowledge graph and export its triples.
    BuildGraph,
    /// Partition triples into train/valid/test under the coverage constraint.
    Split {
        #[arg(long)]
        train: Option<f64>,
        #[arg(long)]
        valid: Option<f64>,
        #[arg(long)]
        test: Option<f64>,
    },
    /// Train embeddings and write a checkpoint.
    Train {
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Filtered tail-ranking metrics on a held-out partition.
    Eval {
        /// Partition to evaluate: train, valid or test.
        #[arg(long)]
        split: Option<String>,
        /// Rank against the raw candidate pool instead of filtering known
        /// true tails.
        #[arg(long)]
        unfiltered: bool,
        /// Also report head-side ranks (diagnostics).
        #[arg(long)]
        heads: bool,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Cluster character embeddings and score information yield.
    Cluster {
        #[arg(long)]
        kmeans_k: Option<usize>,
        #[arg(long)]
        agglomerative_k: Option<usize>,
        #[arg(long)]
        damping: Option<f64>,
        #[arg(long)]
        ap_max_iter: Option<usize>,
        /// Which embedding to analyze: bump or position.
        #[arg(long)]
        embedding: Option<String>,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Ridge/MLP probes for proto-language labels.
    Probe {
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        ridge_lambda: Option<f64>,
        #[arg(long)]
        mlp_hidden: Option<usize>,
        #[arg(long)]
        mlp_epochs: Option<usize>,
        #[arg(long)]
        train_fraction: Option<f64>,
        /// Which embedding to probe: bump or position.
        #[arg(long)]
        embedding: Option<String>,
        #[command(flatten)]
        args: TrainArgs,
    },
    /// PCA scatter export of the embedded entities.
    Export {
        /// Also write a self-contained SVG scatter plot.
        #[arg(long)]
        svg: bool,
        /// Which embedding to project: bump or position.
        #[arg(long)]
        embedding: Option<String>,
        #[command(flatten)]
        args: TrainArgs,
    },
}

/// Parse arguments and run; returns the process exit code.
pub fn dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

fn apply_train_args(cfg: &mut RunConfig, args: &TrainArgs) -> Result<()> {
    if let Some(v) = &args.model {
        cfg.apply_kv("train.model", v)?;
    }
    if let Some(v) = args.dim {
        cfg.apply_kv("train.dim", &v.to_string())?;
    }
    if let Some(v) = args.epochs {
        cfg.apply_kv("train.epochs", &v.to_string())?;
    }
    if let Some(v) = args.batch_size {
        cfg.apply_kv("train.batch_size", &v.to_string())?;
    }
    if let Some(v) = args.negatives {
        cfg.apply_kv("train.negatives", &v.to_string())?;
    }
    if let Some(v) = args.margin {
        cfg.apply_kv("train.margin", &v.to_string())?;
    }
    if let Some(v) = args.alpha {
        cfg.apply_kv("train.adversarial_temperature", &v.to_string())?;
    }
    if let Some(v) = args.learning_rate {
        cfg.apply_kv("train.learning_rate", &v.to_string())?;
    }
    if let Some(v) = &args.corruption {
        cfg.apply_kv("train.corruption", v)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if cfg.threads >= 1 {
        // Only the first global-pool build wins; later calls in the same
        // process are no-ops, which is fine for repeated dispatch in tests.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global();
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;

    match &cli.command {
        Command::Ingest {
            wide,
            keep_duplicates,
        } => {
            if let Some(p) = wide {
                cfg.wide_path = Some(p.clone());
            }
            if *keep_duplicates {
                cfg.ingest_dedup = false;
            }
            run_ingest(&cfg)
        }
        Command::Synth {
            chars,
            dialects,
            initials,
            finals,
            tones,
            merger_rate,
            missing_rate,
        } => {
            if let Some(v) = chars {
                cfg.synth.n_chars = *v;
            }
            if let Some(v) = dialects {
                cfg.synth.n_dialects = *v;
            }
            if let Some(v) = initials {
                cfg.synth.n_initials = *v;
            }
            if let Some(v) = finals {
                cfg.synth.n_finals = *v;
            }
            if let Some(v) = tones {
                cfg.synth.n_tones = *v;
            }
            if let Some(v) = merger_rate {
                cfg.synth.merger_rate = *v;
            }
            if let Some(v) = missing_rate {
                cfg.synth.missing_rate = *v;
            }
            run_synth(&cfg)
        }
        Command::BuildGraph => run_build_graph(&cfg),
        Command::Split { train, valid, test } => {
            if let Some(v) = train {
                cfg.split_ratios.0 = *v;
            }
            if let Some(v) = valid {
                cfg.split_ratios.1 = *v;
            }
            if let Some(v) = test {
                cfg.split_ratios.2 = *v;
            }
            run_split(&cfg)
        }
        Command::Train { args } => {
            apply_train_args(&mut cfg, args)?;
            run_train(&cfg)
        }
        Command::Eval {
            split,
            unfiltered,
            heads,
            args,
        } => {
            apply_train_args(&mut cfg, args)?;
            if let Some(v) = split {
                cfg.apply_kv("eval.split", v)?;
            }
            if *unfiltered {
                cfg.eval_filtered = false;
            }
            if *heads {
                cfg.eval_heads = true;
            }
            run_eval(&cfg)
        }
        Command::Cluster {
            kmeans_k,
            agglomerative_k,
            damping,
            ap_max_iter,
            embedding,
            args,
        } => {
            apply_train_args(&mut cfg, args)?;
            if let Some(v) = kmeans_k {
                cfg.kmeans_k = *v;
            }
            if let Some(v) = agglomerative_k {
                cfg.agglomerative_k = *v;
            }
            if let Some(v) = damping {
                cfg.ap_damping = *v;
            }
            if let Some(v) = ap_max_iter {
                cfg.ap_max_iter = *v;
            }
            if let Some(v) = embedding {
                cfg.analysis_embedding = EmbeddingChoice::parse(v)?;
            }
            run_cluster(&cfg)
        }
        Command::Probe {
            labels,
            ridge_lambda,
            mlp_hidden,
            mlp_epochs,
            train_fraction,
            embedding,
            args,
        } => {
            apply_train_args(&mut cfg, args)?;
            if let Some(p) = labels {
                cfg.labels_path = Some(p.clone());
            }
            if let Some(v) = ridge_lambda {
                cfg.ridge_lambda = *v;
            }
            if let Some(v) = mlp_hidden {
                cfg.mlp_hidden = *v;
            }
            if let Some(v) = mlp_epochs {
                cfg.mlp_epochs = *v;
            }
            if let Some(v) = train_fraction {
                cfg.probe_train_fraction = *v;
            }
            if let Some(v) = embedding {
                cfg.probe_embedding = EmbeddingChoice::parse(v)?;
            }
            run_probe(&cfg)
        }
        Command::Export {
            svg,
            embedding,
            args,
        } => {
            apply_train_args(&mut cfg, args)?;
            if *svg {
                cfg.export_svg = true;
            }
            if let Some(v) = embedding {
                cfg.analysis_embedding = EmbeddingChoice::parse(v)?;
            }
            run_export(&cfg)
        }
    }
}

fn load_table(cfg: &RunConfig) -> Result<PronunciationTable> {
    let path = cfg.canonical_path();
    cfg.require_file(&path, "run `ingest` or `synth` first")?;
    PronunciationTable::read_canonical(&path)
}

fn load_split(cfg: &RunConfig) -> Result<SplitAssignment> {
    let path = cfg.split_path();
    cfg.require_file(&path, "run `split` first")?;
    SplitAssignment::read_tsv(&path)
}

fn load_model(cfg: &RunConfig, kg: &KnowledgeGraph) -> Result<ModelParams> {
    let params_path = cfg.out_dir.join("params.tsv");
    cfg.require_file(&params_path, "run `train` first")?;
    load_checkpoint(&cfg.out_dir, kg, cfg.model, cfg.train.dim)
}

fn run_ingest(cfg: &RunConfig) -> Result<()> {
    let wide = cfg
        .wide_path
        .clone()
        .ok_or_else(|| Error::Config("ingest: no wide_path configured".into()))?;
    cfg.require_file(&wide, "wide input table")?;
    if cfg.column_map.is_empty() {
        return Err(Error::Config(
            "ingest: no column map configured (column.<dialect>.<category> keys)".into(),
        ));
    }
    let mut table = ingest_wide(&wide, &cfg.column_map)?;
    if cfg.ingest_dedup {
        table = dedup_first(&table);
    }
    table.write_canonical(&cfg.canonical_path())?;
    cfg.write_snapshot()?;
    println!(
        "ingest: {} records, {} characters, {} dialects -> {}",
        table.records.len(),
        table.chars.len(),
        table.dialects.len(),
        cfg.canonical_path().display()
    );
    Ok(())
}

fn run_synth(cfg: &RunConfig) -> Result<()> {
    let mut spec = cfg.synth.clone();
    spec.seed = derive_seed(cfg.seed, "synth");
    let (table, labels) = gen_synthetic(&spec)?;
    table.write_canonical(&cfg.canonical_path())?;
    labels.write_tsv(&cfg.labels_path())?;
    cfg.write_snapshot()?;
    println!(
        "synth: {} records over {} characters -> {}",
        table.records.len(),
        table.chars.len(),
        cfg.canonical_path().display()
    );
    Ok(())
}

fn run_build_graph(cfg: &RunConfig) -> Result<()> {
    let table = load_table(cfg)?;
    let kg = KnowledgeGraph::build(&table);
    kg.check_bipartite()?;
    kg.write_triples(&cfg.out_dir.join("triples.tsv"))?;
    cfg.write_snapshot()?;
    let s = kg.stats();
    println!(
        "graph: {} entities ({} characters, {}+{}+{} components), {} relation types, {} triples",
        s.n_entities, s.n_characters, s.n_initials, s.n_finals, s.n_tones, s.n_relations, s.n_triples
    );
    Ok(())
}

fn run_split(cfg: &RunConfig) -> Result<()> {
    let table = load_table(cfg)?;
    let kg = KnowledgeGraph::build(&table);
    let assignment = split_graph(&kg, cfg.split_ratios, derive_seed(cfg.seed, "split"))?;
    audit_split(&kg, &assignment)?;
    assignment.write_tsv(&cfg.split_path())?;
    cfg.write_snapshot()?;
    let (t, v, e) = assignment.achieved;
    println!(
        "split: {:.2}% train, {:.2}% valid, {:.2}% test over {} triples",
        t * 100.0,
        v * 100.0,
        e * 100.0,
        assignment.len()
    );
    Ok(())
}

fn run_train(cfg: &RunConfig) -> Result<()> {
    let table = load_table(cfg)?;
    let kg = KnowledgeGraph::build(&table);
    // A missing split is computed on the spot, so `synth; train; eval`
    // composes without an explicit `split` stage.
    let assignment = if cfg.split_path().is_file() {
        load_split(cfg)?
    } else {
        let assignment = split_graph(&kg, cfg.split_ratios, derive_seed(cfg.seed, "split"))?;
        audit_split(&kg, &assignment)?;
        assignment.write_tsv(&cfg.split_path())?;
        assignment
    };
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = cfg.seed;
    let model = train(&kg, &assignment, &train_cfg, cfg.model)?;
    save_checkpoint(&cfg.out_dir, &model, &kg, &cfg.snapshot())?;
    cfg.write_snapshot()?;
    println!(
        "train: {} epochs of {} on {} triples, final loss {:.6}",
        train_cfg.epochs,
        cfg.model.name(),
        assignment.train.len(),
        model.loss_trace.last().unwrap()
    );
    Ok(())
}

fn run_eval(cfg: &RunConfig) -> Result<()> {
    let table = load_table(cfg)?;
    let kg = KnowledgeGraph::build(&table);
    let assignment = load_split(cfg)?;
    let model = load_model(cfg, &kg)?;
    let triples: Vec<_> = assignment
        .part(cfg.eval_split)
        .iter()
        .map(|&i| kg.triples[i])
        .collect();
    let report = evaluate(&model, &triples, &kg, cfg.eval_filtered, RankSide::Tail)?;
    write_atomic(
        &cfg.out_dir.join("metrics.json"),
        report.to_json().as_bytes(),
    )?;
    if cfg.eval_heads {
        let head_report = evaluate(&model, &triples, &kg, cfg.eval_filtered, RankSide::Head)?;
        write_atomic(
            &cfg.out_dir.join("metrics_heads.json"),
            head_report.to_json().as_bytes(),
        )?;
    }
    cfg.write_snapshot()?;
    println!(
        "eval[{}, {}]: hits@1 {:.4}, hits@5 {:.4}, hits@10 {:.4}, mrr {:.4} over {} triples",
        cfg.eval_split.name(),
        if cfg.eval_filtered { "filtered" } else { "raw" },
        report.hits_at_1,
        report.hits_at_5,
        report.hits_at_10,
        report.mrr,
        report.n
    );
    Ok(())
}

/// Character ids (in registry order) and their chosen embedding vectors.
fn character_embeddings(
    kg: &KnowledgeGraph,
    model: &ModelParams,
    choice: EmbeddingChoice,
) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut ids = Vec::new();
    let mut vecs = Vec::new();
    for e in &kg.entities {
        if let crate::graph::EntityKind::Character { char_id } = &e.kind {
            ids.push(char_id.clone());
            let v = match choice {
                EmbeddingChoice::Bump => model.bump_vector(e.id),
                EmbeddingChoice::Position => model.entity_vector(e.id),
            };
            vecs.push(v.to_vec());
        }
    }
    (ids, vecs)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

fn run_cluster(cfg: &RunConfig) -> Result<()> {
    let table = load_table(cfg)?;
    let kg = KnowledgeGraph::build(&table);
    let model = load_model(cfg, &kg)?;
    let (char_ids, points) = character_embeddings(&kg, &model, cfg.analysis_embedding);
    if points.is_empty() {
        return Err(Error::Invalid("cluster: no characters in graph".into()));
    }

    let mut assignments: Vec<ClusterAssignment> = Vec::new();
    let (km, _) = kmeans(&points, cfg.kmeans_k.min(points.len()), derive_seed(cfg.seed, "kmeans"))?;
    assignments.push(km);
    assignments.push(agglomerative(&points, cfg.agglomerative_k.min(points.len()))?);
    let mut sim = negative_sq_euclidean(&points);
    let pref = median_preference(&sim);
    for (i, row) in sim.iter_mut().enumerate() {
        row[i] = pref;
    }
    let ap = affinity_propagation(&sim, cfg.ap_damping, cfg.ap_max_iter)?;
    if !ap.converged {
        eprintln!("warning: affinity propagation did not converge; using current assignment");
    }
    assignments.push(ap.assignment);

    // Surface value of each character per (dialect, category).
    let mut value_of: std::collections::HashMap<(String, Category, String), String> =
        std::collections::HashMap::new();
    for r in &table.records {
        value_of.insert(
            (r.dialect.clone(), r.category, r.char_id.clone()),
            r.value.clone(),
        );
    }

    let mut out = String::from("dialect,category,method,params,n_clusters,H_bits,MI_bits,yield_percent\n");
    for dialect in &table.dialects {
        for category in Category::ALL {
            for asg in &assignments {
                let mut clusters = Vec::new();
                let mut labels: Vec<&str> = Vec::new();
                for (i, cid) in char_ids.iter().enumerate() {
                    if let Some(v) = value_of.get(&(dialect.clone(), category, cid.clone())) {
                        clusters.push(asg.labels[i]);
                        labels.push(v);
                    }
                }
                if clusters.is_empty() {
                    continue;
                }
                let y = information_yield(&clusters, &labels)?;
                out.push_str(&format!(
                    "{dialect},{category},{},{},{},{:.4},{:.4},{}\n",
                    asg.method,
                    asg.params,
                    asg.n_clusters,
                    y.h_bits,
                    y.mi_bits,
                    fmt_opt(y.yield_percent)
                ));
            }
        }
    }
    write_atomic(&cfg.out_dir.join("yield.csv"), out.as_bytes())?;
    cfg.write_snapshot()?;
    println!(
        "cluster: {} methods x {} dialects x 3 categories -> {}",
        assignments.len(),
        table.dialects.len(),
        cfg.out_dir.join("yield.csv").display()
    );
    Ok(())
}

fn run_probe(cfg: &RunConfig) -> Result<()> {
    let table = load_table(cfg)?;
    let kg = KnowledgeGraph::build(&table);
    let model = load_model(cfg, &kg)?;
    let labels_path = cfg.labels_path();
    cfg.require_file(&labels_path, "label table for probing")?;
    let labels = ingest_labels(&labels_path)?;
    let (char_ids, points) = character_embeddings(&kg, &model, cfg.probe_embedding);

    let mut rows = String::from("task,method,accuracy,n_train,n_test\n");
    for kind in LabelKind::ALL {
        let outcome = probe_task(cfg, kind, &labels, &char_ids, &points)?;
        let Some(outcome) = outcome else {
            eprintln!("warning: task {} skipped (not enough labeled data)", kind.name());
            continue;
        };
        for (method, accuracy) in [
            ("ridge", outcome.ridge_accuracy),
            ("mlp", outcome.mlp_accuracy),
            ("baseline", outcome.baseline_accuracy),
        ] {
            rows.push_str(&format!(
                "{},{method},{accuracy:.4},{},{}\n",
                kind.name(),
                outcome.n_train,
                outcome.n_test
            ));
        }
        let mut cm = String::from("gold");
        for name in &outcome.classes {
            cm.push(',');
            cm.push_str(name);
        }
        cm.push('\n');
        for (g, row) in outcome.confusion.iter().enumerate() {
            cm.push_str(&outcome.classes[g]);
            for count in row {
                cm.push_str(&format!(",{count}"));
            }
            cm.push('\n');
        }
        write_atomic(
            &cfg.out_dir.join(format!("confusion_{}.csv", kind.name())),
            cm.as_bytes(),
        )?;
    }
    write_atomic(&cfg.out_dir.join("probes.csv"), rows.as_bytes())?;
    cfg.write_snapshot()?;
    println!("probe: report -> {}", cfg.out_dir.join("probes.csv").display());
    Ok(())
}

pub(crate) struct ProbeOutcome {
    pub ridge_accuracy: f64,
    pub mlp_accuracy: f64,
    pub baseline_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub classes: Vec<String>,
    /// MLP confusion matrix, gold rows.
    pub confusion: Vec<Vec<usize>>,
}

/// Fit all three probes for one label task. Characters without a label
/// for the task are dropped from it; returns None when there is not
/// enough data left to form a train and a test set.
pub(crate) fn probe_task(
    cfg: &RunConfig,
    kind: LabelKind,
    labels: &LabelTable,
    char_ids: &[String],
    points: &[Vec<f64>],
) -> Result<Option<ProbeOutcome>> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut classes: Vec<String> = Vec::new();
    let mut class_ids: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    for (cid, point) in char_ids.iter().zip(points) {
        if let Some(value) = labels.get(cid, kind) {
            let next = class_ids.len();
            let id = *class_ids.entry(value.to_string()).or_insert(next);
            if id == classes.len() {
                classes.push(value.to_string());
            }
            x.push(point.clone());
            y.push(id);
        }
    }
    let n = x.len();
    if n < 3 {
        return Ok(None);
    }
    let (train_idx, test_idx) = split_train_test(
        n,
        cfg.probe_train_fraction,
        derive_seed(cfg.seed, &format!("probe:{}", kind.name())),
    );
    if train_idx.is_empty() || test_idx.is_empty() {
        return Ok(None);
    }
    let take = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<usize>) {
        (
            idx.iter().map(|&i| x[i].clone()).collect(),
            idx.iter().map(|&i| y[i]).collect(),
        )
    };
    let (x_train, y_train) = take(&train_idx);
    let (x_test, y_test) = take(&test_idx);
    let k = classes.len();

    let ridge = ridge_fit(&x_train, &y_train, k, cfg.ridge_lambda)?;
    let ridge_pred: Vec<usize> = x_test.iter().map(|r| ridge.predict(r)).collect();
    let ridge_eval = probe_eval(&ridge_pred, &y_test, k)?;

    let mlp_cfg = MlpConfig {
        hidden: cfg.mlp_hidden,
        epochs: cfg.mlp_epochs,
        learning_rate: cfg.mlp_learning_rate,
        seed: derive_seed(cfg.seed, &format!("mlp:{}", kind.name())),
    };
    let (mlp, _) = mlp_fit(&x_train, &y_train, k, &mlp_cfg)?;
    let mlp_pred: Vec<usize> = x_test.iter().map(|r| mlp.predict(r)).collect();
    let mlp_eval = probe_eval(&mlp_pred, &y_test, k)?;

    let baseline_accuracy = mode_baseline(&y_train, &y_test);
    Ok(Some(ProbeOutcome {
        ridge_accuracy: ridge_eval.accuracy,
        mlp_accuracy: mlp_eval.accuracy,
        baseline_accuracy,
        n_train: train_idx.len(),
        n_test: test_idx.len(),
        classes,
        confusion: mlp_eval.confusion,
    }))
}

fn run_export(cfg: &RunConfig) -> Result<()> {
    let table = load_table(cfg)?;
    let kg = KnowledgeGraph::build(&table);
    let model = load_model(cfg, &kg)?;
    let points: Vec<Vec<f64>> = kg
        .entities
        .iter()
        .map(|e| match cfg.analysis_embedding {
            EmbeddingChoice::Bump => model.bump_vector(e.id).to_vec(),
            EmbeddingChoice::Position => model.entity_vector(e.id).to_vec(),
        })
        .collect();
    let pca = pca_project(&points, 2.min(model.dim()))?;
    let mut out = String::from("entity_label,kind,x,y\n");
    for (e, coords) in kg.entities.iter().zip(&pca.coords) {
        let kind = if e.is_character() { "character" } else { "component" };
        let y = coords.get(1).copied().unwrap_or(0.0);
        out.push_str(&format!("{},{kind},{},{}\n", e.label(), coords[0], y));
    }
    write_atomic(&cfg.out_dir.join("scatter.csv"), out.as_bytes())?;
    if cfg.export_svg {
        let svg = scatter_svg(&kg, &pca.coords);
        write_atomic(&cfg.out_dir.join("scatter.svg"), svg.as_bytes())?;
    }
    cfg.write_snapshot()?;
    println!(
        "export: {} entities projected (PC1 {:.1}% / PC2 {:.1}% of variance) -> {}",
        kg.entities.len(),
        pca.explained_ratio.first().copied().unwrap_or(0.0) * 100.0,
        pca.explained_ratio.get(1).copied().unwrap_or(0.0) * 100.0,
        cfg.out_dir.join("scatter.csv").display()
    );
    Ok(())
}

fn scatter_svg(kg: &KnowledgeGraph, coords: &[Vec<f64>]) -> String {
    let (w, h, pad) = (800.0, 600.0, 30.0);
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for c in coords {
        let y = c.get(1).copied().unwrap_or(0.0);
        min_x = min_x.min(c[0]);
        max_x = max_x.max(c[0]);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (sx, sy) = (span(min_x, max_x), span(min_y, max_y));
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    for (e, c) in kg.entities.iter().zip(coords) {
        let y = c.get(1).copied().unwrap_or(0.0);
        let px = pad + (c[0] - min_x) / sx * (w - 2.0 * pad);
        let py = h - pad - (y - min_y) / sy * (h - 2.0 * pad);
        let (color, r) = if e.is_character() {
            ("#4477aa", 2.0)
        } else {
            ("#ee6677", 3.5)
        };
        svg.push_str(&format!(
            "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"{r}\" fill=\"{color}\" fill-opacity=\"0.6\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn config_round_trips_through_its_snapshot() {
        let mut cfg = RunConfig::default();
        cfg.apply_kv("seed", "7").unwrap();
        cfg.apply_kv("train.model", "rotate").unwrap();
        cfg.apply_kv("train.dim", "32").unwrap();
        cfg.apply_kv("column.Changsha.initial", "cs_i").unwrap();
        cfg.apply_kv("synth.merger_rate", "0.3").unwrap();

        let mut text = String::new();
        for (k, v) in cfg.snapshot() {
            text.push_str(&format!("{k} = {v}\n"));
        }
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        let mut back = RunConfig::default();
        back.apply_file(f.path()).unwrap();
        assert_eq!(back.snapshot(), cfg.snapshot());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_kv("no.such.key", "1").unwrap_err();
        assert!(err.is_usage());
        assert!(err.to_string().contains("no.such.key"));
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(b"# a comment\n\nseed = 9 # trailing\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.apply_file(f.path()).unwrap();
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn missing_config_file_is_a_usage_error_naming_the_path() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_file(Path::new("missing.cfg")).unwrap_err();
        assert!(err.is_usage());
        assert!(err.to_string().contains("missing.cfg"));
    }

    #[test]
    fn help_exits_zero_and_bad_flags_exit_two() {
        assert_eq!(dispatch(["phonokg", "eval", "--help"]), 0);
        assert_eq!(dispatch(["phonokg", "--no-such-flag"]), 2);
        assert_eq!(dispatch(["phonokg", "nonsense-command"]), 2);
    }

    #[test]
    fn train_with_missing_config_exits_two() {
        assert_eq!(
            dispatch(["phonokg", "train", "--config", "missing.cfg"]),
            2
        );
    }
}
