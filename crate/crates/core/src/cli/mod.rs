//! Command-line entry point: data generation, graph construction, training,
//! evaluation, ablation sweeps and similarity export.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde_json::Value;

pub use commands::{
    ablation_csv, cmd_ablate, cmd_adjacency, cmd_eval, cmd_gen_data, cmd_similarity, cmd_train, load_or_sample,
    median, run_ablation, run_dir, write_json, AblationRow, AdjacencyRequest, EvalReport, TRAIN_CSV, VAL_CSV,
};
pub use config::{keys_help, parse_assignment, AblateConfig, RunConfig};

use crate::adjacency::{GraphVariant, IntraSymmetrize};
use crate::error::{Error, Result};
use crate::heads::WeightMode;
use crate::trainer::Variant;

#[derive(Debug, Parser)]
#[command(name = "emotion-gcn", version, about = "Graph-generated expression classifiers and valence-arousal regressors")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the synthetic train/val splits into CSV files.
    GenData(CommonArgs),
    /// Build the affect graph from an annotation CSV.
    Adjacency(AdjacencyArgs),
    /// Train one variant and write its report, model and matrices.
    Train(TrainArgs),
    /// Evaluate a saved model on the val split.
    Eval(EvalArgs),
    /// Train every requested variant, depth, threshold and seed.
    Ablate(AblateArgs),
    /// Cosine similarity of a saved model's head vectors.
    Similarity(SimilarityArgs),
}

#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Flat dotted-key JSON config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed (data seed for gen-data, training seed otherwise).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override any config key, e.g. --set train.lr=0.01 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args, Default)]
pub struct ModelArgs {
    /// single_task_cls, single_task_reg, multitask_mse, multitask_ccc, emotion_gcn or intra_gcn.
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Graph threshold (train.tau).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Neighbour share of the re-weighting (train.p).
    #[arg(long)]
    pub p: Option<f64>,
    /// as_written or inverse_frequency.
    #[arg(long = "weight-mode")]
    pub weight_mode: Option<WeightMode>,
}

#[derive(Debug, Args)]
pub struct AdjacencyArgs {
    /// CSV with expression,valence,arousal columns.
    #[arg(long)]
    pub annotations: PathBuf,
    /// 0/1 multi-label CSV, required for with_intra.
    #[arg(long)]
    pub multilabel: Option<PathBuf>,
    /// Threshold [default: 0.1].
    #[arg(long)]
    pub tau: Option<f64>,
    /// Neighbour share [default: 0.7 cross_only, 0.5 with_intra].
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long, default_value = "cross_only", value_parser = parse_graph_variant)]
    pub graph: GraphVariant,
    #[arg(long, default_value = "max", value_parser = parse_symmetrize)]
    pub symmetrize: IntraSymmetrize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Directory with train.csv and val.csv; sampled from the config otherwise.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub variants: Vec<Variant>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub taus: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct SimilarityArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Output file; `.json` selects JSON, anything else CSV.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_graph_variant(s: &str) -> Result<GraphVariant> {
    match s {
        "cross_only" => Ok(GraphVariant::CrossOnly),
        "with_intra" => Ok(GraphVariant::WithIntra),
        _ => Err(Error::Usage(format!("unknown graph '{s}' (expected cross_only or with_intra)"))),
    }
}

fn parse_symmetrize(s: &str) -> Result<IntraSymmetrize> {
    match s {
        "max" => Ok(IntraSymmetrize::Max),
        "per_direction" => Ok(IntraSymmetrize::PerDirection),
        _ => Err(Error::Usage(format!("unknown symmetrize '{s}' (expected max or per_direction)"))),
    }
}

/// Prints a line, ignoring a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn json<T: serde::Serialize>(v: T) -> Value {
    serde_json::to_value(v).expect("flag values serialize")
}

/// Config file, then `--set`, then dedicated flags.
fn resolve(common: &CommonArgs, flags: Vec<(&str, Value)>) -> Result<RunConfig> {
    let base = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut pairs = common
        .set
        .iter()
        .map(|s| parse_assignment(s))
        .collect::<Result<Vec<_>>>()?;
    pairs.extend(flags.into_iter().map(|(k, v)| (k.to_string(), v)));
    if let Some(out) = &common.out {
        pairs.push(("out_dir".into(), json(out)));
    }
    base.with_overrides(pairs)
}

fn model_flags(m: &ModelArgs, seed: Option<u64>) -> Vec<(&'static str, Value)> {
    let mut f = Vec::new();
    if let Some(v) = m.variant {
        f.push(("train.variant", json(v)));
    }
    if let Some(t) = m.tau {
        f.push(("train.tau", json(t)));
    }
    if let Some(p) = m.p {
        f.push(("train.p", json(p)));
    }
    if let Some(w) = m.weight_mode {
        f.push(("train.weight_mode", json(w)));
    }
    if let Some(s) = seed {
        f.push(("train.seed", json(s)));
    }
    f
}

/// Executes a parsed command, printing the main artifact location to stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(c) => {
            let seed = c.seed.map(|s| ("data.seed", json(s))).into_iter().collect();
            let cfg = resolve(&c, seed)?;
            let out = c.out.clone().unwrap_or_else(|| cfg.out_dir.join("data"));
            cmd_gen_data(&cfg, &out)?;
            say!("{}", out.display());
        }
        Command::Adjacency(a) => {
            let graph = cmd_adjacency(&AdjacencyRequest {
                annotations: a.annotations,
                multilabel: a.multilabel,
                tau: a.tau,
                p: a.p,
                variant: a.graph,
                symmetrize: a.symmetrize,
                out: a.out.clone(),
            })?;
            say!("{} (tau {}, p {})", a.out.display(), graph.tau, graph.p);
        }
        Command::Train(t) => {
            let cfg = resolve(&t.common, model_flags(&t.model, t.common.seed))?;
            let (dir, _) = cmd_train(&cfg, t.data.as_deref())?;
            say!("{}", dir.display());
        }
        Command::Eval(e) => {
            let seed = e.common.seed.map(|s| ("data.seed", json(s))).into_iter().collect();
            let cfg = resolve(&e.common, seed)?;
            let report = cmd_eval(&e.model, &cfg, e.data.as_deref())?;
            match &e.common.out {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(|err| Error::io(dir, err))?;
                    let path = dir.join("eval.json");
                    write_json(&report, &path)?;
                    say!("{}", path.display());
                }
                None => say!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
            }
        }
        Command::Ablate(a) => {
            let mut flags = model_flags(&a.model, None);
            if !a.variants.is_empty() {
                flags.push(("ablate.variants", json(&a.variants)));
            }
            let seeds = if a.seeds.is_empty() { a.common.seed.map(|s| vec![s]) } else { Some(a.seeds.clone()) };
            if let Some(s) = seeds {
                flags.push(("ablate.seeds", json(s)));
            }
            if !a.layers.is_empty() {
                flags.push(("ablate.layers", json(&a.layers)));
            }
            if !a.taus.is_empty() {
                flags.push(("ablate.taus", json(&a.taus)));
            }
            let cfg = resolve(&a.common, flags)?;
            let (dir, _) = cmd_ablate(&cfg, a.data.as_deref())?;
            say!("{}", dir.join("ablation.csv").display());
        }
        Command::Similarity(s) => {
            cmd_similarity(&s.model, &s.out)?;
            say!("{}", s.out.display());
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let keys = keys_help();
    let cmd = Cli::command()
        .after_help(keys.clone())
        .mut_subcommands(|sub| sub.after_help(keys.clone()));
    let matches = match cmd.try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
