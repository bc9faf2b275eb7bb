use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adjacency::{build_intra_adjacency, AffectGraph, GraphVariant, IntraSymmetrize, DEFAULT_INTRA_P, DEFAULT_P, DEFAULT_TAU};
use crate::analysis::{cosine_similarity_matrix, export_matrix, MatrixFormat, SimilarityMatrix};
use crate::datagen::{
    load_annotations_csv, load_dataset_csv, load_multilabel_csv, sample_splits, write_dataset_csv, DatasetPair,
    Split,
};
use crate::error::{Error, Result};
use crate::labels::{node_names, NODE_NAMES, NUM_CLASSES};
use crate::tensor::Tensor;
use crate::trainer::{evaluate, train, Confusion, Metrics, Model, TrainConfig, TrainReport, Variant};

use super::config::RunConfig;

pub const TRAIN_CSV: &str = "train.csv";
pub const VAL_CSV: &str = "val.csv";

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.into(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn digest8(doc: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(doc.to_string().as_bytes()))[..8].to_string()
}

/// Loads `train.csv` and `val.csv` from `dir`, or samples them from the config.
pub fn load_or_sample(cfg: &RunConfig, dir: Option<&Path>) -> Result<DatasetPair> {
    match dir {
        Some(dir) => Ok(DatasetPair {
            train: load_dataset_csv(dir.join(TRAIN_CSV), Split::Train)?,
            val: load_dataset_csv(dir.join(VAL_CSV), Split::Val)?,
        }),
        None => sample_splits(&cfg.data),
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    seed: u64,
    train_rows: usize,
    val_rows: usize,
    files: [&'a str; 2],
    data: &'a crate::datagen::SyntheticConfig,
}

/// Writes `train.csv`, `val.csv` and `manifest.json` into `out`.
pub fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pair = sample_splits(&cfg.data)?;
    create_dir(out)?;
    write_dataset_csv(&pair.train, out.join(TRAIN_CSV))?;
    write_dataset_csv(&pair.val, out.join(VAL_CSV))?;
    let manifest = Manifest {
        seed: cfg.data.seed,
        train_rows: pair.train.len(),
        val_rows: pair.val.len(),
        files: [TRAIN_CSV, VAL_CSV],
        data: &cfg.data,
    };
    write_json(&manifest, &out.join("manifest.json"))
}

#[derive(Debug, Clone)]
pub struct AdjacencyRequest {
    pub annotations: PathBuf,
    pub multilabel: Option<PathBuf>,
    pub tau: Option<f64>,
    pub p: Option<f64>,
    pub variant: GraphVariant,
    pub symmetrize: IntraSymmetrize,
    pub out: PathBuf,
}

/// Builds the graph and writes every stage as CSV plus `graph.json`.
pub fn cmd_adjacency(req: &AdjacencyRequest) -> Result<AffectGraph> {
    let tau = req.tau.unwrap_or(DEFAULT_TAU);
    let table = load_annotations_csv(&req.annotations)?;
    let graph = match req.variant {
        GraphVariant::CrossOnly => AffectGraph::cross_only(&table, tau, req.p.unwrap_or(DEFAULT_P))?,
        GraphVariant::WithIntra => {
            let path = req
                .multilabel
                .as_ref()
                .ok_or_else(|| Error::Usage("with_intra needs --multilabel CSV".into()))?;
            let ml = load_multilabel_csv(path)?;
            build_intra_adjacency(&table, &ml, tau, req.p.unwrap_or(DEFAULT_INTRA_P), req.symmetrize)?
        }
    };
    create_dir(&req.out)?;
    let names = node_names();
    for (file, m) in [
        ("a_raw.csv", &graph.a_raw),
        ("a_binary.csv", &graph.a_binary),
        ("a_reweighted.csv", &graph.a_reweighted),
        ("a_normalized.csv", &graph.a_normalized),
    ] {
        export_matrix(m, &names, req.out.join(file), MatrixFormat::Csv)?;
    }
    write_json(&graph, &req.out.join("graph.json"))?;
    Ok(graph)
}

fn confusion_tensor(c: &Confusion) -> Result<Tensor> {
    let rows: Vec<Vec<f64>> = c.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    Tensor::from_rows(&rows)
}

/// Per-run directory `<variant>-<hash8>-s<seed>` under `cfg.out_dir`.
pub fn run_dir(cfg: &RunConfig) -> PathBuf {
    cfg.out_dir
        .join(format!("{}-{}-s{}", cfg.train.variant, cfg.hash8(), cfg.train.seed))
}

fn write_similarity(model: &Model, dir: &Path) -> Result<SimilarityMatrix> {
    let sim = cosine_similarity_matrix(&model.head_matrix()?, &model.node_names)?;
    export_matrix(&sim.values, &sim.labels, dir.join("similarity.csv"), MatrixFormat::Csv)?;
    export_matrix(&sim.values, &sim.labels, dir.join("similarity.json"), MatrixFormat::Json)?;
    Ok(sim)
}

/// Trains one model and writes its artifacts; returns the run directory.
pub fn cmd_train(cfg: &RunConfig, data_dir: Option<&Path>) -> Result<(PathBuf, TrainReport)> {
    let data = load_or_sample(cfg, data_dir)?;
    let (report, model) = train(&cfg.train, &data)?;
    let dir = run_dir(cfg);
    create_dir(&dir)?;
    fs::write(dir.join("config.json"), cfg.to_flat_json() + "\n").map_err(|e| Error::io(dir.join("config.json"), e))?;
    write_json(&report, &dir.join("report.json"))?;
    model.save(dir.join("model.json"))?;
    let class_names: Vec<String> = NODE_NAMES[..NUM_CLASSES].iter().map(|s| s.to_string()).collect();
    export_matrix(
        &confusion_tensor(&report.confusion)?,
        &class_names,
        dir.join("confusion.csv"),
        MatrixFormat::Csv,
    )?;
    write_similarity(&model, &dir)?;
    log::info!(
        "{} seed {}: mean class accuracy {:.4}, ccc_v {:.4}, ccc_a {:.4} in {:.2}s",
        report.variant,
        report.seed,
        report.metrics.mean_class_accuracy,
        report.metrics.ccc_v,
        report.metrics.ccc_a,
        report.elapsed_secs
    );
    Ok((dir, report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub metrics: Metrics,
    pub confusion: Confusion,
}

/// Evaluates a saved model on the val split of `data_dir` or the configured data.
pub fn cmd_eval(model_path: &Path, cfg: &RunConfig, data_dir: Option<&Path>) -> Result<EvalReport> {
    let model = Model::load(model_path)?;
    let data = load_or_sample(cfg, data_dir)?;
    let (metrics, confusion) = evaluate(&model, &data.val)?;
    Ok(EvalReport {
        variant: model.variant,
        metrics,
        confusion,
    })
}

/// One line of the ablation table. `seed` is `None` on median rows;
/// `layers` and `tau` are `None` for variants without a graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub layers: Option<usize>,
    pub tau: Option<f64>,
    pub seed: Option<u64>,
    pub mean_class_accuracy: f64,
    pub accuracy: f64,
    pub f1_macro: f64,
    pub composite: f64,
    pub ccc_v: f64,
    pub ccc_a: f64,
}

impl AblationRow {
    fn new(variant: Variant, layers: Option<usize>, tau: Option<f64>, seed: Option<u64>, m: &Metrics) -> Self {
        AblationRow {
            variant,
            layers,
            tau,
            seed,
            mean_class_accuracy: m.mean_class_accuracy,
            accuracy: m.accuracy,
            f1_macro: m.f1_macro,
            composite: m.composite,
            ccc_v: m.ccc_v,
            ccc_a: m.ccc_a,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    variant: Variant,
    layers: Option<usize>,
    tau: Option<f64>,
}

fn grid(cfg: &RunConfig) -> Vec<Cell> {
    let a = &cfg.ablate;
    let layers: Vec<Option<usize>> = if a.layers.is_empty() {
        vec![Some(cfg.train.gcn_hidden.len() + 1)]
    } else {
        a.layers.iter().map(|&l| Some(l)).collect()
    };
    let taus: Vec<Option<f64>> = if a.taus.is_empty() {
        vec![Some(cfg.train.tau)]
    } else {
        a.taus.iter().map(|&t| Some(t)).collect()
    };
    let mut cells = Vec::new();
    for &variant in &a.variants {
        if variant.uses_gcn() {
            for &l in &layers {
                for &t in &taus {
                    cells.push(Cell { variant, layers: l, tau: t });
                }
            }
        } else {
            cells.push(Cell { variant, layers: None, tau: None });
        }
    }
    cells
}

fn cell_config(cfg: &RunConfig, cell: Cell, seed: u64) -> TrainConfig {
    let mut t = cfg.train.clone();
    t.variant = cell.variant;
    t.seed = seed;
    if let Some(l) = cell.layers {
        let width = cfg.train.gcn_hidden.first().copied().unwrap_or(32);
        t.gcn_hidden = vec![width; l - 1];
    }
    if let Some(tau) = cell.tau {
        t.tau = tau;
    }
    t
}

/// Runs every grid cell for every seed on one dataset. Per-seed rows come
/// first in grid order, then one median row per cell.
pub fn run_ablation(cfg: &RunConfig, data: &DatasetPair) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let cells = grid(cfg);
    let jobs: Vec<(Cell, u64)> = cells
        .iter()
        .flat_map(|&c| cfg.ablate.seeds.iter().map(move |&s| (c, s)))
        .collect();
    let results: Vec<AblationRow> = jobs
        .par_iter()
        .map(|&(cell, seed)| {
            let (report, _) = train(&cell_config(cfg, cell, seed), data)?;
            Ok(AblationRow::new(cell.variant, cell.layers, cell.tau, Some(seed), &report.metrics))
        })
        .collect::<Result<_>>()?;
    let mut rows = results.clone();
    for (k, cell) in cells.iter().enumerate() {
        let n = cfg.ablate.seeds.len();
        let group = &results[k * n..(k + 1) * n];
        let med = |f: fn(&AblationRow) -> f64| median(&group.iter().map(f).collect::<Vec<_>>());
        rows.push(AblationRow {
            variant: cell.variant,
            layers: cell.layers,
            tau: cell.tau,
            seed: None,
            mean_class_accuracy: med(|r| r.mean_class_accuracy),
            accuracy: med(|r| r.accuracy),
            f1_macro: med(|r| r.f1_macro),
            composite: med(|r| r.composite),
            ccc_v: med(|r| r.ccc_v),
            ccc_a: med(|r| r.ccc_a),
        });
    }
    Ok(rows)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut s = String::from("variant,layers,tau,seed,mean_class_accuracy,accuracy,f1_macro,composite,ccc_v,ccc_a\n");
    for r in rows {
        let seed = r.seed.map_or("median".to_string(), |v| v.to_string());
        s += &format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.variant,
            opt(r.layers),
            opt(r.tau),
            seed,
            r.mean_class_accuracy,
            r.accuracy,
            r.f1_macro,
            r.composite,
            r.ccc_v,
            r.ccc_a
        );
    }
    s
}

/// Runs the ablation grid and writes `ablation.csv` and `ablation.json`
/// into `<out_dir>/ablate-<hash8>`.
pub fn cmd_ablate(cfg: &RunConfig, data_dir: Option<&Path>) -> Result<(PathBuf, Vec<AblationRow>)> {
    let data = load_or_sample(cfg, data_dir)?;
    let rows = run_ablation(cfg, &data)?;
    let doc = serde_json::json!({ "data": cfg.data, "train": cfg.train, "ablate": cfg.ablate });
    let dir = cfg.out_dir.join(format!("ablate-{}", digest8(&doc)));
    create_dir(&dir)?;
    let csv_path = dir.join("ablation.csv");
    fs::write(&csv_path, ablation_csv(&rows)).map_err(|e| Error::io(&csv_path, e))?;
    write_json(&rows, &dir.join("ablation.json"))?;
    Ok((dir, rows))
}

/// Cosine similarity of a saved model's head vectors, written as CSV or JSON
/// by the extension of `out`.
pub fn cmd_similarity(model_path: &Path, out: &Path) -> Result<SimilarityMatrix> {
    let model = Model::load(model_path)?;
    let sim = cosine_similarity_matrix(&model.head_matrix()?, &model.node_names)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    export_matrix(&sim.values, &sim.labels, out, MatrixFormat::from_path(out))?;
    Ok(sim)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn grid_shape() {
        let mut cfg = RunConfig::default();
        cfg.ablate.variants = vec![Variant::SingleTaskCls, Variant::EmotionGcn];
        cfg.ablate.layers = vec![1, 2, 3];
        cfg.ablate.taus = vec![0.0, 0.1];
        let cells = grid(&cfg);
        assert_eq!(cells.len(), 1 + 6);
        let c = cell_config(&cfg, cells[3], 9);
        assert_eq!(c.gcn_hidden, vec![32]);
        assert_eq!(c.seed, 9);
        let c1 = cell_config(&cfg, cells[1], 9);
        assert!(c1.gcn_hidden.is_empty());
    }

    #[test]
    fn csv_marks_median_rows() {
        let m = Metrics {
            mean_class_accuracy: 0.5,
            accuracy: 0.5,
            f1_macro: 0.25,
            composite: 0.3325,
            ccc_v: 0.1,
            ccc_a: 0.2,
        };
        let rows = [
            AblationRow::new(Variant::SingleTaskCls, None, None, Some(1), &m),
            AblationRow::new(Variant::EmotionGcn, Some(2), Some(0.1), None, &m),
        ];
        let text = ablation_csv(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("single_task_cls,,,1,0.5"));
        assert!(lines[2].starts_with("emotion_gcn,2,0.1,median,"));
    }
}
