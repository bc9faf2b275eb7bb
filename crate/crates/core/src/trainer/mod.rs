//! Mini-batch training and evaluation of the model variants.

mod metrics;
mod model;
mod optim;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{
    composite_metric, confusion_matrix, f1_macro, mean_class_accuracy, overall_accuracy, regression_ccc,
    Confusion, Metrics,
};
pub use model::{Heads, Model, Recorded, MODEL_FORMAT};
pub use optim::sgd_momentum_step;

use crate::adjacency::{build_intra_adjacency, AffectGraph, IntraSymmetrize, DEFAULT_INTRA_P, DEFAULT_P, DEFAULT_TAU};
use crate::backbone::{Backbone, BackboneKind};
use crate::datagen::{class_counts, load_multilabel_csv, sample_multilabel, Dataset, DatasetPair};
use crate::embeddings::EmbeddingSource;
use crate::error::{Error, Result};
use crate::gcn::{GcnStack, DEFAULT_SLOPE};
use crate::heads::{self, class_weights, ClassWeights, WeightMode};
use crate::labels::{NUM_CLASSES, NUM_NODES};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    SingleTaskCls,
    SingleTaskReg,
    MultitaskMse,
    MultitaskCcc,
    #[default]
    EmotionGcn,
    IntraGcn,
}

/// Regression objective attached to a variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegressionLoss {
    None,
    Mse,
    Ccc,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::SingleTaskCls,
        Variant::SingleTaskReg,
        Variant::MultitaskMse,
        Variant::MultitaskCcc,
        Variant::EmotionGcn,
        Variant::IntraGcn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::SingleTaskCls => "single_task_cls",
            Variant::SingleTaskReg => "single_task_reg",
            Variant::MultitaskMse => "multitask_mse",
            Variant::MultitaskCcc => "multitask_ccc",
            Variant::EmotionGcn => "emotion_gcn",
            Variant::IntraGcn => "intra_gcn",
        }
    }

    pub fn uses_gcn(self) -> bool {
        matches!(self, Variant::EmotionGcn | Variant::IntraGcn)
    }

    pub fn uses_classification(self) -> bool {
        self != Variant::SingleTaskReg
    }

    pub fn regression_loss(self) -> RegressionLoss {
        match self {
            Variant::SingleTaskCls => RegressionLoss::None,
            Variant::MultitaskMse => RegressionLoss::Mse,
            _ => RegressionLoss::Ccc,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Variant::ALL.iter().map(|v| v.name()).collect();
                Error::Usage(format!("unknown variant '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub tau: f64,
    /// Neighbour share of the re-weighting; `None` picks 0.7 for the cross
    /// graph and 0.5 for the intra graph.
    pub p: Option<f64>,
    /// Hidden widths of the GCN; the stack runs `d -> gcn_hidden... -> feature_dim`.
    pub gcn_hidden: Vec<usize>,
    pub final_activation: bool,
    pub slope: f64,
    pub weight_mode: WeightMode,
    pub embeddings: EmbeddingSource,
    pub backbone: BackboneKind,
    pub backbone_hidden: usize,
    /// Backbone output width `D`.
    pub feature_dim: usize,
    pub intra_symmetrize: IntraSymmetrize,
    pub multilabel_path: Option<PathBuf>,
    /// Size of the generated multi-label table when no path is given.
    pub multilabel_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::default(),
            epochs: 10,
            batch_size: 35,
            lr: 0.001,
            momentum: 0.9,
            seed: 0,
            tau: DEFAULT_TAU,
            p: None,
            gcn_hidden: vec![32],
            final_activation: true,
            slope: DEFAULT_SLOPE,
            weight_mode: WeightMode::default(),
            embeddings: EmbeddingSource::default(),
            backbone: BackboneKind::default(),
            backbone_hidden: 32,
            feature_dim: 24,
            intra_symmetrize: IntraSymmetrize::default(),
            multilabel_path: None,
            multilabel_samples: 700,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau must be in [0, 1], got {}", self.tau));
        }
        if let Some(p) = self.p {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("p must be in (0, 1), got {p}"));
            }
        }
        if self.feature_dim == 0 || self.backbone_hidden == 0 || self.gcn_hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        crate::tensor::check_slope(self.slope)
    }

    /// `p` actually used for the graph of this variant.
    pub fn effective_p(&self) -> f64 {
        self.p.unwrap_or(match self.variant {
            Variant::IntraGcn => DEFAULT_INTRA_P,
            _ => DEFAULT_P,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Batch means of `L^c`, `L^r` and `L`; a loss the variant ignores is 0.
    pub l_c: f64,
    pub l_r: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: Variant,
    pub seed: u64,
    pub config: TrainConfig,
    pub losses: Vec<EpochLoss>,
    pub metrics: Metrics,
    pub confusion: Confusion,
    /// Wall-clock seconds; kept out of the JSON so reports stay reproducible.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

/// Loss components recorded for one batch.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss {
    pub l_c: Option<Var>,
    pub l_r: Option<Var>,
    pub total: Var,
}

/// Records the variant's objective on top of a forward pass. Returns `None`
/// when nothing can be computed, which only happens for a regression-only
/// variant on a batch of one.
pub fn variant_loss(
    tape: &mut Tape,
    variant: Variant,
    rec: &Recorded,
    batch: &Dataset,
    weights: &ClassWeights,
) -> Result<Option<BatchLoss>> {
    let l_c = if variant.uses_classification() {
        Some(heads::weighted_ce_logits(tape, rec.logits, &batch.targets(), weights)?)
    } else {
        None
    };
    let kind = match variant.regression_loss() {
        RegressionLoss::Ccc if batch.len() < 2 => RegressionLoss::None,
        k => k,
    };
    let l_r = match kind {
        RegressionLoss::None => None,
        k => {
            let v = tape.constant(Tensor::column(batch.valence.clone())?);
            let a = tape.constant(Tensor::column(batch.arousal.clone())?);
            Some(match k {
                RegressionLoss::Mse => heads::mse_loss(tape, rec.valence, v, rec.arousal, a)?,
                _ => heads::ccc_loss(tape, rec.valence, v, rec.arousal, a)?,
            })
        }
    };
    let total = match (l_c, l_r) {
        (Some(c), Some(r)) => heads::total_loss(tape, c, r)?,
        (Some(x), None) | (None, Some(x)) => {
            let v = tape.value(x).item()?;
            if !v.is_finite() {
                return Err(Error::Numeric(format!("loss is {v}")));
            }
            x
        }
        (None, None) => return Ok(None),
    };
    Ok(Some(BatchLoss { l_c, l_r, total }))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Builds the graph a GCN variant propagates over, from the training split.
pub fn build_graph(cfg: &TrainConfig, train: &Dataset) -> Result<AffectGraph> {
    let table = train.annotations()?;
    let p = cfg.effective_p();
    match cfg.variant {
        Variant::IntraGcn => {
            let ml = match &cfg.multilabel_path {
                Some(path) => load_multilabel_csv(path)?,
                None => sample_multilabel(cfg.multilabel_samples, cfg.seed)?,
            };
            build_intra_adjacency(&table, &ml, cfg.tau, p, cfg.intra_symmetrize)
        }
        _ => AffectGraph::cross_only(&table, cfg.tau, p),
    }
}

/// Freshly initialized model for `cfg`, deterministic in `cfg.seed`.
pub fn init_model(cfg: &TrainConfig, train: &Dataset) -> Result<Model> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, 10);
    let backbone = Backbone::new(
        cfg.backbone,
        train.feature_dim(),
        cfg.backbone_hidden,
        cfg.feature_dim,
        cfg.slope,
        &mut rng,
    )?;
    let heads = if cfg.variant.uses_gcn() {
        let embeddings = cfg.embeddings.load()?;
        if embeddings.rows() != NUM_NODES {
            return Err(Error::shape("embeddings", embeddings.shape(), (NUM_NODES, embeddings.cols())));
        }
        let mut dims = vec![embeddings.cols()];
        dims.extend(&cfg.gcn_hidden);
        dims.push(cfg.feature_dim);
        let stack = GcnStack::new(&dims, cfg.slope, cfg.final_activation, &mut rng)?;
        Heads::Gcn {
            stack,
            embeddings,
            graph: build_graph(cfg, train)?,
        }
    } else {
        Heads::free(cfg.feature_dim, &mut rng)
    };
    Model::new(cfg.variant, backbone, heads)
}

fn with_batch_context(err: Error, epoch: usize, batch: usize) -> Error {
    let ctx = |m: String| format!("epoch {epoch}, batch {batch}: {m}");
    match err {
        Error::Numeric(m) => Error::Numeric(ctx(m)),
        Error::Degenerate(m) => Error::Degenerate(ctx(m)),
        Error::Domain(m) => Error::Domain(ctx(m)),
        other => other,
    }
}

/// Runs one optimization step on `batch`; returns the loss values, or `None`
/// when the batch contributed nothing.
fn train_batch(
    model: &mut Model,
    velocity: &mut [Tensor],
    cfg: &TrainConfig,
    batch: &Dataset,
    weights: &ClassWeights,
) -> Result<Option<(f64, f64, f64)>> {
    let mut tape = Tape::new();
    let rec = model.record(&mut tape, &batch.features)?;
    let Some(loss) = variant_loss(&mut tape, cfg.variant, &rec, batch, weights)? else {
        return Ok(None);
    };
    let value = |tape: &Tape, v: Option<Var>| v.map_or(Ok(0.0), |v| tape.value(v).item());
    let l_c = value(&tape, loss.l_c)?;
    let l_r = value(&tape, loss.l_r)?;
    let total = tape.value(loss.total).item()?;
    tape.backward(loss.total)?;
    let grads: Vec<Tensor> = rec
        .params
        .iter()
        .map(|&p| {
            tape.grad(p).cloned().unwrap_or_else(|| {
                let (r, c) = tape.shape(p);
                Tensor::zeros(r, c)
            })
        })
        .collect();
    let mut params: Vec<Tensor> = model.params().into_iter().cloned().collect();
    sgd_momentum_step(&mut params, &grads, velocity, cfg.lr, cfg.momentum)?;
    for (dst, src) in model.params_mut().into_iter().zip(params) {
        *dst = src;
    }
    Ok(Some((l_c, l_r, total)))
}

/// Trains `cfg.variant` on `data.train` and evaluates on `data.val`.
pub fn train(cfg: &TrainConfig, data: &DatasetPair) -> Result<(TrainReport, Model)> {
    let start = Instant::now();
    let mut model = init_model(cfg, &data.train)?;
    let counts: [usize; NUM_CLASSES] = class_counts(&data.train.expression);
    let weights = if cfg.variant.uses_classification() {
        class_weights(&counts, cfg.weight_mode)?
    } else {
        ClassWeights::uniform()
    };
    let mut velocity: Vec<Tensor> = model
        .params()
        .iter()
        .map(|p| Tensor::zeros(p.rows(), p.cols()))
        .collect();
    let mut shuffle = stream_rng(cfg.seed, 11);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle);
        let (mut sc, mut sr, mut st, mut n) = (0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = data.train.subset(chunk)?;
            let step = train_batch(&mut model, &mut velocity, cfg, &batch, &weights)
                .map_err(|e| with_batch_context(e, epoch, b))?;
            if let Some((c, r, t)) = step {
                sc += c;
                sr += r;
                st += t;
                n += 1;
            }
        }
        let n = n.max(1) as f64;
        let row = EpochLoss {
            epoch,
            l_c: sc / n,
            l_r: sr / n,
            total: st / n,
        };
        log::debug!(
            "{} seed {} epoch {epoch}: L^c {:.5} L^r {:.5} L {:.5}",
            cfg.variant,
            cfg.seed,
            row.l_c,
            row.l_r,
            row.total
        );
        losses.push(row);
    }

    let (metrics, confusion) = evaluate(&model, &data.val)?;
    let report = TrainReport {
        variant: cfg.variant,
        seed: cfg.seed,
        config: cfg.clone(),
        losses,
        metrics,
        confusion,
        elapsed_secs: start.elapsed().as_secs_f64(),
    };
    Ok((report, model))
}

/// Classification and regression metrics of `model` on a split.
pub fn evaluate(model: &Model, val: &Dataset) -> Result<(Metrics, Confusion)> {
    let pred = model.predict(&val.features)?;
    let confusion = confusion_matrix(&val.targets(), &pred.argmax())?;
    let mca = mean_class_accuracy(&confusion)?;
    let accuracy = overall_accuracy(&confusion);
    let f1 = f1_macro(&confusion);
    let (ccc_v, ccc_a) = regression_ccc(&pred.valence_pred, &val.valence, &pred.arousal_pred, &val.arousal)?;
    let metrics = Metrics {
        mean_class_accuracy: mca,
        accuracy,
        f1_macro: f1,
        composite: composite_metric(f1, accuracy)?,
        ccc_v,
        ccc_a,
    };
    Ok((metrics, confusion))
}

/// Exact valence and arousal CCC over a full split.
pub fn evaluate_regression(model: &Model, val: &Dataset) -> Result<(f64, f64)> {
    if val.len() < 2 {
        return Err(Error::Metric(format!("regression metrics need >= 2 samples, got {}", val.len())));
    }
    let pred = model.predict(&val.features)?;
    regression_ccc(&pred.valence_pred, &val.valence, &pred.arousal_pred, &val.arousal)
}

#[cfg(test)]
mod tests;
