use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adjacency::AffectGraph;
use crate::backbone::{backbone_forward, Backbone};
use crate::error::{Error, Result};
use crate::gcn::{gcn_forward, split_heads, GcnStack};
use crate::heads::{self, BatchPrediction};
use crate::labels::{node_names, NUM_CLASSES, NUM_DIMS, NUM_NODES};
use crate::tensor::{Tape, Tensor, Var};

use super::Variant;

pub const MODEL_FORMAT: &str = "emotion-gcn-model/1";

/// Where the classifier and regressor matrices come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Heads {
    /// Independently learned `W^c` (7×D) and `W^r` (2×D).
    Free { w_c: Tensor, w_r: Tensor },
    /// Generated by graph convolutions over the node embeddings.
    Gcn {
        stack: GcnStack,
        embeddings: Tensor,
        graph: AffectGraph,
    },
}

impl Heads {
    pub fn free<R: Rng + ?Sized>(feature_dim: usize, rng: &mut R) -> Self {
        Heads::Free {
            w_c: Tensor::glorot(NUM_CLASSES, feature_dim, rng),
            w_r: Tensor::glorot(NUM_DIMS, feature_dim, rng),
        }
    }
}

/// A complete model: backbone plus heads. Serializes to the model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub format: String,
    pub variant: Variant,
    pub node_names: Vec<String>,
    pub backbone: Backbone,
    pub heads: Heads,
}

/// Tape handles produced by [`Model::record`].
#[derive(Debug, Clone)]
pub struct Recorded {
    /// One handle per trainable tensor, in [`Model::params`] order.
    pub params: Vec<Var>,
    pub logits: Var,
    pub valence: Var,
    pub arousal: Var,
}

impl Model {
    pub fn new(variant: Variant, backbone: Backbone, heads: Heads) -> Result<Self> {
        let d = backbone.output_dim;
        match &heads {
            Heads::Free { w_c, w_r } => {
                if w_c.shape() != (NUM_CLASSES, d) || w_r.shape() != (NUM_DIMS, d) {
                    return Err(Error::shape("free heads", w_c.shape(), w_r.shape()));
                }
            }
            Heads::Gcn {
                stack, embeddings, ..
            } => {
                if stack.output_dim() != d {
                    return Err(Error::Config(format!(
                        "gcn output dim {} must equal backbone feature dim {d}",
                        stack.output_dim()
                    )));
                }
                if embeddings.shape() != (NUM_NODES, stack.input_dim()) {
                    return Err(Error::shape(
                        "gcn embeddings",
                        embeddings.shape(),
                        (NUM_NODES, stack.input_dim()),
                    ));
                }
            }
        }
        Ok(Model {
            format: MODEL_FORMAT.into(),
            variant,
            node_names: node_names(),
            backbone,
            heads,
        })
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out: Vec<&Tensor> = self.backbone.params.iter().collect();
        match &self.heads {
            Heads::Free { w_c, w_r } => out.extend([w_c, w_r]),
            Heads::Gcn { stack, .. } => out.extend(stack.weights.iter()),
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = self.backbone.params.iter_mut().collect();
        match &mut self.heads {
            Heads::Free { w_c, w_r } => out.extend([w_c, w_r]),
            Heads::Gcn { stack, .. } => out.extend(stack.weights.iter_mut()),
        }
        out
    }

    /// Records the forward pass for a batch of raw features on `tape`.
    pub fn record(&self, tape: &mut Tape, features: &Tensor) -> Result<Recorded> {
        let params: Vec<Var> = self
            .params()
            .into_iter()
            .map(|p| tape.param(p.clone()))
            .collect();
        let n_bb = self.backbone.params.len();
        let x = tape.constant(features.clone());
        let feats = backbone_forward(tape, x, &params[..n_bb], self.backbone.kind, self.backbone.slope)?;
        let (wc, wr) = match &self.heads {
            Heads::Free { .. } => (params[n_bb], params[n_bb + 1]),
            Heads::Gcn {
                stack,
                embeddings,
                graph,
            } => {
                let z = tape.constant(embeddings.clone());
                let a = tape.constant(graph.a_normalized.clone());
                let w = gcn_forward(tape, z, a, &params[n_bb..], stack.slope, stack.final_activation)?;
                split_heads(tape, w)?
            }
        };
        let logits = heads::class_logits(tape, feats, wc)?;
        let (valence, arousal) = heads::regress(tape, feats, wr)?;
        Ok(Recorded {
            params,
            logits,
            valence,
            arousal,
        })
    }

    /// The 9×D matrix of classifier rows followed by regressor rows.
    pub fn head_matrix(&self) -> Result<Tensor> {
        match &self.heads {
            Heads::Free { w_c, w_r } => {
                let mut rows = w_c.to_rows();
                rows.extend(w_r.to_rows());
                Tensor::from_rows(&rows)
            }
            Heads::Gcn {
                stack,
                embeddings,
                graph,
            } => stack.forward(embeddings, &graph.a_normalized),
        }
    }

    pub fn predict(&self, features: &Tensor) -> Result<BatchPrediction> {
        let x = self.backbone.forward(features)?;
        let w = self.head_matrix()?;
        let w_c = w.gather_rows(&(0..NUM_CLASSES).collect::<Vec<_>>())?;
        let w_r = w.gather_rows(&[NUM_CLASSES, NUM_CLASSES + 1])?;
        heads::predict(&x, &w_c, &w_r)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: "<model>".into(),
            source: e,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Model = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.into(),
            source: e,
        })?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Validation(format!(
                "{}: unsupported model format '{}'",
                path.display(),
                model.format
            )));
        }
        Model::new(model.variant, model.backbone, model.heads)
    }
}
