//! Small affine feature extractors standing in for a CNN backbone.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{check_slope, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Linear,
    #[default]
    Mlp2,
}

/// `linear`: `x·W + b`. `mlp2`: `leaky_relu(x·W1 + b1)·W2 + b2`.
///
/// `params` alternates weight and bias (1×width) tensors, layer by layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backbone {
    pub kind: BackboneKind,
    pub input_dim: usize,
    pub output_dim: usize,
    pub slope: f64,
    pub params: Vec<Tensor>,
}

impl Backbone {
    pub fn new<R: Rng + ?Sized>(
        kind: BackboneKind,
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        slope: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 || (kind == BackboneKind::Mlp2 && hidden_dim == 0) {
            return Err(Error::Config("backbone dimensions must be positive".into()));
        }
        let params = match kind {
            BackboneKind::Linear => vec![
                Tensor::glorot(input_dim, output_dim, rng),
                Tensor::zeros(1, output_dim),
            ],
            BackboneKind::Mlp2 => vec![
                Tensor::glorot(input_dim, hidden_dim, rng),
                Tensor::zeros(1, hidden_dim),
                Tensor::glorot(hidden_dim, output_dim, rng),
                Tensor::zeros(1, output_dim),
            ],
        };
        Self::from_params(kind, params, slope)
    }

    pub fn from_params(kind: BackboneKind, params: Vec<Tensor>, slope: f64) -> Result<Self> {
        check_slope(slope)?;
        let expected = match kind {
            BackboneKind::Linear => 2,
            BackboneKind::Mlp2 => 4,
        };
        if params.len() != expected {
            return Err(Error::Config(format!(
                "{kind:?} backbone needs {expected} tensors, got {}",
                params.len()
            )));
        }
        let mut width = params[0].rows();
        let input_dim = width;
        for pair in params.chunks(2) {
            let (w, b) = (&pair[0], &pair[1]);
            if w.rows() != width || b.shape() != (1, w.cols()) {
                return Err(Error::shape("backbone", w.shape(), b.shape()));
            }
            width = w.cols();
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("backbone weights must be finite".into()));
        }
        Ok(Backbone {
            kind,
            input_dim,
            output_dim: width,
            slope,
            params,
        })
    }

    /// Forward pass without gradient tracking.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let ps: Vec<Var> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let out = backbone_forward(&mut tape, x, &ps, self.kind, self.slope)?;
        Ok(tape.value(out).clone())
    }
}

/// Records the backbone on `tape`; `params` are the tape handles of
/// [`Backbone::params`] in order.
pub fn backbone_forward(
    tape: &mut Tape,
    input: Var,
    params: &[Var],
    kind: BackboneKind,
    slope: f64,
) -> Result<Var> {
    let affine = |tape: &mut Tape, x: Var, w: Var, b: Var| -> Result<Var> {
        let xw = tape.matmul(x, w)?;
        tape.add(xw, b)
    };
    match (kind, params) {
        (BackboneKind::Linear, [w, b]) => affine(tape, input, *w, *b),
        (BackboneKind::Mlp2, [w1, b1, w2, b2]) => {
            let h = affine(tape, input, *w1, *b1)?;
            let h = tape.leaky_relu(h, slope)?;
            affine(tape, h, *w2, *b2)
        }
        _ => Err(Error::Config(format!(
            "{kind:?} backbone got {} parameter tensors",
            params.len()
        ))),
    }
}
