//! Graph convolutions that turn node embeddings into head weights.
//!
//! Each layer computes `h(Â · H · W)` with LeakyReLU as `h`. The final
//! layer's output `W` (9×D) is split into the 7 expression classifiers and
//! the 2 valence/arousal regressors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{NUM_CLASSES, NUM_NODES};
use crate::tensor::{check_slope, Tape, Tensor, Var};

pub const DEFAULT_SLOPE: f64 = 0.2;

/// Weights of a stack of graph-convolution layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnStack {
    /// `[d, h1, ..., D]`: input width followed by every layer's output width.
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Tensor>,
    pub slope: f64,
    /// Apply the activation after the last layer as well.
    pub final_activation: bool,
}

impl GcnStack {
    /// Glorot-uniform initialized stack.
    pub fn new<R: Rng + ?Sized>(
        layer_dims: &[usize],
        slope: f64,
        final_activation: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::Config(format!(
                "gcn needs at least one layer with positive widths, got dims {layer_dims:?}"
            )));
        }
        let weights = layer_dims
            .windows(2)
            .map(|w| Tensor::glorot(w[0], w[1], rng))
            .collect();
        Self::from_weights(weights, slope, final_activation)
    }

    pub fn from_weights(weights: Vec<Tensor>, slope: f64, final_activation: bool) -> Result<Self> {
        check_slope(slope)?;
        let Some(first) = weights.first() else {
            return Err(Error::Config("gcn needs at least one layer".into()));
        };
        let mut layer_dims = vec![first.rows()];
        for w in &weights {
            let prev = *layer_dims.last().unwrap();
            if w.rows() != prev {
                return Err(Error::shape("gcn stack", (prev, prev), w.shape()));
            }
            layer_dims.push(w.cols());
        }
        Ok(GcnStack {
            layer_dims,
            weights,
            slope,
            final_activation,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// Forward pass without gradient tracking.
    pub fn forward(&self, z: &Tensor, a_hat: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let z = tape.constant(z.clone());
        let a = tape.constant(a_hat.clone());
        let ws: Vec<Var> = self.weights.iter().map(|w| tape.constant(w.clone())).collect();
        let out = gcn_forward(&mut tape, z, a, &ws, self.slope, self.final_activation)?;
        Ok(tape.value(out).clone())
    }
}

fn check_row_stochastic(a: &Tensor) -> Result<()> {
    for (i, s) in a.row_sums().into_iter().enumerate() {
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "normalized adjacency row {i} sums to {s}, expected 1"
            )));
        }
    }
    Ok(())
}

/// One layer: `Â · (H · W)`, then LeakyReLU when `slope` is given.
pub fn gcn_layer(tape: &mut Tape, h: Var, a_hat: Var, w: Var, slope: Option<f64>) -> Result<Var> {
    let (n, m) = tape.shape(a_hat);
    if n != m || m != tape.shape(h).0 {
        return Err(Error::shape("gcn_layer", (n, m), tape.shape(h)));
    }
    check_row_stochastic(tape.value(a_hat))?;
    let hw = tape.matmul(h, w)?;
    let pre = tape.matmul(a_hat, hw)?;
    match slope {
        Some(s) => tape.leaky_relu(pre, s),
        None => Ok(pre),
    }
}

/// Applies every layer in order and returns the 9×D head matrix.
pub fn gcn_forward(
    tape: &mut Tape,
    z: Var,
    a_hat: Var,
    weights: &[Var],
    slope: f64,
    final_activation: bool,
) -> Result<Var> {
    if weights.is_empty() {
        return Err(Error::Config("gcn needs at least one layer".into()));
    }
    let mut h = z;
    for (l, &w) in weights.iter().enumerate() {
        let last = l + 1 == weights.len();
        let act = (!last || final_activation).then_some(slope);
        h = gcn_layer(tape, h, a_hat, w, act)?;
    }
    Ok(h)
}

/// Rows 0..7 are the expression classifiers, rows 7..9 the valence and
/// arousal regressors.
pub fn split_heads(tape: &mut Tape, w: Var) -> Result<(Var, Var)> {
    let shape = tape.shape(w);
    if shape.0 != NUM_NODES {
        return Err(Error::shape("split_heads", shape, (NUM_NODES, shape.1)));
    }
    let wc = tape.slice_rows(w, 0, NUM_CLASSES)?;
    let wr = tape.slice_rows(w, NUM_CLASSES, NUM_NODES)?;
    Ok((wc, wr))
}
