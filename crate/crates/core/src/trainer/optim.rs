use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Classical momentum: `v <- momentum * v + g`, then `theta <- theta - lr * v`.
pub fn sgd_momentum_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    velocity: &mut [Tensor],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Contract(format!(
            "optimizer got {} params, {} grads, {} velocities",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for (k, g) in grads.iter().enumerate() {
        if g.shape() != params[k].shape() || velocity[k].shape() != params[k].shape() {
            return Err(Error::shape("sgd_momentum_step", params[k].shape(), g.shape()));
        }
        if let Some(pos) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient {} at parameter {k}, entry {pos}",
                g.data()[pos]
            )));
        }
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        for ((pv, &gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
            *vv = momentum * *vv + gv;
            *pv -= lr * *vv;
        }
    }
    Ok(())
}
