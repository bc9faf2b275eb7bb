use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.value(out).item()
}

/// Central-difference gradient of a scalar function with respect to each
/// parameter tensor.
pub fn numeric_gradient<F>(f: F, params: &[Tensor], epsilon: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::Config(format!(
            "finite-difference epsilon must lie in (0, 1e-2], got {epsilon}"
        )));
    }
    let mut work: Vec<Tensor> = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        let mut g = Tensor::zeros(params[k].rows(), params[k].cols());
        for i in 0..params[k].len() {
            let orig = params[k].data()[i];
            work[k].data_mut()[i] = orig + epsilon;
            let plus = evaluate(&f, &work)?;
            work[k].data_mut()[i] = orig - epsilon;
            let minus = evaluate(&f, &work)?;
            work[k].data_mut()[i] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Evaluation(format!(
                    "non-finite value at parameter {k}, entry {i}: f(+eps) = {plus}, f(-eps) = {minus}"
                )));
            }
            g.data_mut()[i] = (plus - minus) / (2.0 * epsilon);
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Compares reverse-mode gradients of `f` against central differences.
///
/// Returns the maximum over all parameter entries of
/// `|analytic - numeric| / max(1, |analytic|, |numeric|)`.
pub fn grad_check<F>(f: F, params: &[Tensor], epsilon: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let value = tape.value(out).item()?;
    if !value.is_finite() {
        return Err(Error::Evaluation(format!("non-finite function value {value}")));
    }
    tape.backward(out)?;

    let numeric = numeric_gradient(&f, params, epsilon)?;
    let mut worst = 0.0f64;
    for (v, num) in vars.iter().zip(&numeric) {
        let zeros = Tensor::zeros(num.rows(), num.cols());
        let analytic = tape.grad(*v).unwrap_or(&zeros);
        for (&a, &n) in analytic.data().iter().zip(num.data()) {
            let denom = 1.0f64.max(a.abs()).max(n.abs());
            worst = worst.max((a - n).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_function_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = Tensor::uniform(3, 5, 2.0, &mut rng);
        // exact for any epsilon; a larger one keeps summation roundoff small
        let err = grad_check(|tape, p| Ok(tape.sum(p[0])), &[w], 1e-3).unwrap();
        assert!(err <= 1e-10, "err {err}");
    }

    #[test]
    fn rejects_bad_epsilon() {
        let w = Tensor::zeros(1, 1);
        assert!(grad_check(|tape, p| Ok(tape.sum(p[0])), std::slice::from_ref(&w), 0.0).is_err());
        assert!(grad_check(|tape, p| Ok(tape.sum(p[0])), &[w], 0.1).is_err());
    }

    #[test]
    fn non_finite_evaluation_is_reported() {
        // exp overflows once the perturbation is applied
        let w = Tensor::scalar(709.78);
        let res = grad_check(
            |tape, p| {
                let e = tape.exp(p[0]);
                Ok(tape.sum(e))
            },
            &[w],
            1e-2,
        );
        assert!(matches!(res, Err(Error::Evaluation(_))), "{res:?}");
    }
}
