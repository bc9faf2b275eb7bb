//! Classification and regression heads, and the training losses.
//!
//! Class scores are a softmax over `x · W^cᵀ`; valence and arousal are plain
//! dot products `x · W^rᵀ`. The classification loss is a class-weighted
//! cross-entropy, the regression loss `1 - (ccc_v + ccc_a) / 2`, and the
//! training objective their unweighted sum.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::NUM_CLASSES;
use crate::tensor::{Tape, Tensor, Var};

/// Added to the CCC denominator during training so that a batch with
/// constant predictions and targets stays finite.
pub const CCC_VARIANCE_FLOOR: f64 = 1e-8;

/// Direction of the class re-weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// `w_i = f_i / f_min`, which up-weights frequent classes.
    AsWritten,
    /// `w_i = f_min / f_i`, which up-weights rare classes.
    #[default]
    InverseFrequency,
}

impl FromStr for WeightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "as_written" => Ok(WeightMode::AsWritten),
            "inverse_frequency" => Ok(WeightMode::InverseFrequency),
            other => Err(Error::Usage(format!(
                "unknown weight mode '{other}' (expected as_written or inverse_frequency)"
            ))),
        }
    }
}

impl fmt::Display for WeightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightMode::AsWritten => "as_written",
            WeightMode::InverseFrequency => "inverse_frequency",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub w: [f64; NUM_CLASSES],
    pub mode: WeightMode,
}

impl ClassWeights {
    pub fn uniform() -> Self {
        ClassWeights {
            w: [1.0; NUM_CLASSES],
            mode: WeightMode::InverseFrequency,
        }
    }
}

pub fn class_weights(counts: &[usize; NUM_CLASSES], mode: WeightMode) -> Result<ClassWeights> {
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Domain(format!(
            "class {} has no samples; cannot weight it",
            crate::labels::NODE_NAMES[i]
        )));
    }
    let f_min = *counts.iter().min().unwrap() as f64;
    let w = counts.map(|c| match mode {
        WeightMode::AsWritten => c as f64 / f_min,
        WeightMode::InverseFrequency => f_min / c as f64,
    });
    Ok(ClassWeights { w, mode })
}

/// Value-level predictions for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction {
    pub probs: Tensor,
    pub valence_pred: Vec<f64>,
    pub arousal_pred: Vec<f64>,
}

impl BatchPrediction {
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.probs.rows())
            .map(|r| {
                let row = self.probs.row_slice(r);
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

fn check_head(tape: &Tape, x: Var, w: Var, rows: usize, op: &'static str) -> Result<()> {
    let (xr, xc) = tape.shape(x);
    let (wr, wc) = tape.shape(w);
    if wr != rows || wc != xc {
        return Err(Error::shape(op, (xr, xc), (wr, wc)));
    }
    Ok(())
}

/// `x · W^cᵀ`, a B×7 matrix of class scores.
pub fn class_logits(tape: &mut Tape, x: Var, w_c: Var) -> Result<Var> {
    check_head(tape, x, w_c, NUM_CLASSES, "classify")?;
    let wt = tape.transpose(w_c);
    tape.matmul(x, wt)
}

/// Row-wise softmax of `x · W^cᵀ`.
pub fn classify(tape: &mut Tape, x: Var, w_c: Var) -> Result<Var> {
    let logits = class_logits(tape, x, w_c)?;
    let log_probs = tape.log_softmax(logits);
    Ok(tape.exp(log_probs))
}

/// `(x · w_valence, x · w_arousal)` as two B×1 columns, no activation.
pub fn regress(tape: &mut Tape, x: Var, w_r: Var) -> Result<(Var, Var)> {
    check_head(tape, x, w_r, 2, "regress")?;
    let wt = tape.transpose(w_r);
    let out = tape.matmul(x, wt)?;
    let v = tape.slice_cols(out, 0, 1)?;
    let a = tape.slice_cols(out, 1, 2)?;
    Ok((v, a))
}

/// Evaluates both heads without recording gradients.
pub fn predict(x: &Tensor, w_c: &Tensor, w_r: &Tensor) -> Result<BatchPrediction> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wc = tape.constant(w_c.clone());
    let wr = tape.constant(w_r.clone());
    let probs = classify(&mut tape, xv, wc)?;
    let (v, a) = regress(&mut tape, xv, wr)?;
    Ok(BatchPrediction {
        probs: tape.value(probs).clone(),
        valence_pred: tape.value(v).data().to_vec(),
        arousal_pred: tape.value(a).data().to_vec(),
    })
}

fn check_targets(targets: &[usize], rows: usize) -> Result<()> {
    if targets.len() != rows {
        return Err(Error::shape("weighted_ce", (rows, NUM_CLASSES), (targets.len(), 1)));
    }
    if let Some(t) = targets.iter().find(|&&t| t >= NUM_CLASSES) {
        return Err(Error::Domain(format!("target class {t} out of range 0..=6")));
    }
    Ok(())
}

fn weighted_nll(tape: &mut Tape, log_probs: Var, targets: &[usize], weights: &ClassWeights) -> Result<Var> {
    let picked = tape.pick(log_probs, targets)?;
    let w = Tensor::column(targets.iter().map(|&t| weights.w[t]).collect())?;
    let wv = tape.constant(w);
    let weighted = tape.mul(picked, wv)?;
    let mean = tape.mean(weighted);
    Ok(tape.scale(mean, -1.0))
}

/// Batch mean of `w_target * -log(prob_target)` from probabilities.
pub fn weighted_ce(tape: &mut Tape, probs: Var, targets: &[usize], weights: &ClassWeights) -> Result<Var> {
    check_targets(targets, tape.shape(probs).0)?;
    let log_probs = tape.log(probs)?;
    weighted_nll(tape, log_probs, targets, weights)
}

/// Same loss computed from logits through a stable log-softmax.
pub fn weighted_ce_logits(
    tape: &mut Tape,
    logits: Var,
    targets: &[usize],
    weights: &ClassWeights,
) -> Result<Var> {
    check_targets(targets, tape.shape(logits).0)?;
    let log_probs = tape.log_softmax(logits);
    weighted_nll(tape, log_probs, targets, weights)
}

/// Concordance correlation coefficient with population (1/n) moments.
pub fn ccc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape("ccc", (pred.len(), 1), (truth.len(), 1)));
    }
    let n = pred.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("ccc needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    let mx = exact_mean(pred);
    let my = exact_mean(truth);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in pred.iter().zip(truth) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let denom = sxx / nf + syy / nf + (mx - my) * (mx - my);
    if denom == 0.0 {
        return Err(Error::Degenerate(
            "ccc undefined: both sequences are constant with equal means".into(),
        ));
    }
    Ok((2.0 * sxy / nf / denom).clamp(-1.0, 1.0))
}

/// Mean that returns `c` exactly for a constant sequence, so its deviations are zero.
fn exact_mean(x: &[f64]) -> f64 {
    if x.iter().all(|&v| v == x[0]) {
        x[0]
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Differentiable CCC of two columns, with `floor` added to the denominator.
pub fn ccc_on_tape(tape: &mut Tape, pred: Var, truth: Var, floor: f64) -> Result<Var> {
    if tape.shape(pred) != tape.shape(truth) {
        return Err(Error::shape("ccc", tape.shape(pred), tape.shape(truth)));
    }
    let mp = tape.mean(pred);
    let mt = tape.mean(truth);
    let dp = tape.sub(pred, mp)?;
    let dt = tape.sub(truth, mt)?;
    let dp2 = tape.mul(dp, dp)?;
    let dt2 = tape.mul(dt, dt)?;
    let cross = tape.mul(dp, dt)?;
    let var_p = tape.mean(dp2);
    let var_t = tape.mean(dt2);
    let cov = tape.mean(cross);
    let gap = tape.sub(mp, mt)?;
    let gap2 = tape.mul(gap, gap)?;
    let denom = tape.add(var_p, var_t)?;
    let denom = tape.add(denom, gap2)?;
    let denom = tape.add_scalar(denom, floor);
    let num = tape.scale(cov, 2.0);
    tape.div(num, denom)
}

/// `1 - (ccc_v + ccc_a) / 2` over the batch, using the training floor.
pub fn ccc_loss(tape: &mut Tape, v_pred: Var, v_true: Var, a_pred: Var, a_true: Var) -> Result<Var> {
    let rho_v = ccc_on_tape(tape, v_pred, v_true, CCC_VARIANCE_FLOOR)?;
    let rho_a = ccc_on_tape(tape, a_pred, a_true, CCC_VARIANCE_FLOOR)?;
    let s = tape.add(rho_v, rho_a)?;
    let half = tape.scale(s, -0.5);
    Ok(tape.add_scalar(half, 1.0))
}

/// Mean squared error averaged over the batch and both dimensions.
pub fn mse_loss(tape: &mut Tape, v_pred: Var, v_true: Var, a_pred: Var, a_true: Var) -> Result<Var> {
    let dv = tape.sub(v_pred, v_true)?;
    let da = tape.sub(a_pred, a_true)?;
    let sv = tape.mul(dv, dv)?;
    let sa = tape.mul(da, da)?;
    let mv = tape.mean(sv);
    let ma = tape.mean(sa);
    let s = tape.add(mv, ma)?;
    Ok(tape.scale(s, 0.5))
}

/// `L = L^c + L^r`.
pub fn total_loss(tape: &mut Tape, l_c: Var, l_r: Var) -> Result<Var> {
    for (name, v) in [("classification", l_c), ("regression", l_r)] {
        let x = tape.value(v).item()?;
        if !x.is_finite() {
            return Err(Error::Numeric(format!("{name} loss is {x}")));
        }
    }
    tape.add(l_c, l_r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(v: &[f64]) -> Tensor {
        Tensor::column(v.to_vec()).unwrap()
    }

    #[test]
    fn zero_logits_give_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(3, 4));
        let w = tape.constant(Tensor::full(7, 4, 0.3));
        let p = classify(&mut tape, x, w).unwrap();
        assert!(tape.value(p).data().iter().all(|&v| (v - 1.0 / 7.0).abs() <= 1e-15));
    }

    #[test]
    fn closed_form_softmax() {
        // x = [1], w_c = [ln 2, 0, ...] gives logits [ln 2, 0, ..., 0]
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(1.0));
        let mut w = Tensor::zeros(7, 1);
        w.set(0, 0, 2f64.ln());
        let w = tape.constant(w);
        let p = classify(&mut tape, x, w).unwrap();
        assert!((tape.value(p).get(0, 0) - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logits = Tensor::uniform(4, 7, 3.0, &mut rng);
        let shifted = Tensor::from_rows(
            &(0..4)
                .map(|r| logits.row_slice(r).iter().map(|v| v + 10.0 * r as f64).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let mut tape = Tape::new();
        let a = tape.constant(logits);
        let b = tape.constant(shifted);
        let pa = tape.log_softmax(a);
        let pa = tape.exp(pa);
        let pb = tape.log_softmax(b);
        let pb = tape.exp(pb);
        assert!(tape.value(pa).max_abs_diff(tape.value(pb)) <= 1e-12);
        for s in tape.value(pa).row_sums() {
            assert!((s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn regress_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::uniform(5, 4, 1.0, &mut rng);
        let wr = Tensor::uniform(2, 4, 1.0, &mut rng);
        let pred = predict(&x, &Tensor::zeros(7, 4), &wr).unwrap();
        for b in 0..5 {
            let dot = |k: usize| (0..4).map(|j| x.get(b, j) * wr.get(k, j)).sum::<f64>();
            assert!((pred.valence_pred[b] - dot(0)).abs() <= 1e-12);
            assert!((pred.arousal_pred[b] - dot(1)).abs() <= 1e-12);
        }
        let zero = predict(&x, &Tensor::zeros(7, 4), &Tensor::zeros(2, 4)).unwrap();
        assert!(zero.valence_pred.iter().chain(&zero.arousal_pred).all(|&v| v == 0.0));

        let mut onehot = Tensor::zeros(1, 4);
        onehot.set(0, 2, 1.0);
        let sel = predict(&onehot, &Tensor::zeros(7, 4), &wr).unwrap();
        assert_eq!(sel.valence_pred[0], wr.get(0, 2));
        assert_eq!(sel.arousal_pred[0], wr.get(1, 2));

        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let bad = tape.constant(Tensor::zeros(2, 3));
        assert!(regress(&mut tape, xv, bad).is_err());
    }

    #[test]
    fn class_weight_modes() {
        let counts = [100, 50, 25, 25, 25, 25, 25];
        let w = class_weights(&counts, WeightMode::AsWritten).unwrap();
        assert_eq!(w.w, [4.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let w = class_weights(&counts, WeightMode::InverseFrequency).unwrap();
        assert_eq!(w.w, [0.25, 0.5, 1.0, 1.0, 1.0, 1.0, 1.0]);
        for mode in [WeightMode::AsWritten, WeightMode::InverseFrequency] {
            assert_eq!(class_weights(&[9; 7], mode).unwrap().w, [1.0; 7]);
        }
        assert!(matches!(
            class_weights(&[1, 1, 0, 1, 1, 1, 1], WeightMode::AsWritten),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn weighted_ce_closed_forms() {
        let mut tape = Tape::new();
        let uniform = tape.constant(Tensor::full(3, 7, 1.0 / 7.0));
        let l = weighted_ce(&mut tape, uniform, &[0, 3, 6], &ClassWeights::uniform()).unwrap();
        assert!((tape.value(l).item().unwrap() - 7f64.ln()).abs() <= 1e-12);

        let mut certain = Tensor::full(1, 7, 1e-300);
        certain.set(0, 2, 1.0);
        let c = tape.constant(certain);
        let l = weighted_ce(&mut tape, c, &[2], &ClassWeights::uniform()).unwrap();
        assert_eq!(tape.value(l).item().unwrap(), 0.0);

        let mut w2 = ClassWeights::uniform();
        w2.w[4] = 2.0;
        let one = weighted_ce(&mut tape, uniform, &[4, 4, 4], &ClassWeights::uniform()).unwrap();
        let two = weighted_ce(&mut tape, uniform, &[4, 4, 4], &w2).unwrap();
        assert_eq!(tape.value(two).item().unwrap(), 2.0 * tape.value(one).item().unwrap());

        assert!(matches!(
            weighted_ce(&mut tape, uniform, &[0, 1, 7], &ClassWeights::uniform()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn unit_weighted_ce_equals_plain_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let logits = Tensor::uniform(6, 7, 2.0, &mut rng);
        let targets: Vec<usize> = (0..6).map(|_| rng.random_range(0..7)).collect();
        let mut tape = Tape::new();
        let lv = tape.constant(logits.clone());
        let l = weighted_ce_logits(&mut tape, lv, &targets, &ClassWeights::uniform()).unwrap();
        let probs = classify_plain(&logits);
        let plain = (0..6).map(|b| -probs.get(b, targets[b]).ln()).sum::<f64>() / 6.0;
        assert!((tape.value(l).item().unwrap() - plain).abs() <= 1e-12);
        let pv = tape.constant(probs);
        let from_probs = weighted_ce(&mut tape, pv, &targets, &ClassWeights::uniform()).unwrap();
        assert!((tape.value(from_probs).item().unwrap() - plain).abs() <= 1e-12);
    }

    fn classify_plain(logits: &Tensor) -> Tensor {
        let mut out = logits.clone();
        for r in 0..logits.rows() {
            let row = logits.row_slice(r);
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            for c in 0..logits.cols() {
                out.set(r, c, row[c].exp() / z);
            }
        }
        out
    }

    #[test]
    fn ccc_pinned_cases() {
        let x = [0.1, -0.4, 0.9, 0.3];
        assert!((ccc(&x, &x).unwrap() - 1.0).abs() <= 1e-12);
        assert_eq!(ccc(&[0.2; 4], &x).unwrap(), 0.0);
        assert_eq!(ccc(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), -1.0);
        assert!(matches!(ccc(&[0.5, 0.5], &[0.5, 0.5]), Err(Error::Degenerate(_))));
        // constant sequences with different means: covariance 0, defined
        assert_eq!(ccc(&[0.5, 0.5], &[0.1, 0.1]).unwrap(), 0.0);
        // sum of seven 0.3s is not 7 * 0.3 in floating point
        assert_eq!(ccc(&[0.3; 7], &[0.1, 0.9, -0.4, 0.2, 0.5, -0.7, 0.8]).unwrap(), 0.0);
    }

    #[test]
    fn ccc_loss_values() {
        let mut tape = Tape::new();
        let v = tape.constant(col(&[0.1, 0.5, -0.3]));
        let a = tape.constant(col(&[0.7, -0.2, 0.0]));
        let perfect = ccc_loss(&mut tape, v, v, a, a).unwrap();
        assert!(tape.value(perfect).item().unwrap().abs() <= 1e-7);

        let p = tape.constant(col(&[0.0, 1.0]));
        let t = tape.constant(col(&[1.0, 0.0]));
        let l = ccc_loss(&mut tape, p, p, p, t).unwrap();
        assert!((tape.value(l).item().unwrap() - 1.0).abs() <= 1e-7);

        let c = tape.constant(col(&[0.3, 0.3]));
        let degenerate = ccc_loss(&mut tape, c, c, c, c).unwrap();
        assert!(tape.value(degenerate).item().unwrap().is_finite());
    }

    #[test]
    fn ccc_on_tape_matches_exact_without_floor() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let p: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let t: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let pv = tape.constant(col(&p));
        let tv = tape.constant(col(&t));
        let r = ccc_on_tape(&mut tape, pv, tv, 0.0).unwrap();
        assert!((tape.value(r).item().unwrap() - ccc(&p, &t).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn mse_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let vt: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let at: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let vp: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ap: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut tape = Tape::new();
        let (vtv, atv) = (tape.constant(col(&vt)), tape.constant(col(&at)));
        let exact = mse_loss(&mut tape, vtv, vtv, atv, atv).unwrap();
        assert_eq!(tape.value(exact).item().unwrap(), 0.0);

        let shifted_v = tape.constant(col(&vt.iter().map(|v| v + 0.25).collect::<Vec<_>>()));
        let shifted_a = tape.constant(col(&at.iter().map(|v| v + 0.25).collect::<Vec<_>>()));
        let off = mse_loss(&mut tape, shifted_v, vtv, shifted_a, atv).unwrap();
        assert!((tape.value(off).item().unwrap() - 0.0625).abs() <= 1e-12);

        let (vpv, apv) = (tape.constant(col(&vp)), tape.constant(col(&ap)));
        let l = mse_loss(&mut tape, vpv, vtv, apv, atv).unwrap();
        let mut oracle = 0.0;
        for i in 0..7 {
            oracle += (vp[i] - vt[i]).powi(2) + (ap[i] - at[i]).powi(2);
        }
        oracle /= 14.0;
        assert!((tape.value(l).item().unwrap() - oracle).abs() <= 1e-12);

        let short = tape.constant(col(&[0.0, 1.0]));
        assert!(mse_loss(&mut tape, short, vtv, apv, atv).is_err());
    }

    #[test]
    fn total_loss_adds_and_rejects_non_finite() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::scalar(1.9459));
        let z = tape.constant(Tensor::scalar(0.0));
        let one = tape.constant(Tensor::scalar(1.0));
        let s = total_loss(&mut tape, a, z).unwrap();
        assert_eq!(tape.value(s).item().unwrap(), 1.9459);
        let s = total_loss(&mut tape, z, one).unwrap();
        assert_eq!(tape.value(s).item().unwrap(), 1.0);
        let nan = tape.constant(Tensor::scalar(f64::NAN));
        assert!(matches!(total_loss(&mut tape, nan, z), Err(Error::Numeric(_))));
    }

    fn batch(rng: &mut ChaCha8Rng, b: usize) -> (Tensor, Tensor, Tensor, Vec<usize>, Tensor, Tensor) {
        let x = Tensor::uniform(b, 5, 1.0, rng);
        let wc = Tensor::uniform(7, 5, 1.0, rng);
        let wr = Tensor::uniform(2, 5, 1.0, rng);
        let targets = (0..b).map(|_| rng.random_range(0..7)).collect();
        let vt = Tensor::uniform(b, 1, 1.0, rng);
        let at = Tensor::uniform(b, 1, 1.0, rng);
        (x, wc, wr, targets, vt, at)
    }

    #[test]
    fn loss_gradients_pass_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for b in [4, 8, 16] {
            let (x, wc, wr, targets, vt, at) = batch(&mut rng, b);
            let counts = [5, 9, 3, 4, 7, 2, 6];
            let weights = class_weights(&counts, WeightMode::InverseFrequency).unwrap();
            let err = grad_check(
                |tape, p| {
                    let logits = class_logits(tape, p[0], p[1])?;
                    let lc = weighted_ce_logits(tape, logits, &targets, &weights)?;
                    let (v, a) = regress(tape, p[0], p[2])?;
                    let vtv = tape.constant(vt.clone());
                    let atv = tape.constant(at.clone());
                    let lr = ccc_loss(tape, v, vtv, a, atv)?;
                    let lm = mse_loss(tape, v, vtv, a, atv)?;
                    let l = total_loss(tape, lc, lr)?;
                    tape.add(l, lm)
                },
                &[x.clone(), wc.clone(), wr.clone()],
                1e-6,
            )
            .unwrap();
            assert!(err <= 1e-4, "batch {b}: err {err}");
        }
    }

    #[test]
    fn total_gradient_is_sum_of_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let (x, wc, wr, targets, vt, at) = batch(&mut rng, 6);
        let run = |which: u8| {
            let mut tape = Tape::new();
            let xv = tape.param(x.clone());
            let wcv = tape.param(wc.clone());
            let wrv = tape.param(wr.clone());
            let logits = class_logits(&mut tape, xv, wcv).unwrap();
            let lc = weighted_ce_logits(&mut tape, logits, &targets, &ClassWeights::uniform()).unwrap();
            let (v, a) = regress(&mut tape, xv, wrv).unwrap();
            let vtv = tape.constant(vt.clone());
            let atv = tape.constant(at.clone());
            let lr = ccc_loss(&mut tape, v, vtv, a, atv).unwrap();
            let loss = match which {
                0 => lc,
                1 => lr,
                _ => total_loss(&mut tape, lc, lr).unwrap(),
            };
            tape.backward(loss).unwrap();
            let zeros = Tensor::zeros(x.rows(), x.cols());
            tape.grad(xv).cloned().unwrap_or(zeros)
        };
        let (gc, gr, gt) = (run(0), run(1), run(2));
        let mut sum = gc.clone();
        sum.add_assign(&gr);
        assert!(sum.max_abs_diff(&gt) <= 1e-12);
    }

    #[test]
    fn constant_prediction_ccc_loss_stays_finite_under_check() {
        let err = grad_check(
            |tape, p| {
                let t = tape.constant(col(&[0.1, -0.5, 0.9, 0.2]));
                let t2 = tape.constant(col(&[0.4, 0.4, 0.4, 0.4]));
                ccc_loss(tape, p[0], t, p[0], t2)
            },
            &[col(&[0.4, 0.4, 0.4, 0.4])],
            1e-6,
        )
        .unwrap();
        assert!(err.is_finite());
    }
}
