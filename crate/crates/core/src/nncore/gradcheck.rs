//! Finite-difference gradient verification (test oracle).

use crate::error::{Error, Result};

use super::network::{cross_entropy, mse, Gradients, Mode, Network};
use super::tensor::Tensor;

/// Loss target for one sample: a value tensor (MSE) or a class index
/// (cross-entropy on the network's probability output).
#[derive(Debug, Clone)]
pub enum LossTarget {
    Values(Tensor),
    Class(usize),
}

const MAX_CHECKED_PARAMS: usize = 10_000;

fn batch_loss(net: &Network, inputs: &[Tensor], targets: &[LossTarget]) -> Result<f64> {
    let mut total = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        let out = net.eval(x)?;
        let (l, _) = match t {
            LossTarget::Values(v) => mse(&out, v)?,
            LossTarget::Class(c) => cross_entropy(&out, *c)?,
        };
        total += l;
    }
    Ok(total / inputs.len() as f64)
}

fn batch_grads(net: &Network, inputs: &[Tensor], targets: &[LossTarget]) -> Result<Gradients> {
    let mut acc = Gradients::zeros_like(net);
    for (x, t) in inputs.iter().zip(targets) {
        let trace = net.forward(x, &mut Mode::Eval)?;
        let (_, gl) = match t {
            LossTarget::Values(v) => mse(trace.output(), v)?,
            LossTarget::Class(c) => cross_entropy(trace.output(), *c)?,
        };
        let (g, _) = net.backward(&trace, &gl)?;
        acc.add_assign(&g);
    }
    acc.scale(1.0 / inputs.len() as f64);
    Ok(acc)
}

/// Perturb every parameter by `+-eps` and compare the central difference of
/// the batch loss against the analytic gradient. Returns the maximum
/// relative error `|analytic - numeric| / (|analytic| + eps)`.
///
/// Dropout layers are evaluated in inference mode, so the loss is a
/// deterministic function of the parameters.
pub fn check_gradients(
    net: &mut Network,
    inputs: &[Tensor],
    targets: &[LossTarget],
    eps: f64,
) -> Result<f64> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Dimension("inputs/targets must be nonempty and aligned".into()));
    }
    if net.param_count() > MAX_CHECKED_PARAMS {
        return Err(Error::Capacity(format!(
            "{} parameters exceed the exhaustive-check bound {MAX_CHECKED_PARAMS}",
            net.param_count()
        )));
    }
    let analytic = batch_grads(net, inputs, targets)?;
    let mut worst = 0.0f64;
    for li in 0..net.params().len() {
        for ti in 0..net.params()[li].len() {
            for ei in 0..net.params()[li][ti].numel() {
                let orig = net.params()[li][ti].data[ei];
                net.params_mut()[li][ti].data[ei] = orig + eps;
                let plus = batch_loss(net, inputs, targets)?;
                net.params_mut()[li][ti].data[ei] = orig - eps;
                let minus = batch_loss(net, inputs, targets)?;
                net.params_mut()[li][ti].data[ei] = orig;
                let numeric = (plus - minus) / (2.0 * eps);
                let a = analytic.0[li][ti].data[ei];
                let rel = (a - numeric).abs() / (a.abs() + eps);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}
