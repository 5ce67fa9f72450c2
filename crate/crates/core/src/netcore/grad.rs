//! Reverse-mode gradients of a single neuron with respect to earlier layers.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::network::Network;
use super::trace::{ForwardTrace, NeuronTarget};

/// Positions of `at_layer` and `target.layer`, checking order.
pub(crate) fn span(net: &Network, target: &NeuronTarget, at_layer: &str) -> Result<(usize, usize)> {
    let to = net.position(&target.layer)?;
    let from = net.position(at_layer)?;
    if from >= to {
        return Err(Error::NotUpstream {
            at: at_layer.to_string(),
            target: target.layer.clone(),
        });
    }
    Ok((from, to))
}

/// `d A_k / d A^{at_layer}` for the target neuron `k`, by backpropagating a
/// one-hot seed placed at the target's recorded position.
pub fn grad_wrt_layer(
    net: &Network,
    trace: &ForwardTrace,
    target: &NeuronTarget,
    at_layer: &str,
) -> Result<Tensor> {
    let (from, to) = span(net, target, at_layer)?;
    let pos = target.locate(trace.at(to))?;
    let mut grad = Tensor::zeros(trace.at(to).shape());
    grad.data_mut()[pos] = 1.0;
    for p in (from + 1..=to).rev() {
        grad = net.layers()[p - 1].backward(trace.at(p - 1), &grad)?;
    }
    grad.ensure_finite("gradient")?;
    Ok(grad)
}

/// Central-difference estimate of [`grad_wrt_layer`], re-running the
/// downstream sub-network for every perturbed coordinate. Test oracle.
pub fn finite_diff_grad(
    net: &Network,
    input: &Tensor,
    target: &NeuronTarget,
    at_layer: &str,
    h: f64,
) -> Result<Tensor> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step h must be positive, got {h}")));
    }
    let (from, to) = span(net, target, at_layer)?;
    let trace = super::trace::forward(net, input)?;
    let base = trace.at(from).clone();
    let eval = |a: &Tensor| -> Result<f64> {
        let outs = net.forward_range(from, to, a)?;
        let out = outs.last().unwrap();
        Ok(out.data()[target.locate(out)?])
    };
    let mut grad = Tensor::zeros(base.shape());
    let mut probe = base.clone();
    for i in 0..base.len() {
        let orig = base.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval(&probe)?;
        probe.data_mut()[i] = orig;
        grad.data_mut()[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}
