use crate::error::Result;
use crate::netcore::{grad_wrt_layer, ForwardTrace, Network, NeuronTarget, INPUT};
use crate::tensor::Tensor;

use super::lrp::lrp_backward;
use super::vector::{Aggregation, AttributionVector, Method};

/// Elementwise `A^{at_layer} * dA_k / dA^{at_layer}`, shaped like the layer.
pub fn gradact_tensor(net: &Network, trace: &ForwardTrace, target: &NeuronTarget, at_layer: &str) -> Result<Tensor> {
    let grad = grad_wrt_layer(net, trace, target, at_layer)?;
    let acts = trace.get(at_layer)?;
    let data = acts.data().iter().zip(grad.data()).map(|(a, g)| a * g).collect();
    Tensor::new(acts.shape().to_vec(), data)
}

pub fn gradact_attribution(
    net: &Network,
    trace: &ForwardTrace,
    target: &NeuronTarget,
    at_layer: &str,
    aggregation: Aggregation,
) -> Result<AttributionVector> {
    let r = gradact_tensor(net, trace, target, at_layer)?;
    Ok(AttributionVector {
        target: target.clone(),
        at_layer: at_layer.to_string(),
        method: Method::GradAct,
        aggregation,
        values: aggregation.apply(&r),
    })
}

/// Relevance tensor at `at_layer` by either method.
pub fn relevance_tensor(
    net: &Network,
    trace: &ForwardTrace,
    target: &NeuronTarget,
    at_layer: &str,
    method: Method,
) -> Result<Tensor> {
    match method {
        Method::GradAct => gradact_tensor(net, trace, target, at_layer),
        Method::Lrp(params) => Ok(lrp_backward(net, trace, target, at_layer, params)?.relevance),
    }
}

/// Attribution vector by either method.
pub fn attribute(
    net: &Network,
    trace: &ForwardTrace,
    target: &NeuronTarget,
    at_layer: &str,
    method: Method,
    aggregation: Aggregation,
) -> Result<AttributionVector> {
    let r = relevance_tensor(net, trace, target, at_layer, method)?;
    Ok(AttributionVector {
        target: target.clone(),
        at_layer: at_layer.to_string(),
        method,
        aggregation,
        values: aggregation.apply(&r),
    })
}

/// Input-space attribution map. `[C, H, W]` inputs are summed over channels
/// to one `[H, W]` map; other inputs keep their shape.
pub fn input_heatmap(net: &Network, trace: &ForwardTrace, target: &NeuronTarget, method: Method) -> Result<Tensor> {
    let r = relevance_tensor(net, trace, target, INPUT, method)?;
    if r.ndim() != 3 {
        return Ok(r);
    }
    let (c, h, w) = (r.shape()[0], r.shape()[1], r.shape()[2]);
    let plane = h * w;
    let mut out = vec![0.0; plane];
    for ch in 0..c {
        for (o, v) in out.iter_mut().zip(&r.data()[ch * plane..(ch + 1) * plane]) {
            *o += v;
        }
    }
    Tensor::new(vec![h, w], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::LrpParams;
    use crate::netcore::{forward, LayerKind, LayerSpec};

    fn linear_net(w: &[f64]) -> Network {
        Network::new(
            vec![w.len()],
            vec![LayerSpec::new(
                "fc",
                LayerKind::Dense {
                    weights: Tensor::new(vec![1, w.len()], w.to_vec()).unwrap(),
                    bias: None,
                },
            )],
        )
        .unwrap()
    }

    #[test]
    fn gradact_on_linear_layer() {
        let net = linear_net(&[1.0, 2.0]);
        let trace = forward(&net, &Tensor::from_vec(vec![3.0, 4.0])).unwrap();
        let v = gradact_attribution(&net, &trace, &NeuronTarget::scalar("fc", 0), INPUT, Aggregation::ChannelSum).unwrap();
        assert_eq!(v.values, vec![3.0, 8.0]);
    }

    #[test]
    fn heatmap_of_summing_unit() {
        let net = linear_net(&[1.0, 1.0]);
        let trace = forward(&net, &Tensor::from_vec(vec![2.0, 3.0])).unwrap();
        let target = NeuronTarget::scalar("fc", 0);
        for method in [Method::GradAct, Method::Lrp(LrpParams::default())] {
            assert_eq!(input_heatmap(&net, &trace, &target, method).unwrap().data(), &[2.0, 3.0]);
        }
    }

    #[test]
    fn dead_target_gives_zero_heatmap() {
        let mut layers = linear_net(&[-1.0, -1.0]).layers().to_vec();
        layers.push(LayerSpec::new("relu", LayerKind::Relu));
        let net = Network::new(vec![2], layers).unwrap();
        let trace = forward(&net, &Tensor::from_vec(vec![2.0, 3.0])).unwrap();
        let target = NeuronTarget::scalar("relu", 0);
        for method in [Method::GradAct, Method::Lrp(LrpParams::default())] {
            let h = input_heatmap(&net, &trace, &target, method).unwrap();
            assert!(h.data().iter().all(|&v| v == 0.0));
        }
    }
}
