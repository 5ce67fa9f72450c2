//! Seeded random networks and inputs shared by the integration tests.
#![allow(dead_code)]

use pure_core::netcore::{finite_diff_grad, forward, grad_wrt_layer, ForwardTrace, LayerKind, LayerSpec, Network, NeuronTarget};
use pure_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn dense(rng: &mut ChaCha8Rng, name: &str, out: usize, inp: usize, bias: bool) -> LayerSpec {
    let s = 1.5 / (inp as f64).sqrt();
    LayerSpec::new(
        name,
        LayerKind::Dense {
            weights: uniform(rng, &[out, inp], -s, s),
            bias: bias.then(|| uniform(rng, &[out], -0.3, 0.3)),
        },
    )
}

pub fn conv(
    rng: &mut ChaCha8Rng,
    name: &str,
    out: usize,
    inp: usize,
    k: usize,
    stride: usize,
    padding: usize,
    bias: bool,
) -> LayerSpec {
    let s = 1.5 / ((inp * k * k) as f64).sqrt();
    LayerSpec::new(
        name,
        LayerKind::Conv2d {
            kernels: uniform(rng, &[out, inp, k, k], -s, s),
            bias: bias.then(|| uniform(rng, &[out], -0.3, 0.3)),
            stride,
            padding,
        },
    )
}

pub fn batchnorm(rng: &mut ChaCha8Rng, name: &str, channels: usize) -> LayerSpec {
    LayerSpec::new(
        name,
        LayerKind::FrozenBatchNorm {
            scale: uniform(rng, &[channels], 0.5, 1.5),
            shift: uniform(rng, &[channels], -0.2, 0.2),
            mean: uniform(rng, &[channels], -0.2, 0.2),
            variance: uniform(rng, &[channels], 0.5, 1.5),
            epsilon: 1e-5,
        },
    )
}

pub fn layer(name: &str, kind: LayerKind) -> LayerSpec {
    LayerSpec::new(name, kind)
}

/// Even seeds: conv, batchnorm, max pool and global average pooling.
/// Odd seeds: strided conv, overlapping pool, flatten, dense batchnorm.
/// Both end in a dense layer `out`; `act` is a spatial ReLU layer.
pub fn random_network(seed: u64) -> Network {
    let mut r = rng(seed);
    if seed % 2 == 0 {
        let conv1 = conv(&mut r, "conv1", 4, 2, 3, 1, 1, true);
        let mut bn1 = batchnorm(&mut r, "bn1", 4);
        // Mostly-live ReLUs, so max-pool windows are rarely all zero (tied).
        if let LayerKind::FrozenBatchNorm { shift, .. } = &mut bn1.kind {
            shift.data_mut().iter_mut().for_each(|v| *v += 0.6);
        }
        let layers = vec![
            conv1,
            bn1,
            layer("relu1", LayerKind::Relu),
            layer("pool1", LayerKind::MaxPool2d { window: 2, stride: 2 }),
            conv(&mut r, "conv2", 5, 4, 2, 1, 0, true),
            layer("act", LayerKind::Relu),
            layer("gap", LayerKind::GlobalAvgPool),
            dense(&mut r, "out", 3, 5, true),
        ];
        Network::new(vec![2, 6, 6], layers).unwrap()
    } else {
        let layers = vec![
            conv(&mut r, "conv1", 3, 1, 3, 2, 1, true),
            layer("act", LayerKind::Relu),
            layer("pool1", LayerKind::MaxPool2d { window: 2, stride: 1 }),
            layer("flat", LayerKind::Flatten),
            dense(&mut r, "fc1", 8, 12, true),
            batchnorm(&mut r, "bn1", 8),
            layer("relu2", LayerKind::Relu),
            dense(&mut r, "out", 2, 8, true),
        ];
        Network::new(vec![1, 5, 5], layers).unwrap()
    }
}

/// Bias-free ReLU network over Dense, Conv2d, MaxPool2d and Flatten.
pub fn bias_free_relu_net(seed: u64) -> Network {
    let mut r = rng(seed ^ 0xB1A5);
    let layers = vec![
        conv(&mut r, "conv1", 3, 2, 3, 1, 1, false),
        layer("relu1", LayerKind::Relu),
        layer("pool1", LayerKind::MaxPool2d { window: 2, stride: 2 }),
        layer("flat", LayerKind::Flatten),
        dense(&mut r, "fc1", 10, 12, false),
        layer("relu2", LayerKind::Relu),
        dense(&mut r, "fc2", 6, 10, false),
        layer("relu3", LayerKind::Relu),
        dense(&mut r, "out", 2, 6, false),
    ];
    Network::new(vec![2, 4, 4], layers).unwrap()
}

/// Smallest distance of the forward pass to a non-differentiable point:
/// ReLU inputs near zero and near-tied max-pool windows.
pub fn kink_margin(net: &Network, trace: &ForwardTrace) -> f64 {
    let mut margin = f64::INFINITY;
    for (p, l) in net.layers().iter().enumerate() {
        let x = trace.at(p);
        match &l.kind {
            LayerKind::Relu => {
                for v in x.data() {
                    margin = margin.min(v.abs());
                }
            }
            LayerKind::MaxPool2d { window, stride } => {
                let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let out = trace.at(p + 1);
                let (oh, ow) = (out.shape()[1], out.shape()[2]);
                for ch in 0..c {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let mut vals: Vec<f64> = (0..*window)
                                .flat_map(|dy| (0..*window).map(move |dx| (dy, dx)))
                                .map(|(dy, dx)| x.data()[(ch * h + oy * stride + dy) * w + ox * stride + dx])
                                .collect();
                            vals.sort_by(|a, b| b.total_cmp(a));
                            margin = margin.min(vals[0] - vals[1]);
                        }
                    }
                }
            }
            _ => {}
        }
    }
    margin
}

/// Gap between the two largest values of a spatial-max target's channel.
pub fn spatial_margin(trace: &ForwardTrace, target: &NeuronTarget) -> f64 {
    let out = trace.get(&target.layer).unwrap();
    if out.ndim() != 3 {
        return f64::INFINITY;
    }
    let plane = out.shape()[1] * out.shape()[2];
    let mut vals = out.data()[target.neuron * plane..(target.neuron + 1) * plane].to_vec();
    vals.sort_by(|a, b| b.total_cmp(a));
    if vals[0] == 0.0 && vals[1] == 0.0 {
        return f64::INFINITY;
    }
    vals[0] - vals[1]
}

/// Worst `|analytic - fd| / (1 + |fd|)` per probed coordinate, for every
/// target and every upstream layer. Exact zeros of hidden layers are
/// reported separately: probing them below zero leaves the ReLU range.
pub struct GradCheck {
    pub errors: Vec<f64>,
    pub zero_errors: Vec<f64>,
}

pub fn grad_check(net: &Network, x: &Tensor, targets: &[NeuronTarget], h: f64) -> GradCheck {
    let trace = forward(net, x).unwrap();
    let mut out = GradCheck {
        errors: Vec::new(),
        zero_errors: Vec::new(),
    };
    for t in targets {
        let to = net.position(&t.layer).unwrap();
        for p in 0..to {
            let at = net.name_at(p);
            let g = grad_wrt_layer(net, &trace, t, at).unwrap();
            let fd = finite_diff_grad(net, x, t, at, h).unwrap();
            for ((a, b), act) in g.data().iter().zip(fd.data()).zip(trace.at(p).data()) {
                let e = (a - b).abs() / (1.0 + b.abs());
                if p > 0 && *act == 0.0 {
                    out.zero_errors.push(e);
                } else {
                    out.errors.push(e);
                }
            }
        }
    }
    out
}

/// Draws `U[-1, 1]` inputs until every kink is at least `margin` away.
pub fn clean_input(net: &Network, r: &mut ChaCha8Rng, margin: f64, targets: &[NeuronTarget]) -> (Tensor, usize) {
    for attempt in 0..10_000 {
        let x = uniform(r, net.input_shape(), -1.0, 1.0);
        let trace = forward(net, &x).unwrap();
        let ok = kink_margin(net, &trace) >= margin && targets.iter().all(|t| spatial_margin(&trace, t) >= margin);
        if ok {
            return (x, attempt);
        }
    }
    panic!("no kink-free input found");
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
