//! Layer definitions with their forward maps and vector-Jacobian products.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    /// `z = W x + b` with `W: [out, in]`.
    Dense {
        weights: Tensor,
        bias: Option<Tensor>,
    },
    /// Zero-padded cross-correlation, kernels `[out, in, kh, kw]`.
    Conv2d {
        kernels: Tensor,
        bias: Option<Tensor>,
        stride: usize,
        padding: usize,
    },
    Relu,
    MaxPool2d {
        window: usize,
        stride: usize,
    },
    GlobalAvgPool,
    Flatten,
    /// Inference-mode batch normalization over the leading (channel) axis.
    FrozenBatchNorm {
        scale: Tensor,
        shift: Tensor,
        mean: Tensor,
        variance: Tensor,
        epsilon: f64,
    },
}

impl LayerKind {
    pub fn tag(&self) -> &'static str {
        match self {
            LayerKind::Dense { .. } => "dense",
            LayerKind::Conv2d { .. } => "conv2d",
            LayerKind::Relu => "relu",
            LayerKind::MaxPool2d { .. } => "maxpool2d",
            LayerKind::GlobalAvgPool => "global_avg_pool",
            LayerKind::Flatten => "flatten",
            LayerKind::FrozenBatchNorm { .. } => "frozen_batchnorm",
        }
    }

    /// Dense, Conv2d and FrozenBatchNorm: layers whose output is an affine
    /// function of the input.
    pub fn is_affine(&self) -> bool {
        matches!(
            self,
            LayerKind::Dense { .. } | LayerKind::Conv2d { .. } | LayerKind::FrozenBatchNorm { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
        }
    }

    /// Output shape for a given input shape, validating parameter shapes.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| Error::ShapeMismatch {
            context: format!("layer `{}` ({})", self.name, self.kind.tag()),
            expected,
            found: input.to_vec(),
        };
        match &self.kind {
            LayerKind::Dense { weights, bias } => {
                if weights.ndim() != 2 {
                    return Err(Error::InvalidNetwork(format!(
                        "dense layer `{}` weights must be [out, in], got {:?}",
                        self.name,
                        weights.shape()
                    )));
                }
                let (out, inp) = (weights.shape()[0], weights.shape()[1]);
                if input != [inp] {
                    return Err(mismatch(vec![inp]));
                }
                check_bias(&self.name, bias, out)?;
                Ok(vec![out])
            }
            LayerKind::Conv2d {
                kernels,
                bias,
                stride,
                padding,
            } => {
                if kernels.ndim() != 4 {
                    return Err(Error::InvalidNetwork(format!(
                        "conv2d layer `{}` kernels must be [out, in, kh, kw], got {:?}",
                        self.name,
                        kernels.shape()
                    )));
                }
                if *stride == 0 {
                    return Err(Error::InvalidNetwork(format!(
                        "conv2d layer `{}` has stride 0",
                        self.name
                    )));
                }
                let ks = kernels.shape();
                if input.len() != 3 || input[0] != ks[1] {
                    return Err(mismatch(vec![ks[1], 0, 0]));
                }
                let (h, w) = (input[1] + 2 * padding, input[2] + 2 * padding);
                if h < ks[2] || w < ks[3] {
                    return Err(mismatch(vec![ks[1], ks[2], ks[3]]));
                }
                check_bias(&self.name, bias, ks[0])?;
                Ok(vec![ks[0], (h - ks[2]) / stride + 1, (w - ks[3]) / stride + 1])
            }
            LayerKind::Relu | LayerKind::Flatten if input.is_empty() => Err(mismatch(vec![1])),
            LayerKind::Relu => Ok(input.to_vec()),
            LayerKind::Flatten => Ok(vec![input.iter().product()]),
            LayerKind::MaxPool2d { window, stride } => {
                if *stride == 0 || *window == 0 {
                    return Err(Error::InvalidNetwork(format!(
                        "maxpool2d layer `{}` needs window and stride >= 1",
                        self.name
                    )));
                }
                if input.len() != 3 || input[1] < *window || input[2] < *window {
                    return Err(mismatch(vec![0, *window, *window]));
                }
                Ok(vec![
                    input[0],
                    (input[1] - window) / stride + 1,
                    (input[2] - window) / stride + 1,
                ])
            }
            LayerKind::GlobalAvgPool => {
                if input.len() != 3 {
                    return Err(mismatch(vec![0, 0, 0]));
                }
                Ok(vec![input[0]])
            }
            LayerKind::FrozenBatchNorm {
                scale,
                shift,
                mean,
                variance,
                epsilon,
            } => {
                let c = scale.len();
                for (what, t) in [("shift", shift), ("mean", mean), ("variance", variance)] {
                    if t.len() != c {
                        return Err(Error::InvalidNetwork(format!(
                            "batchnorm layer `{}` {what} has {} entries, scale has {c}",
                            self.name,
                            t.len()
                        )));
                    }
                }
                if variance.data().iter().any(|&v| !(v > 0.0)) {
                    return Err(Error::InvalidNetwork(format!(
                        "batchnorm layer `{}` has non-positive variance",
                        self.name
                    )));
                }
                if !(*epsilon >= 0.0) {
                    return Err(Error::InvalidNetwork(format!(
                        "batchnorm layer `{}` has negative epsilon",
                        self.name
                    )));
                }
                if input.is_empty() || input[0] != c {
                    return Err(mismatch(vec![c]));
                }
                Ok(input.to_vec())
            }
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(x.shape())?;
        let out = match &self.kind {
            LayerKind::Dense { weights, bias } => {
                let inp = weights.shape()[1];
                let w = weights.data();
                let data = (0..out_shape[0])
                    .map(|j| {
                        let row = &w[j * inp..(j + 1) * inp];
                        let dot: f64 = row.iter().zip(x.data()).map(|(a, b)| a * b).sum();
                        dot + bias.as_ref().map_or(0.0, |b| b.data()[j])
                    })
                    .collect();
                Tensor::new(out_shape, data)?
            }
            LayerKind::Conv2d {
                kernels,
                bias,
                stride,
                padding,
            } => {
                let geo = ConvGeometry::new(kernels.shape(), x.shape(), *stride, *padding);
                let mut data = vec![0.0; out_shape.iter().product()];
                let (k, xd) = (kernels.data(), x.data());
                for o in 0..geo.out_c {
                    let b = bias.as_ref().map_or(0.0, |b| b.data()[o]);
                    for oy in 0..geo.out_h {
                        for ox in 0..geo.out_w {
                            let mut acc = b;
                            geo.for_each_tap(o, oy, ox, |ki, xi| acc += k[ki] * xd[xi]);
                            data[(o * geo.out_h + oy) * geo.out_w + ox] = acc;
                        }
                    }
                }
                Tensor::new(out_shape, data)?
            }
            LayerKind::Relu => x.map(|v| v.max(0.0)),
            LayerKind::Flatten => x.clone().reshape(out_shape)?,
            LayerKind::MaxPool2d { window, stride } => {
                let mut data = vec![0.0; out_shape.iter().product()];
                for (o, slot) in data.iter_mut().enumerate() {
                    *slot = x.data()[maxpool_source(x.shape(), &out_shape, *window, *stride, o, x.data())];
                }
                Tensor::new(out_shape, data)?
            }
            LayerKind::GlobalAvgPool => {
                let plane = x.shape()[1] * x.shape()[2];
                let data = x
                    .data()
                    .chunks_exact(plane)
                    .map(|c| c.iter().sum::<f64>() / plane as f64)
                    .collect();
                Tensor::new(out_shape, data)?
            }
            LayerKind::FrozenBatchNorm { .. } => {
                let (gain, offset) = self.batchnorm_affine().unwrap();
                let per = x.len() / gain.len();
                let data = x
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| gain[i / per] * v + offset[i / per])
                    .collect();
                Tensor::new(out_shape, data)?
            }
        };
        out.ensure_finite(&format!("output of layer `{}`", self.name))?;
        Ok(out)
    }

    /// Gradient with respect to the layer input, given the input that was
    /// fed forward and the gradient with respect to the output.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        let out_shape = self.output_shape(x.shape())?;
        if grad_out.shape() != out_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                context: format!("gradient into layer `{}`", self.name),
                expected: out_shape,
                found: grad_out.shape().to_vec(),
            });
        }
        let g = grad_out.data();
        let mut gin = vec![0.0; x.len()];
        match &self.kind {
            LayerKind::Dense { weights, .. } => {
                let inp = weights.shape()[1];
                let w = weights.data();
                for (j, &gj) in g.iter().enumerate() {
                    if gj == 0.0 {
                        continue;
                    }
                    for (i, slot) in gin.iter_mut().enumerate() {
                        *slot += w[j * inp + i] * gj;
                    }
                }
            }
            LayerKind::Conv2d {
                kernels,
                stride,
                padding,
                ..
            } => {
                let geo = ConvGeometry::new(kernels.shape(), x.shape(), *stride, *padding);
                let k = kernels.data();
                for o in 0..geo.out_c {
                    for oy in 0..geo.out_h {
                        for ox in 0..geo.out_w {
                            let go = g[(o * geo.out_h + oy) * geo.out_w + ox];
                            if go != 0.0 {
                                geo.for_each_tap(o, oy, ox, |ki, xi| gin[xi] += k[ki] * go);
                            }
                        }
                    }
                }
            }
            LayerKind::Relu => {
                for ((slot, &xv), &gv) in gin.iter_mut().zip(x.data()).zip(g) {
                    *slot = if xv > 0.0 { gv } else { 0.0 };
                }
            }
            LayerKind::Flatten => gin.copy_from_slice(g),
            LayerKind::MaxPool2d { window, stride } => {
                for (o, &gv) in g.iter().enumerate() {
                    let src = maxpool_source(x.shape(), &out_shape, *window, *stride, o, x.data());
                    gin[src] += gv;
                }
            }
            LayerKind::GlobalAvgPool => {
                let plane = x.shape()[1] * x.shape()[2];
                for (i, slot) in gin.iter_mut().enumerate() {
                    *slot = g[i / plane] / plane as f64;
                }
            }
            LayerKind::FrozenBatchNorm { .. } => {
                let (gain, _) = self.batchnorm_affine().unwrap();
                let per = x.len() / gain.len();
                for (i, slot) in gin.iter_mut().enumerate() {
                    *slot = gain[i / per] * g[i];
                }
            }
        }
        Tensor::new(x.shape().to_vec(), gin)
    }

    /// Per-channel `(gain, offset)` with `y = gain * x + offset`.
    pub fn batchnorm_affine(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            LayerKind::FrozenBatchNorm {
                scale,
                shift,
                mean,
                variance,
                epsilon,
            } => {
                let gain: Vec<f64> = scale
                    .data()
                    .iter()
                    .zip(variance.data())
                    .map(|(s, v)| s / (v + epsilon).sqrt())
                    .collect();
                let offset = shift
                    .data()
                    .iter()
                    .zip(mean.data())
                    .zip(&gain)
                    .map(|((t, m), g)| t - g * m)
                    .collect();
                Some((gain, offset))
            }
            _ => None,
        }
    }
}

fn check_bias(name: &str, bias: &Option<Tensor>, out: usize) -> Result<()> {
    match bias {
        Some(b) if b.len() != out => Err(Error::InvalidNetwork(format!(
            "layer `{name}` bias has {} entries, expected {out}",
            b.len()
        ))),
        _ => Ok(()),
    }
}

/// Index bookkeeping for a zero-padded cross-correlation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub out_c: usize,
    pub in_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn new(kshape: &[usize], xshape: &[usize], stride: usize, padding: usize) -> Self {
        let (in_h, in_w) = (xshape[1], xshape[2]);
        ConvGeometry {
            out_c: kshape[0],
            in_c: kshape[1],
            kh: kshape[2],
            kw: kshape[3],
            in_h,
            in_w,
            out_h: (in_h + 2 * padding - kshape[2]) / stride + 1,
            out_w: (in_w + 2 * padding - kshape[3]) / stride + 1,
            stride,
            padding,
        }
    }

    /// Visits every `(kernel index, input index)` pair feeding output
    /// position `(o, oy, ox)`, skipping taps that land in the zero padding.
    pub fn for_each_tap(&self, o: usize, oy: usize, ox: usize, mut f: impl FnMut(usize, usize)) {
        for c in 0..self.in_c {
            for dy in 0..self.kh {
                let iy = (oy * self.stride + dy) as isize - self.padding as isize;
                if iy < 0 || iy >= self.in_h as isize {
                    continue;
                }
                for dx in 0..self.kw {
                    let ix = (ox * self.stride + dx) as isize - self.padding as isize;
                    if ix < 0 || ix >= self.in_w as isize {
                        continue;
                    }
                    let ki = ((o * self.in_c + c) * self.kh + dy) * self.kw + dx;
                    let xi = (c * self.in_h + iy as usize) * self.in_w + ix as usize;
                    f(ki, xi);
                }
            }
        }
    }
}

/// Flat input index selected by max pooling for flat output index `o`.
/// Ties go to the first position of the window in row-major order.
pub(crate) fn maxpool_source(
    in_shape: &[usize],
    out_shape: &[usize],
    window: usize,
    stride: usize,
    o: usize,
    x: &[f64],
) -> usize {
    let (in_h, in_w) = (in_shape[1], in_shape[2]);
    let (out_h, out_w) = (out_shape[1], out_shape[2]);
    let c = o / (out_h * out_w);
    let oy = (o / out_w) % out_h;
    let ox = o % out_w;
    let mut best = (c * in_h + oy * stride) * in_w + ox * stride;
    for dy in 0..window {
        for dx in 0..window {
            let idx = (c * in_h + oy * stride + dy) * in_w + ox * stride + dx;
            if x[idx] > x[best] {
                best = idx;
            }
        }
    }
    best
}
