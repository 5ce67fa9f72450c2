//! Epsilon-LRP: relevance messages along the edges of affine layers and
//! their aggregation into node relevances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{maxpool_source, span, ConvGeometry, ForwardTrace, LayerKind, LayerSpec, Network, NeuronTarget};
use crate::tensor::Tensor;

/// Magnitude below which an unstabilized denominator counts as zero.
pub const DEGENERATE_Z: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrpParams {
    /// Stabilizer added to every denominator with the denominator's sign.
    pub epsilon: f64,
}

impl Default for LrpParams {
    fn default() -> Self {
        LrpParams { epsilon: 0.0 }
    }
}

impl LrpParams {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "LRP epsilon must be finite and >= 0, got {epsilon}"
            )));
        }
        Ok(LrpParams { epsilon })
    }

    /// `z + epsilon * sign(z)` with `sign(0) = +1`.
    pub fn stabilize(&self, z: f64) -> f64 {
        if z >= 0.0 {
            z + self.epsilon
        } else {
            z - self.epsilon
        }
    }
}

/// Relevance message `R_{i<-j}` from upper unit `j` to lower unit `i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub lower: usize,
    pub upper: usize,
    pub value: f64,
}

/// All messages across one affine layer, stored sparsely: only edges with a
/// nonzero forward contribution and nonzero upper relevance are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevanceMessages {
    pub layer: String,
    pub lower_shape: Vec<usize>,
    pub upper_shape: Vec<usize>,
    pub edges: Vec<Edge>,
    /// `R_j` of every upper unit.
    pub upper_relevance: Vec<f64>,
    /// Forward pre-activation `z_j` of every upper unit, bias included.
    pub z: Vec<f64>,
    /// Per upper unit, the part of `R_j` not passed to any lower unit
    /// (bias share plus stabilizer share).
    pub absorbed: Vec<f64>,
}

impl RelevanceMessages {
    pub fn lower_len(&self) -> usize {
        self.lower_shape.iter().product()
    }

    pub fn upper_len(&self) -> usize {
        self.upper_shape.iter().product()
    }

    /// Dense `[lower, upper]` message matrix.
    pub fn to_dense(&self) -> Tensor {
        let (n, m) = (self.lower_len(), self.upper_len());
        let mut out = Tensor::zeros(&[n, m]);
        for e in &self.edges {
            out.data_mut()[e.lower * m + e.upper] += e.value;
        }
        out
    }

    /// Wraps a dense `[lower, upper]` matrix; absorbed shares are taken as zero.
    pub fn from_dense(matrix: &Tensor) -> Result<Self> {
        matrix.require_matrix("message matrix")?;
        let (n, m) = (matrix.rows(), matrix.cols());
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..m {
                edges.push(Edge {
                    lower: i,
                    upper: j,
                    value: matrix.get2(i, j),
                });
            }
        }
        let upper_relevance = (0..m).map(|j| (0..n).map(|i| matrix.get2(i, j)).sum()).collect();
        Ok(RelevanceMessages {
            layer: String::new(),
            lower_shape: vec![n],
            upper_shape: vec![m],
            edges,
            upper_relevance,
            z: vec![0.0; m],
            absorbed: vec![0.0; m],
        })
    }
}

/// Visits every forward contribution `z_{i->j}` of an affine layer as
/// `(i, j, z)` and returns the per-upper-unit bias.
fn contributions(layer: &LayerSpec, x: &Tensor, mut f: impl FnMut(usize, usize, f64)) -> Result<Vec<f64>> {
    let a = x.data();
    match &layer.kind {
        LayerKind::Dense { weights, bias } => {
            let (out, inp) = (weights.shape()[0], weights.shape()[1]);
            let w = weights.data();
            for j in 0..out {
                for (i, &ai) in a.iter().enumerate() {
                    f(i, j, w[j * inp + i] * ai);
                }
            }
            Ok(bias.as_ref().map_or(vec![0.0; out], |b| b.data().to_vec()))
        }
        LayerKind::Conv2d {
            kernels,
            bias,
            stride,
            padding,
        } => {
            let geo = ConvGeometry::new(kernels.shape(), x.shape(), *stride, *padding);
            let k = kernels.data();
            let plane = geo.out_h * geo.out_w;
            for o in 0..geo.out_c {
                for oy in 0..geo.out_h {
                    for ox in 0..geo.out_w {
                        let j = o * plane + oy * geo.out_w + ox;
                        geo.for_each_tap(o, oy, ox, |ki, xi| f(xi, j, k[ki] * a[xi]));
                    }
                }
            }
            let per_channel = bias.as_ref().map_or(vec![0.0; geo.out_c], |b| b.data().to_vec());
            Ok((0..geo.out_c * plane).map(|j| per_channel[j / plane]).collect())
        }
        LayerKind::FrozenBatchNorm { .. } => {
            let (gain, offset) = layer.batchnorm_affine().unwrap();
            let per = a.len() / gain.len();
            for (i, &ai) in a.iter().enumerate() {
                f(i, i, gain[i / per] * ai);
            }
            Ok((0..a.len()).map(|i| offset[i / per]).collect())
        }
        _ => Err(Error::InvalidArgument(format!(
            "relevance messages need an affine layer, `{}` is {}",
            layer.name,
            layer.kind.tag()
        ))),
    }
}

/// `R_{i<-j} = z_{i->j} / (z_j + eps sign(z_j)) * R_j`.
///
/// The bias enters `z_j` but sends no message; its share stays in
/// [`RelevanceMessages::absorbed`].
pub fn lrp_messages(
    layer: &LayerSpec,
    lower_acts: &Tensor,
    upper_relevance: &Tensor,
    params: LrpParams,
) -> Result<RelevanceMessages> {
    let upper_shape = layer.output_shape(lower_acts.shape())?;
    if upper_relevance.shape() != upper_shape.as_slice() {
        return Err(Error::ShapeMismatch {
            context: format!("upper relevance of layer `{}`", layer.name),
            expected: upper_shape,
            found: upper_relevance.shape().to_vec(),
        });
    }
    let m: usize = upper_shape.iter().product();
    let mut z = vec![0.0; m];
    let bias = contributions(layer, lower_acts, |_, j, zij| z[j] += zij)?;
    for (zj, b) in z.iter_mut().zip(&bias) {
        *zj += b;
    }
    let r = upper_relevance.data();
    let mut scale = vec![0.0; m];
    for j in 0..m {
        if r[j] == 0.0 {
            continue;
        }
        if params.epsilon == 0.0 && z[j].abs() < DEGENERATE_Z {
            return Err(Error::DegenerateDenominator {
                layer: layer.name.clone(),
                unit: j,
            });
        }
        scale[j] = r[j] / params.stabilize(z[j]);
    }
    let mut edges = Vec::new();
    let mut passed = vec![0.0; m];
    contributions(layer, lower_acts, |i, j, zij| {
        if zij != 0.0 && scale[j] != 0.0 {
            let value = zij * scale[j];
            passed[j] += value;
            edges.push(Edge { lower: i, upper: j, value });
        }
    })?;
    let absorbed = r.iter().zip(&passed).map(|(rj, p)| rj - p).collect();
    Ok(RelevanceMessages {
        layer: layer.name.clone(),
        lower_shape: lower_acts.shape().to_vec(),
        upper_shape,
        edges,
        upper_relevance: r.to_vec(),
        z,
        absorbed,
    })
}

/// Node relevances `R_i = sum_j R_{i<-j}`, shaped like the lower layer.
pub fn lrp_aggregate(messages: &RelevanceMessages) -> Tensor {
    let mut out = Tensor::zeros(&messages.lower_shape);
    for e in &messages.edges {
        out.data_mut()[e.lower] += e.value;
    }
    out
}

/// Result of a multi-layer LRP pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LrpOutcome {
    /// Node relevances at the destination layer.
    pub relevance: Tensor,
    /// Initial relevance `A_k` of the target.
    pub start: f64,
    /// Relevance absorbed by biases and stabilizers on the way down.
    pub absorbed: f64,
}

/// Propagates relevance from the target neuron down to `to_layer`.
///
/// Affine layers use [`lrp_messages`]; ReLU and Flatten pass relevance
/// through; max pooling routes each output's relevance to its argmax;
/// global average pooling spreads each channel's relevance evenly.
pub fn lrp_backward(
    net: &Network,
    trace: &ForwardTrace,
    target: &NeuronTarget,
    to_layer: &str,
    params: LrpParams,
) -> Result<LrpOutcome> {
    let (from, to) = span(net, target, to_layer)?;
    let top = trace.at(to);
    let pos = target.locate(top)?;
    let start = top.data()[pos];
    let mut relevance = Tensor::zeros(top.shape());
    relevance.data_mut()[pos] = start;
    let mut absorbed = 0.0;
    for p in (from + 1..=to).rev() {
        let layer = &net.layers()[p - 1];
        let lower = trace.at(p - 1);
        relevance = match &layer.kind {
            k if k.is_affine() => {
                let msgs = lrp_messages(layer, lower, &relevance, params)?;
                absorbed += msgs.absorbed.iter().sum::<f64>();
                lrp_aggregate(&msgs)
            }
            LayerKind::Relu => relevance,
            LayerKind::Flatten => relevance.reshape(lower.shape().to_vec())?,
            LayerKind::MaxPool2d { window, stride } => {
                let mut out = Tensor::zeros(lower.shape());
                for (o, &r) in relevance.data().iter().enumerate() {
                    let src = maxpool_source(lower.shape(), relevance.shape(), *window, *stride, o, lower.data());
                    out.data_mut()[src] += r;
                }
                out
            }
            LayerKind::GlobalAvgPool => {
                let plane = lower.shape()[1] * lower.shape()[2];
                let r = relevance.data();
                let data = (0..lower.len()).map(|i| r[i / plane] / plane as f64).collect();
                Tensor::new(lower.shape().to_vec(), data)?
            }
            _ => unreachable!("affine kinds handled above"),
        };
    }
    relevance.ensure_finite("LRP relevance")?;
    Ok(LrpOutcome {
        relevance,
        start,
        absorbed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(w: &[f64], out: usize, inp: usize, b: Option<&[f64]>) -> LayerSpec {
        LayerSpec::new(
            "fc",
            LayerKind::Dense {
                weights: Tensor::new(vec![out, inp], w.to_vec()).unwrap(),
                bias: b.map(|b| Tensor::from_vec(b.to_vec())),
            },
        )
    }

    #[test]
    fn single_unit_messages() {
        let l = dense(&[1.0, 2.0], 1, 2, None);
        let m = lrp_messages(&l, &Tensor::from_vec(vec![3.0, 4.0]), &Tensor::from_vec(vec![11.0]), LrpParams::default())
            .unwrap();
        assert_eq!(m.to_dense().data(), &[3.0, 8.0]);
        assert_eq!(lrp_aggregate(&m).data(), &[3.0, 8.0]);
    }

    #[test]
    fn zero_relevance_gives_zero_messages() {
        let l = dense(&[1.0, 2.0, -1.0, 0.5], 2, 2, Some(&[0.3, -0.2]));
        let m = lrp_messages(&l, &Tensor::from_vec(vec![3.0, 4.0]), &Tensor::zeros(&[2]), LrpParams::default()).unwrap();
        assert!(m.to_dense().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn epsilon_sign_of_zero_is_positive() {
        // z_j = 2 - 2 = 0, denominator 0 + 0.1 => messages 2/0.1 and -2/0.1.
        let l = dense(&[1.0, -1.0], 1, 2, None);
        let m = lrp_messages(&l, &Tensor::from_vec(vec![2.0, 2.0]), &Tensor::from_vec(vec![1.0]), LrpParams::new(0.1).unwrap())
            .unwrap();
        let d = m.to_dense();
        assert!((d.data()[0] - 20.0).abs() < 1e-12);
        assert!((d.data()[1] + 20.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_denominator_names_unit() {
        let l = dense(&[1.0, -1.0], 1, 2, None);
        let err = lrp_messages(&l, &Tensor::from_vec(vec![2.0, 2.0]), &Tensor::from_vec(vec![1.0]), LrpParams::default())
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateDenominator { unit: 0, .. }));
    }

    #[test]
    fn aggregate_sums_rows() {
        let dense = Tensor::new(vec![2, 2], vec![1.0, 2.0, -1.0, 2.0]).unwrap();
        let m = RelevanceMessages::from_dense(&dense).unwrap();
        assert_eq!(lrp_aggregate(&m).data(), &[3.0, 1.0]);
    }

    #[test]
    fn rejects_non_affine() {
        let l = LayerSpec::new("r", LayerKind::Relu);
        assert!(lrp_messages(&l, &Tensor::from_vec(vec![1.0]), &Tensor::from_vec(vec![1.0]), LrpParams::default()).is_err());
        assert!(LrpParams::new(-1.0).is_err());
    }
}
