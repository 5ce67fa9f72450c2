use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::network::Network;

/// Activations recorded during one forward pass, input first.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    names: Vec<String>,
    outputs: Vec<Tensor>,
}

impl ForwardTrace {
    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn at(&self, pos: usize) -> &Tensor {
        &self.outputs[pos]
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.outputs[self.position(name)?])
    }

    pub fn input(&self) -> &Tensor {
        &self.outputs[0]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

pub fn forward(net: &Network, input: &Tensor) -> Result<ForwardTrace> {
    input.ensure_finite("network input")?;
    let outs = net.forward_range(0, net.layers().len(), input)?;
    let mut outputs = Vec::with_capacity(outs.len() + 1);
    outputs.push(input.clone());
    outputs.extend(outs);
    let names = (0..outputs.len()).map(|p| net.name_at(p).to_string()).collect();
    Ok(ForwardTrace { names, outputs })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    /// The unit itself; only valid for vector layers.
    Scalar,
    /// Maximum over the spatial positions of a `[C, H, W]` feature map.
    SpatialMax,
}

/// One neuron of one layer: unit `neuron` of a vector layer or channel
/// `neuron` of a feature map.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct NeuronTarget {
    pub layer: String,
    pub neuron: usize,
    pub reduction: Reduction,
}

impl NeuronTarget {
    pub fn scalar(layer: impl Into<String>, neuron: usize) -> Self {
        NeuronTarget {
            layer: layer.into(),
            neuron,
            reduction: Reduction::Scalar,
        }
    }

    pub fn spatial_max(layer: impl Into<String>, channel: usize) -> Self {
        NeuronTarget {
            layer: layer.into(),
            neuron: channel,
            reduction: Reduction::SpatialMax,
        }
    }

    /// Checks the target against a layer output shape.
    pub fn validate(&self, shape: &[usize]) -> Result<()> {
        match self.reduction {
            Reduction::Scalar => {
                if shape.len() != 1 {
                    return Err(Error::InvalidArgument(format!(
                        "scalar target on layer `{}` needs a vector layer, shape is {shape:?}",
                        self.layer
                    )));
                }
            }
            Reduction::SpatialMax => {
                if shape.len() != 3 {
                    return Err(Error::InvalidArgument(format!(
                        "spatial-max target on layer `{}` needs a [C, H, W] layer, shape is {shape:?}",
                        self.layer
                    )));
                }
            }
        }
        if self.neuron >= shape[0] {
            return Err(Error::IndexOutOfRange {
                context: format!("neuron of layer `{}`", self.layer),
                index: self.neuron,
                size: shape[0],
            });
        }
        Ok(())
    }

    /// Flat index into the layer output that carries the target activation.
    /// For spatial-max this is the first maximal position of the channel.
    pub fn locate(&self, output: &Tensor) -> Result<usize> {
        self.validate(output.shape())?;
        match self.reduction {
            Reduction::Scalar => Ok(self.neuron),
            Reduction::SpatialMax => {
                let plane = output.shape()[1] * output.shape()[2];
                let start = self.neuron * plane;
                let map = &output.data()[start..start + plane];
                let mut best = 0;
                for (i, &v) in map.iter().enumerate() {
                    if v > map[best] {
                        best = i;
                    }
                }
                Ok(start + best)
            }
        }
    }
}

/// Target activation together with the flat position it was read from.
pub fn neuron_activation_at(trace: &ForwardTrace, target: &NeuronTarget) -> Result<(f64, usize)> {
    let out = trace.get(&target.layer)?;
    let pos = target.locate(out)?;
    Ok((out.data()[pos], pos))
}

pub fn neuron_activation(trace: &ForwardTrace, target: &NeuronTarget) -> Result<f64> {
    neuron_activation_at(trace, target).map(|(v, _)| v)
}
