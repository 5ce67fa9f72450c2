use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::layer::{LayerKind, LayerSpec};

/// Name under which the network input appears in a trace.
pub const INPUT: &str = "input";

/// Validated sequential network. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    // shapes[0] is the input shape, shapes[i + 1] the output of layers[i].
    shapes: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(input_shape: Vec<usize>, layers: Vec<LayerSpec>) -> Result<Self> {
        if input_shape.is_empty() || input_shape.contains(&0) {
            return Err(Error::InvalidNetwork(format!(
                "input shape {input_shape:?} must be non-empty with positive entries"
            )));
        }
        let mut names = HashSet::new();
        names.insert(INPUT);
        let mut shapes = vec![input_shape.clone()];
        for layer in &layers {
            if layer.name.is_empty() {
                return Err(Error::InvalidNetwork("layer with empty name".into()));
            }
            if !names.insert(layer.name.as_str()) {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate layer name `{}`",
                    layer.name
                )));
            }
            let next = layer.output_shape(shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(Network {
            input_shape,
            layers,
            shapes,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Statically derived output shape at trace position `pos`.
    pub fn shape_at(&self, pos: usize) -> &[usize] {
        &self.shapes[pos]
    }

    pub fn shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    /// Position in a trace: 0 for the input, `i + 1` for layer `i`.
    pub fn position(&self, name: &str) -> Result<usize> {
        if name == INPUT {
            return Ok(0);
        }
        self.layers
            .iter()
            .position(|l| l.name == name)
            .map(|i| i + 1)
            .ok_or_else(|| Error::UnknownLayer(name.to_string()))
    }

    pub fn name_at(&self, pos: usize) -> &str {
        if pos == 0 {
            INPUT
        } else {
            &self.layers[pos - 1].name
        }
    }

    /// Nearest layer before `name` whose output is a set of post-nonlinearity
    /// units (ReLU, max pooling or global average pooling); the input if none.
    pub fn default_attribution_layer(&self, name: &str) -> Result<String> {
        let pos = self.position(name)?;
        for p in (1..pos).rev() {
            if matches!(
                self.layers[p - 1].kind,
                LayerKind::Relu | LayerKind::MaxPool2d { .. } | LayerKind::GlobalAvgPool
            ) {
                return Ok(self.layers[p - 1].name.clone());
            }
        }
        Ok(INPUT.to_string())
    }

    /// Runs layers at trace positions `from + 1 ..= to` starting from the
    /// activation at position `from`; returns their outputs in order.
    pub fn forward_range(&self, from: usize, to: usize, start: &Tensor) -> Result<Vec<Tensor>> {
        if start.shape() != self.shapes[from].as_slice() {
            return Err(Error::ShapeMismatch {
                context: format!("activation of `{}`", self.name_at(from)),
                expected: self.shapes[from].clone(),
                found: start.shape().to_vec(),
            });
        }
        let mut outs: Vec<Tensor> = Vec::with_capacity(to.saturating_sub(from));
        for layer in &self.layers[from..to] {
            let next = layer.forward(outs.last().unwrap_or(start))?;
            outs.push(next);
        }
        Ok(outs)
    }

    /// Number of parameters (weights, biases, batchnorm statistics).
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match &l.kind {
                LayerKind::Dense { weights, bias } => weights.len() + bias.as_ref().map_or(0, |b| b.len()),
                LayerKind::Conv2d { kernels, bias, .. } => {
                    kernels.len() + bias.as_ref().map_or(0, |b| b.len())
                }
                LayerKind::FrozenBatchNorm { scale, .. } => 4 * scale.len(),
                _ => 0,
            })
            .sum()
    }
}
