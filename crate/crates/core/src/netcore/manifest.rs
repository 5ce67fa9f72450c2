//! JSON network manifests whose parameters live in sibling `.nt` files.
//!
//! ```json
//! {
//!   "input_shape": [1, 8, 8],
//!   "layers": [
//!     {"name": "conv1", "kind": "conv2d", "kernels": "conv1.kernels.nt", "stride": 1, "padding": 1},
//!     {"name": "relu1", "kind": "relu"},
//!     {"name": "pool", "kind": "global_avg_pool"}
//!   ]
//! }
//! ```
//!
//! Tensor paths are resolved relative to the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ntfile;
use crate::tensor::Tensor;

use super::layer::{LayerKind, LayerSpec};
use super::network::Network;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    input_shape: Vec<usize>,
    layers: Vec<RawLayer>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    name: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernels: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bias: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shift: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mean: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variance: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
}

struct Loader<'a> {
    dir: &'a Path,
    layer: &'a RawLayer,
}

impl Loader<'_> {
    fn required<T: Clone>(&self, field: &str, value: &Option<T>) -> Result<T> {
        value.clone().ok_or_else(|| {
            Error::InvalidNetwork(format!(
                "layer `{}` ({}) is missing field `{field}`",
                self.layer.name, self.layer.kind
            ))
        })
    }

    fn tensor(&self, field: &str, value: &Option<String>) -> Result<Tensor> {
        let rel = self.required(field, value)?;
        ntfile::read(&self.dir.join(rel))
    }

    fn optional_tensor(&self, value: &Option<String>) -> Result<Option<Tensor>> {
        value
            .as_ref()
            .map(|rel| ntfile::read(&self.dir.join(rel)))
            .transpose()
    }

    fn build(&self) -> Result<LayerSpec> {
        let l = self.layer;
        let kind = match l.kind.as_str() {
            "dense" => LayerKind::Dense {
                weights: self.tensor("weights", &l.weights)?,
                bias: self.optional_tensor(&l.bias)?,
            },
            "conv2d" => LayerKind::Conv2d {
                kernels: self.tensor("kernels", &l.kernels)?,
                bias: self.optional_tensor(&l.bias)?,
                stride: l.stride.unwrap_or(1),
                padding: l.padding.unwrap_or(0),
            },
            "relu" => LayerKind::Relu,
            "maxpool2d" => {
                let window = self.required("window", &l.window)?;
                LayerKind::MaxPool2d {
                    window,
                    stride: l.stride.unwrap_or(window),
                }
            }
            "global_avg_pool" => LayerKind::GlobalAvgPool,
            "flatten" => LayerKind::Flatten,
            "frozen_batchnorm" => LayerKind::FrozenBatchNorm {
                scale: self.tensor("scale", &l.scale)?,
                shift: self.tensor("shift", &l.shift)?,
                mean: self.tensor("mean", &l.mean)?,
                variance: self.tensor("variance", &l.variance)?,
                epsilon: l.epsilon.unwrap_or(1e-5),
            },
            other => {
                return Err(Error::UnknownLayerKind {
                    layer: l.name.clone(),
                    kind: other.to_string(),
                })
            }
        };
        Ok(LayerSpec::new(l.name.clone(), kind))
    }
}

/// Loads and validates a network manifest.
pub fn load_network(path: &Path) -> Result<Network> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: RawNetwork = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let layers = raw
        .layers
        .iter()
        .map(|layer| Loader { dir, layer }.build())
        .collect::<Result<Vec<_>>>()?;
    Network::new(raw.input_shape, layers)
}

fn file_stem(index: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{index:02}_{clean}")
}

/// Writes `net` as a manifest at `path` with its tensors next to it.
pub fn save_network(net: &Network, path: &Path) -> Result<()> {
    let dir: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut layers = Vec::with_capacity(net.layers().len());
    for (i, layer) in net.layers().iter().enumerate() {
        let stem = file_stem(i, &layer.name);
        let put = |field: &str, t: &Tensor| -> Result<Option<String>> {
            let rel = format!("{stem}.{field}.nt");
            ntfile::write(&dir.join(&rel), t)?;
            Ok(Some(rel))
        };
        let mut raw = RawLayer {
            name: layer.name.clone(),
            kind: layer.kind.tag().to_string(),
            ..RawLayer::default()
        };
        match &layer.kind {
            LayerKind::Dense { weights, bias } => {
                raw.weights = put("weights", weights)?;
                if let Some(b) = bias {
                    raw.bias = put("bias", b)?;
                }
            }
            LayerKind::Conv2d {
                kernels,
                bias,
                stride,
                padding,
            } => {
                raw.kernels = put("kernels", kernels)?;
                if let Some(b) = bias {
                    raw.bias = put("bias", b)?;
                }
                raw.stride = Some(*stride);
                raw.padding = Some(*padding);
            }
            LayerKind::MaxPool2d { window, stride } => {
                raw.window = Some(*window);
                raw.stride = Some(*stride);
            }
            LayerKind::FrozenBatchNorm {
                scale,
                shift,
                mean,
                variance,
                epsilon,
            } => {
                raw.scale = put("scale", scale)?;
                raw.shift = put("shift", shift)?;
                raw.mean = put("mean", mean)?;
                raw.variance = put("variance", variance)?;
                raw.epsilon = Some(*epsilon);
            }
            LayerKind::Relu | LayerKind::GlobalAvgPool | LayerKind::Flatten => {}
        }
        layers.push(raw);
    }
    let raw = RawNetwork {
        input_shape: net.input_shape().to_vec(),
        layers,
    };
    let text = serde_json::to_string_pretty(&raw).expect("manifest serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
