use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::NeuronTarget;
use crate::ntfile;
use crate::tensor::Tensor;

use super::lrp::LrpParams;

/// How a lower-layer relevance tensor becomes one entry per unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// `[C, H, W]` maps are summed over positions: one entry per channel.
    /// Vector layers are left as they are.
    #[default]
    ChannelSum,
    /// Every element is its own entry.
    Flatten,
}

impl Aggregation {
    pub fn apply(&self, t: &Tensor) -> Vec<f64> {
        match self {
            Aggregation::ChannelSum if t.ndim() == 3 => {
                let plane = t.shape()[1] * t.shape()[2];
                t.data().chunks_exact(plane).map(|c| c.iter().sum()).collect()
            }
            _ => t.data().to_vec(),
        }
    }

    /// Number of entries produced for a layer of the given shape.
    pub fn width(&self, shape: &[usize]) -> usize {
        match self {
            Aggregation::ChannelSum if shape.len() == 3 => shape[0],
            _ => shape.iter().product(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Method {
    /// `R_i = A_i * dA_k / dA_i`.
    #[default]
    GradAct,
    /// Epsilon-LRP.
    Lrp(LrpParams),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::GradAct => "gradact",
            Method::Lrp(_) => "lrp",
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Method::GradAct => None,
            Method::Lrp(p) => Some(p.epsilon),
        }
    }
}

/// Relevances of all units of `at_layer` for one target neuron on one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionVector {
    pub target: NeuronTarget,
    pub at_layer: String,
    pub method: Method,
    pub aggregation: Aggregation,
    pub values: Vec<f64>,
}

impl AttributionVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// JSON sidecar describing an attribution matrix stored as `.nt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMeta {
    pub target: NeuronTarget,
    pub layer: String,
    pub aggregation: Aggregation,
    pub method: String,
    pub epsilon: Option<f64>,
    pub sample_ids: Vec<String>,
}

/// Writes `<stem>.nt` (the `[n_samples, n]` matrix) and `<stem>.json`.
pub fn save_batch(stem: &Path, matrix: &Tensor, meta: &AttributionMeta) -> Result<()> {
    matrix.require_matrix("attribution batch")?;
    if meta.sample_ids.len() != matrix.rows() {
        return Err(Error::DimensionMismatch {
            expected: matrix.rows(),
            found: meta.sample_ids.len(),
        });
    }
    ntfile::write(&stem.with_extension("nt"), matrix)?;
    let json = stem.with_extension("json");
    let text = serde_json::to_string_pretty(meta).expect("metadata serializes");
    fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))
}

pub fn load_batch(stem: &Path) -> Result<(Tensor, AttributionMeta)> {
    let matrix = ntfile::read(&stem.with_extension("nt"))?;
    let json = stem.with_extension("json");
    let text = fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
    let meta = serde_json::from_str(&text).map_err(|e| Error::Json { path: json, source: e })?;
    Ok((matrix, meta))
}
