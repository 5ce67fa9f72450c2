//! Fitted circuit clusters ("virtual neurons") and their on-disk form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attribution::{Aggregation, Method};
use crate::error::{Error, Result};
use crate::netcore::NeuronTarget;
use crate::ntfile;
use crate::tensor::Tensor;

use super::kmeans::{nearest, sq_dist, KMeansFit, KMeansParams};

/// What the clustered row vectors are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FeatureSource {
    /// Lower-layer attributions of the target neuron.
    Attribution { method: Method, aggregation: Aggregation },
    /// Raw layer activations (spatial maximum per channel for feature maps).
    Activation,
}

/// Optional row transforms applied before clustering and before assignment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    /// Scale every row to unit L2 norm (zero rows stay zero).
    pub row_norm: bool,
    /// Per-column `(mean, std)` for standardization, fitted on the reference rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardize: Option<ColumnStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Preprocessing {
    /// Fits the transform on `matrix` and returns it with the transformed rows.
    pub fn fit(matrix: &Tensor, row_norm: bool, standardize: bool) -> Result<(Self, Tensor)> {
        matrix.require_matrix("preprocessing input")?;
        let mut pre = Preprocessing {
            row_norm,
            standardize: None,
        };
        let mut out = matrix.clone();
        if row_norm {
            let c = out.cols();
            for row in out.data_mut().chunks_exact_mut(c) {
                normalize_row(row);
            }
        }
        if standardize {
            let (n, c) = (out.rows(), out.cols());
            let mut mean = vec![0.0; c];
            for i in 0..n {
                for (m, v) in mean.iter_mut().zip(out.row(i)) {
                    *m += v / n as f64;
                }
            }
            let mut std = vec![0.0; c];
            for i in 0..n {
                for ((s, v), m) in std.iter_mut().zip(out.row(i)).zip(&mean) {
                    *s += (v - m) * (v - m) / n as f64;
                }
            }
            let std: Vec<f64> = std.iter().map(|s| if *s > 0.0 { s.sqrt() } else { 1.0 }).collect();
            let stats = ColumnStats { mean, std };
            for row in out.data_mut().chunks_exact_mut(c) {
                stats.apply(row);
            }
            pre.standardize = Some(stats);
        }
        Ok((pre, out))
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        let mut r = row.to_vec();
        if self.row_norm {
            normalize_row(&mut r);
        }
        if let Some(stats) = &self.standardize {
            stats.apply(&mut r);
        }
        r
    }

    pub fn is_identity(&self) -> bool {
        !self.row_norm && self.standardize.is_none()
    }
}

impl ColumnStats {
    fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }
}

fn normalize_row(row: &mut [f64]) {
    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in row {
            *v /= norm;
        }
    }
}

/// k-means centroids over a neuron's reference rows; each centroid is one
/// virtual neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitModel {
    pub target: NeuronTarget,
    /// Layer whose units span the clustered vectors.
    pub layer: String,
    pub source: FeatureSource,
    pub preprocessing: Preprocessing,
    pub params: KMeansParams,
    /// `[k, n]`, in the preprocessed space.
    pub centroids: Tensor,
    /// Cluster of each reference sample, in reference order.
    pub labels: Vec<usize>,
    pub sample_ids: Vec<String>,
    pub inertia: f64,
    pub inertia_trace: Vec<f64>,
}

/// Nearest centroid for one vector, with the distance to every centroid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assignment {
    pub cluster: usize,
    pub distances: Vec<f64>,
}

impl CircuitModel {
    pub(crate) fn from_fit(
        target: NeuronTarget,
        layer: String,
        source: FeatureSource,
        preprocessing: Preprocessing,
        params: KMeansParams,
        sample_ids: Vec<String>,
        fit: KMeansFit,
    ) -> Self {
        CircuitModel {
            target,
            layer,
            source,
            preprocessing,
            params,
            centroids: fit.centroids,
            labels: fit.labels,
            sample_ids,
            inertia: fit.inertia,
            inertia_trace: fit.inertia_trace,
        }
    }

    pub fn k(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }
}

/// Routes a vector to the closest centroid (Euclidean, ties to the lower index).
pub fn assign_circuit(model: &CircuitModel, values: &[f64]) -> Result<Assignment> {
    if values.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("vector to assign".into()));
    }
    let row = model.preprocessing.apply(values);
    let (cluster, _) = nearest(&model.centroids, &row);
    let distances = (0..model.k()).map(|c| sq_dist(model.centroids.row(c), &row).sqrt()).collect();
    Ok(Assignment { cluster, distances })
}

pub const MODEL_FILE: &str = "circuit_model.json";
pub const CENTROIDS_FILE: &str = "centroids.nt";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    target: NeuronTarget,
    layer: String,
    source: FeatureSource,
    preprocessing: Preprocessing,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
    dim: usize,
    centroids: String,
    inertia: f64,
    inertia_trace: Vec<f64>,
    sample_ids: Vec<String>,
    labels: Vec<usize>,
}

/// Writes `circuit_model.json` and `centroids.nt` into `dir`.
pub fn save_model(model: &CircuitModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    ntfile::write(&dir.join(CENTROIDS_FILE), &model.centroids)?;
    let file = ModelFile {
        target: model.target.clone(),
        layer: model.layer.clone(),
        source: model.source.clone(),
        preprocessing: model.preprocessing.clone(),
        k: model.k(),
        seed: model.params.seed,
        max_iter: model.params.max_iter,
        tol: model.params.tol,
        dim: model.dim(),
        centroids: CENTROIDS_FILE.to_string(),
        inertia: model.inertia,
        inertia_trace: model.inertia_trace.clone(),
        sample_ids: model.sample_ids.clone(),
        labels: model.labels.clone(),
    };
    let path = dir.join(MODEL_FILE);
    let text = serde_json::to_string_pretty(&file).expect("model serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Loads a model from its JSON file (centroids resolved next to it).
pub fn load_model(path: &Path) -> Result<CircuitModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let centroids = ntfile::read(&dir.join(&file.centroids))?;
    if centroids.shape() != [file.k, file.dim] {
        return Err(Error::ShapeMismatch {
            context: "centroid matrix".into(),
            expected: vec![file.k, file.dim],
            found: centroids.shape().to_vec(),
        });
    }
    if file.labels.iter().any(|&l| l >= file.k) || file.labels.len() != file.sample_ids.len() {
        return Err(Error::InvalidArgument(format!(
            "{}: labels inconsistent with k or sample ids",
            path.display()
        )));
    }
    Ok(CircuitModel {
        target: file.target,
        layer: file.layer,
        source: file.source,
        preprocessing: file.preprocessing,
        params: KMeansParams {
            k: file.k,
            seed: file.seed,
            max_iter: file.max_iter,
            tol: file.tol,
        },
        centroids,
        labels: file.labels,
        sample_ids: file.sample_ids,
        inertia: file.inertia,
        inertia_trace: file.inertia_trace,
    })
}
