use std::path::Path;

use crate::dataset::{read_ids, write_ids};
use crate::error::{Error, Result};
use crate::ntfile;
use crate::tensor::Tensor;

/// Per-sample embedding vectors, e.g. produced by an external image model.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub ids: Vec<String>,
    /// `[n_samples, d]`.
    pub vectors: Tensor,
    pub source: String,
}

impl EmbeddingSet {
    pub fn new(ids: Vec<String>, vectors: Tensor, source: impl Into<String>) -> Result<Self> {
        vectors.require_matrix("embedding set")?;
        if ids.len() != vectors.rows() {
            return Err(Error::DimensionMismatch {
                expected: vectors.rows(),
                found: ids.len(),
            });
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
            return Err(Error::InvalidArgument(format!("duplicate embedding id `{dup}`")));
        }
        vectors.ensure_finite("embedding rows")?;
        Ok(EmbeddingSet {
            ids,
            vectors,
            source: source.into(),
        })
    }

    /// Loads `path` (an `[n, d]` `.nt` matrix) and the id list next to it:
    /// `ids_path` if given, else `ids.tsv` in the same directory. Without an
    /// id file, rows are numbered.
    pub fn load(path: &Path, ids_path: Option<&Path>, source: &str) -> Result<Self> {
        let vectors = ntfile::read(path)?;
        vectors.require_matrix("embedding file")?;
        let default_ids = path.parent().unwrap_or_else(|| Path::new(".")).join("ids.tsv");
        let ids = match ids_path {
            Some(p) => first_column(read_ids(p)?),
            None if default_ids.exists() => first_column(read_ids(&default_ids)?),
            None => {
                let width = vectors.rows().saturating_sub(1).to_string().len();
                (0..vectors.rows()).map(|i| format!("{i:0width$}")).collect()
            }
        };
        EmbeddingSet::new(ids, vectors, source)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        ntfile::write(path, &self.vectors)?;
        let ids = path.parent().unwrap_or_else(|| Path::new(".")).join("ids.tsv");
        write_ids(&ids, &self.ids)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn first_column(lines: Vec<String>) -> Vec<String> {
    lines
        .into_iter()
        .map(|l| l.split('\t').next().unwrap_or("").to_string())
        .collect()
}

/// Symmetric `n x n` matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates symmetry, zero diagonal and non-negativity.
    pub fn from_full(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::InvalidArgument(format!("distance matrix diagonal entry {i} is nonzero")));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !v.is_finite() || v < 0.0 || v != data[j * n + i] {
                    return Err(Error::InvalidArgument(format!(
                        "distance matrix entry ({i}, {j}) breaks symmetry or non-negativity"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { n, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Entries `(i, j)` with `i < j`, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * (self.n - 1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> DistanceMatrix {
        DistanceMatrix {
            n: self.n,
            data: self.data.iter().map(|v| v * alpha).collect(),
        }
    }
}

/// Euclidean distances between all rows of an `[n, d]` matrix.
pub fn pairwise_euclidean_rows(vectors: &Tensor) -> Result<DistanceMatrix> {
    vectors.require_matrix("pairwise distances")?;
    let n = vectors.rows();
    if n < 2 {
        return Err(Error::InvalidArgument("pairwise distances need at least two rows".into()));
    }
    vectors.ensure_finite("embedding rows")?;
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = vectors
                .row(i)
                .iter()
                .zip(vectors.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            data[i * n + j] = d;
            data[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, data })
}

pub fn pairwise_euclidean(emb: &EmbeddingSet) -> Result<DistanceMatrix> {
    pairwise_euclidean_rows(&emb.vectors)
}
