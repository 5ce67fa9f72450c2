use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::purify::{kmeans_fit, KMeansParams};

use super::distance::{DistanceMatrix, EmbeddingSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    labels: Vec<usize>,
    k: usize,
}

impl ClusterLabels {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::IndexOutOfRange {
                context: "cluster label".into(),
                index: bad,
                size: k,
            });
        }
        Ok(ClusterLabels { labels, k })
    }

    /// Uses `max(label) + 1` as `k`.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |m| m + 1);
        ClusterLabels { labels, k }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparabilityReport {
    pub rho_intra: f64,
    pub rho_inter: f64,
    /// `rho_inter - rho_intra`.
    pub score: f64,
    /// Mean distance over all ordered pairs `i != j`.
    pub overall: f64,
}

/// Mean same-cluster and cross-cluster distances over ordered pairs `i != j`.
pub fn intra_inter(d: &DistanceMatrix, labels: &ClusterLabels) -> Result<SeparabilityReport> {
    let n = d.n();
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let c = labels.labels();
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            if c[i] == c[j] {
                intra += d.get(i, j);
                n_intra += 1;
            } else {
                inter += d.get(i, j);
                n_inter += 1;
            }
        }
    }
    if n_intra == 0 {
        return Err(Error::Undefined(
            "intra-cluster distance: no two samples share a cluster".into(),
        ));
    }
    if n_inter == 0 {
        return Err(Error::Undefined(
            "inter-cluster distance: all samples are in one cluster".into(),
        ));
    }
    let rho_intra = intra / n_intra as f64;
    let rho_inter = inter / n_inter as f64;
    Ok(SeparabilityReport {
        rho_intra,
        rho_inter,
        score: rho_inter - rho_intra,
        overall: (intra + inter) / (n_intra + n_inter) as f64,
    })
}

/// k-means on embedding rows with the same determinism contract as the
/// circuit clustering.
pub fn cluster_embeddings(emb: &EmbeddingSet, k: usize, seed: u64) -> Result<ClusterLabels> {
    let fit = kmeans_fit(&emb.vectors, &KMeansParams::new(k, seed))?;
    ClusterLabels::new(fit.labels, k)
}

/// Fraction of samples in the majority ground-truth class of their cluster.
pub fn purity(labels: &ClusterLabels, truth: &ClusterLabels) -> Result<f64> {
    if labels.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            found: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("purity of an empty labelling".into()));
    }
    let mut counts = vec![0usize; labels.k() * truth.k()];
    for (&l, &t) in labels.labels().iter().zip(truth.labels()) {
        counts[l * truth.k() + t] += 1;
    }
    let hits: usize = counts
        .chunks(truth.k().max(1))
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / labels.len() as f64)
}
