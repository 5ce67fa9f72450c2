//! Correlation between two distance matrices over the same samples, with a
//! standard error from disjoint partitions of the pair list.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::distance::DistanceMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationKind {
    #[default]
    Pearson,
    /// Pearson on average ranks.
    Spearman,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationOptions {
    pub kind: CorrelationKind,
    pub partitions: usize,
    /// Seed for shuffling pairs before partitioning.
    pub seed: u64,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions {
            kind: CorrelationKind::Pearson,
            partitions: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Correlation over all pairs `i < j`.
    pub r: f64,
    /// Standard deviation of the per-partition correlations over
    /// `sqrt(partitions)`. Absent when a partition holds fewer than three
    /// pairs or has no variance.
    pub sem: Option<f64>,
    /// Mean of the per-partition correlations, when `sem` is defined.
    pub partition_mean: Option<f64>,
    pub n_pairs: usize,
    pub partitions: usize,
    pub kind: CorrelationKind,
}

/// Pearson correlation; errors on zero variance in either input.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if !(va > 0.0) {
        return Err(Error::ZeroVariance("first distance set".into()));
    }
    if !(vb > 0.0) {
        return Err(Error::ZeroVariance("second distance set".into()));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Average ranks (ties share the mean of their positions), 1-based.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && v[order[end + 1]] == v[order[start]] {
            end += 1;
        }
        let rank = (start + end) as f64 / 2.0 + 1.0;
        for &i in &order[start..=end] {
            out[i] = rank;
        }
        start = end + 1;
    }
    out
}

fn correlate(kind: CorrelationKind, a: &[f64], b: &[f64]) -> Result<f64> {
    match kind {
        CorrelationKind::Pearson => pearson(a, b),
        CorrelationKind::Spearman => pearson(&ranks(a), &ranks(b)),
    }
}

pub fn distance_correlation(da: &DistanceMatrix, db: &DistanceMatrix, opts: &CorrelationOptions) -> Result<CorrelationReport> {
    if da.n() != db.n() {
        return Err(Error::DimensionMismatch {
            expected: da.n(),
            found: db.n(),
        });
    }
    if da.n() < 3 {
        return Err(Error::InvalidArgument("distance correlation needs n >= 3".into()));
    }
    if opts.partitions == 0 {
        return Err(Error::InvalidArgument("partition count must be at least 1".into()));
    }
    let a = da.upper_triangle();
    let b = db.upper_triangle();
    let r = correlate(opts.kind, &a, &b)?;

    let mut order: Vec<usize> = (0..a.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.seed));
    let size = a.len() / opts.partitions;
    let mut per_part = Vec::with_capacity(opts.partitions);
    if size >= 3 {
        for block in order.chunks_exact(size).take(opts.partitions) {
            let pa: Vec<f64> = block.iter().map(|&i| a[i]).collect();
            let pb: Vec<f64> = block.iter().map(|&i| b[i]).collect();
            match correlate(opts.kind, &pa, &pb) {
                Ok(v) => per_part.push(v),
                Err(Error::ZeroVariance(_)) => break,
                Err(e) => return Err(e),
            }
        }
    }
    let (sem, partition_mean) = if per_part.len() == opts.partitions && opts.partitions >= 2 {
        let p = opts.partitions as f64;
        let mean = per_part.iter().sum::<f64>() / p;
        let var = per_part.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (p - 1.0);
        (Some(var.sqrt() / p.sqrt()), Some(mean))
    } else {
        (None, None)
    };
    Ok(CorrelationReport {
        r,
        sem,
        partition_mean,
        n_pairs: a.len(),
        partitions: opts.partitions,
        kind: opts.kind,
    })
}
