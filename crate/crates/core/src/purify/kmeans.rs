//! Seeded k-means: k-means++ seeding followed by Lloyd iterations on
//! squared Euclidean distance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    /// Stop once no centroid coordinate moves by this much or more.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        KMeansParams {
            k: 2,
            seed: 0,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            seed,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    /// `[k, d]`.
    pub centroids: Tensor,
    pub labels: Vec<usize>,
    /// Within-cluster sum of squares for `labels` against `centroids`.
    pub inertia: f64,
    /// Inertia after every assignment step, in order.
    pub inertia_trace: Vec<f64>,
    pub n_iter: usize,
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid row and its squared distance; ties go to the lower index.
pub fn nearest(centroids: &Tensor, row: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(centroids.row(c), row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn validate(matrix: &Tensor, params: &KMeansParams) -> Result<()> {
    matrix.require_matrix("k-means input")?;
    if params.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if params.k > matrix.rows() {
        return Err(Error::InvalidArgument(format!(
            "k = {} exceeds the number of rows ({})",
            params.k,
            matrix.rows()
        )));
    }
    if params.max_iter == 0 {
        return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
    }
    if !(params.tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be >= 0, got {}", params.tol)));
    }
    matrix.ensure_finite("k-means input")
}

/// k-means++ seeding: the first centroid uniformly, each further one with
/// probability proportional to its squared distance to the chosen set.
fn seed_centroids(matrix: &Tensor, k: usize, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let n = matrix.rows();
    let d = matrix.cols();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(matrix.row(i), matrix.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        if !(total > 0.0) {
            return Err(Error::KMeans(format!(
                "fewer than k = {k} distinct rows; cannot place {} centroids",
                chosen.len() + 1
            )));
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in dist.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if target < w {
                break;
            }
            target -= w;
        }
        let next = pick.expect("positive total implies a positive weight");
        chosen.push(next);
        for (i, slot) in dist.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(matrix.row(i), matrix.row(next)));
        }
    }
    let mut data = Vec::with_capacity(k * d);
    for &i in &chosen {
        data.extend_from_slice(matrix.row(i));
    }
    Tensor::new(vec![k, d], data)
}

/// Assigns every row, reseeding empty clusters at the point farthest from
/// its centroid until none are empty. Returns labels and inertia.
fn assign(matrix: &Tensor, centroids: &mut Tensor) -> Result<(Vec<usize>, f64)> {
    let n = matrix.rows();
    let k = centroids.rows();
    let d = centroids.cols();
    for _ in 0..=k {
        let (labels, dists): (Vec<usize>, Vec<f64>) = (0..n).map(|i| nearest(centroids, matrix.row(i))).unzip();
        let mut counts = vec![0usize; k];
        for &l in &labels {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return Ok((labels, dists.iter().sum()));
        };
        let mut far = 0;
        for (i, &v) in dists.iter().enumerate() {
            if v > dists[far] {
                far = i;
            }
        }
        if !(dists[far] > 0.0) {
            return Err(Error::KMeans(format!(
                "cluster {empty} is empty and every row coincides with its centroid"
            )));
        }
        centroids.data_mut()[empty * d..(empty + 1) * d].copy_from_slice(matrix.row(far));
    }
    Err(Error::KMeans("empty-cluster repair did not converge".into()))
}

fn update(matrix: &Tensor, labels: &[usize], k: usize) -> Tensor {
    let d = matrix.cols();
    let mut sums = vec![0.0; k * d];
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        counts[l] += 1;
        for (s, v) in sums[l * d..(l + 1) * d].iter_mut().zip(matrix.row(i)) {
            *s += v;
        }
    }
    for (c, &count) in counts.iter().enumerate() {
        for s in &mut sums[c * d..(c + 1) * d] {
            *s /= count as f64;
        }
    }
    Tensor::new(vec![k, d], sums).expect("k x d centroid matrix")
}

/// Deterministic given `(matrix, params)`; runs single-threaded.
pub fn kmeans_fit(matrix: &Tensor, params: &KMeansParams) -> Result<KMeansFit> {
    validate(matrix, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = seed_centroids(matrix, params.k, &mut rng)?;
    let mut trace = Vec::new();
    let mut n_iter = 0;
    while n_iter < params.max_iter {
        let (labels, inertia) = assign(matrix, &mut centroids)?;
        trace.push(inertia);
        let next = update(matrix, &labels, params.k);
        let shift = next
            .data()
            .iter()
            .zip(centroids.data())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        centroids = next;
        n_iter += 1;
        if shift < params.tol {
            break;
        }
    }
    let (labels, inertia) = assign(matrix, &mut centroids)?;
    trace.push(inertia);
    Ok(KMeansFit {
        centroids,
        labels,
        inertia,
        inertia_trace: trace,
        n_iter,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Tensor {
        Tensor::new(vec![values.len(), 1], values.to_vec()).unwrap()
    }

    #[test]
    fn separates_two_groups() {
        let fit = kmeans_fit(&column(&[0.0, 0.1, 10.0, 10.1]), &KMeansParams::new(2, 7)).unwrap();
        let mut cents: Vec<f64> = fit.centroids.data().to_vec();
        cents.sort_by(f64::total_cmp);
        assert!((cents[0] - 0.05).abs() < 1e-12 && (cents[1] - 10.05).abs() < 1e-12);
        assert_eq!(fit.labels[0], fit.labels[1]);
        assert_eq!(fit.labels[2], fit.labels[3]);
        assert_ne!(fit.labels[0], fit.labels[2]);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let m = Tensor::from_rows(&[vec![1.0, 0.0], vec![3.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let fit = kmeans_fit(&m, &KMeansParams::new(1, 0)).unwrap();
        assert_eq!(fit.centroids.data(), &[2.0, 2.0]);
        // Per-column population variance times n: (2 + 8) = 10.
        assert!((fit.inertia - 10.0).abs() < 1e-12);
    }

    #[test]
    fn k_equal_n_has_zero_inertia() {
        let fit = kmeans_fit(&column(&[3.0, -1.0, 4.0, 1.5]), &KMeansParams::new(4, 3)).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut labels = fit.labels.clone();
        labels.sort();
        assert_eq!(labels, vec![0, 1, 2, 3]);
    }

    #[test]
    fn argument_errors() {
        let m = column(&[1.0, 2.0]);
        assert!(kmeans_fit(&m, &KMeansParams::new(3, 0)).is_err());
        assert!(kmeans_fit(&m, &KMeansParams::new(0, 0)).is_err());
        assert!(kmeans_fit(&column(&[1.0, f64::NAN]), &KMeansParams::new(1, 0)).is_err());
        assert!(matches!(
            kmeans_fit(&column(&[1.0, 1.0, 1.0]), &KMeansParams::new(2, 0)),
            Err(Error::KMeans(_))
        ));
    }

    #[test]
    fn nearest_breaks_ties_low() {
        let c = Tensor::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        assert_eq!(nearest(&c, &[0.0]).0, 0);
        assert_eq!(nearest(&c, &[1.0]).0, 1);
    }
}
