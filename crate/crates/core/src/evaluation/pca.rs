//! Principal component projection for 2-D views of attribution vectors.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Singular values below this fraction of the largest count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaProjection {
    /// `[n, dims]` projected coordinates.
    #[serde(skip)]
    pub scores: Tensor,
    /// `[dims, d]` unit principal axes (zero rows past the data rank).
    #[serde(skip)]
    pub components: Tensor,
    /// Share of total variance per returned component.
    pub explained_variance_ratio: Vec<f64>,
    /// Set when the centred data has rank below `dims`; the missing
    /// components are zero.
    pub rank_deficient: bool,
}

/// Projects mean-centred rows onto their top `dims` right singular vectors.
/// Each axis is oriented so its largest-magnitude loading is positive.
pub fn pca_project(matrix: &Tensor, dims: usize) -> Result<PcaProjection> {
    matrix.require_matrix("PCA input")?;
    let (n, d) = (matrix.rows(), matrix.cols());
    if dims == 0 {
        return Err(Error::InvalidArgument("PCA needs at least one component".into()));
    }
    if n < dims {
        return Err(Error::InvalidArgument(format!("PCA with {dims} components needs at least {dims} rows, got {n}")));
    }
    matrix.ensure_finite("PCA input")?;

    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(matrix.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centred = DMatrix::from_fn(n, d, |i, j| matrix.get2(i, j) - mean[j]);
    let svd = centred.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let top = order.first().map_or(0.0, |&i| svd.singular_values[i]);
    let mut components = vec![0.0; dims * d];
    let mut ratios = vec![0.0; dims];
    let mut rank = 0;
    for (c, &idx) in order.iter().take(dims).enumerate() {
        let s = svd.singular_values[idx];
        if !(s > RANK_TOL * top) || top == 0.0 {
            break;
        }
        rank += 1;
        let mut axis: Vec<f64> = v_t.row(idx).iter().copied().collect();
        let lead = axis
            .iter()
            .enumerate()
            .fold(0, |best, (j, v)| if v.abs() > axis[best].abs() { j } else { best });
        if axis[lead] < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        components[c * d..(c + 1) * d].copy_from_slice(&axis);
        ratios[c] = s * s / total;
    }

    let mut scores = vec![0.0; n * dims];
    for i in 0..n {
        for c in 0..dims {
            scores[i * dims + c] = (0..d).map(|j| centred[(i, j)] * components[c * d + j]).sum();
        }
    }
    Ok(PcaProjection {
        scores: Tensor::new(vec![n, dims], scores)?,
        components: Tensor::new(vec![dims, d], components)?,
        explained_variance_ratio: ratios,
        rank_deficient: rank < dims,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_in_3d_is_one_component() {
        let rows: Vec<Vec<f64>> = (0..6).map(|t| vec![t as f64, 2.0 * t as f64, -(t as f64)]).collect();
        let p = pca_project(&Tensor::from_rows(&rows).unwrap(), 2).unwrap();
        assert!((p.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        assert!(p.rank_deficient);
        assert_eq!(p.components.row(1), &[0.0, 0.0, 0.0]);
        // Largest loading (the y axis) is positive.
        assert!(p.components.get2(0, 1) > 0.0);
    }

    #[test]
    fn guards() {
        assert!(pca_project(&Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap(), 2).is_err());
        let same = Tensor::from_rows(&vec![vec![1.0, 1.0]; 3]).unwrap();
        let p = pca_project(&same, 2).unwrap();
        assert!(p.rank_deficient);
        assert!(p.scores.data().iter().all(|&v| v == 0.0));
    }
}
