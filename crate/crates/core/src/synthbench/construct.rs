use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::netcore::{LayerKind, LayerSpec, Network, NeuronTarget};
use crate::tensor::Tensor;

/// Input layout of generated samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Geometry {
    /// Dense random orthonormal templates in `R^dim`.
    Vector { dim: usize },
    /// Templates occupy disjoint rectangular cells of a `c x h x w` image.
    Image { channels: usize, height: usize, width: usize },
}

impl Geometry {
    pub fn input_shape(&self) -> Vec<usize> {
        match *self {
            Geometry::Vector { dim } => vec![dim],
            Geometry::Image { channels, height, width } => vec![channels, height, width],
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape().iter().product()
    }
}

/// A neuron with `n_features` planted circuits plus unrelated distractors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyNeuronSpec {
    pub n_features: usize,
    pub distractor_count: usize,
    /// Distractor amplitudes are drawn from `U[0, distractor_amplitude]`.
    pub distractor_amplitude: f64,
    pub noise_sigma: f64,
    pub geometry: Geometry,
    /// Hidden units per feature (and per distractor).
    pub detectors_per_feature: usize,
    /// Bias of every detector; slightly negative so noise alone stays silent.
    pub detector_bias: f64,
    pub seed: u64,
}

impl Default for PolyNeuronSpec {
    fn default() -> Self {
        PolyNeuronSpec {
            n_features: 2,
            distractor_count: 8,
            distractor_amplitude: 3.0,
            noise_sigma: 0.01,
            geometry: Geometry::Vector { dim: 64 },
            detectors_per_feature: 4,
            detector_bias: -0.05,
            seed: 0,
        }
    }
}

impl PolyNeuronSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_features == 0 {
            return Err(Error::InvalidArgument("n_features must be at least 1".into()));
        }
        if self.detectors_per_feature == 0 {
            return Err(Error::InvalidArgument("detectors_per_feature must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.distractor_amplitude >= 0.0 && self.distractor_amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "distractor_amplitude must be >= 0, got {}",
                self.distractor_amplitude
            )));
        }
        if !self.detector_bias.is_finite() {
            return Err(Error::InvalidArgument("detector_bias must be finite".into()));
        }
        if self.geometry.input_len() == 0 {
            return Err(Error::InvalidArgument("geometry has zero size".into()));
        }
        Ok(())
    }

    pub fn n_templates(&self) -> usize {
        self.n_features + self.distractor_count
    }
}

/// Wiring of a constructed network.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `[n_features, input_len]` unit-norm feature templates.
    pub templates: Tensor,
    /// `[distractor_count, input_len]`; `None` without distractors.
    pub distractor_templates: Option<Tensor>,
    /// Hidden units (first layer) of each feature's detector group.
    pub feature_supports: Vec<Vec<usize>>,
    pub distractor_supports: Vec<Vec<usize>>,
    pub target: NeuronTarget,
    /// Hidden layer whose units carry the circuits.
    pub attribution_layer: String,
    pub input_shape: Vec<usize>,
}

impl GroundTruth {
    pub fn n_features(&self) -> usize {
        self.templates.rows()
    }

    pub fn template(&self, f: usize) -> &[f64] {
        self.templates.row(f)
    }
}

pub const HIDDEN: &str = "relu1";
pub const READOUT: &str = "relu2";

fn orthonormal_vectors(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    if count > dim {
        return Err(Error::Infeasible(format!(
            "{count} orthogonal templates do not fit in dimension {dim}"
        )));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        // Two Gram-Schmidt passes keep inner products at rounding level.
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.iter().map(|x| x / norm).collect());
        }
    }
    Ok(basis)
}

/// Splits the image plane into a near-square grid and fills one cell per
/// template with positive values (all channels), unit-normalized.
fn patch_templates(count: usize, c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let cols = (count as f64).sqrt().ceil() as usize;
    let rows = count.div_ceil(cols.max(1));
    if rows > h || cols > w {
        return Err(Error::Infeasible(format!(
            "{count} disjoint patches need a {rows}x{cols} grid, image is {h}x{w}"
        )));
    }
    let (ch, cw) = (h / rows, w / cols);
    let mut out = Vec::with_capacity(count);
    for t in 0..count {
        let (gy, gx) = (t / cols, t % cols);
        let mut v = vec![0.0; c * h * w];
        for k in 0..c {
            for y in gy * ch..(gy + 1) * ch {
                for x in gx * cw..(gx + 1) * cw {
                    v[(k * h + y) * w + x] = rng.random_range(0.5..1.0);
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.push(v.iter().map(|x| x / norm).collect());
    }
    Ok(out)
}

/// Two-hidden-layer ReLU network with one detector group per feature and
/// per distractor. Readout unit 0 (the target) sums all feature detectors
/// with weight one; readout unit `1 + d` sums distractor group `d`.
pub fn build_poly_network(spec: &PolyNeuronSpec) -> Result<(Network, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_t = spec.n_templates();
    let all = match spec.geometry {
        Geometry::Vector { dim } => orthonormal_vectors(n_t, dim, &mut rng)?,
        Geometry::Image { channels, height, width } => patch_templates(n_t, channels, height, width, &mut rng)?,
    };
    let d_in = spec.geometry.input_len();
    let m = spec.detectors_per_feature;
    let hidden = n_t * m;

    // Detector j of a group responds to its template with gain in [0.75, 1.25].
    let gains: Vec<f64> = (0..m)
        .map(|j| if m == 1 { 1.0 } else { 0.75 + 0.5 * j as f64 / (m - 1) as f64 })
        .collect();
    let mut w1 = vec![0.0; hidden * d_in];
    for (t, template) in all.iter().enumerate() {
        for (j, g) in gains.iter().enumerate() {
            let row = t * m + j;
            for (dst, v) in w1[row * d_in..(row + 1) * d_in].iter_mut().zip(template) {
                *dst = g * v;
            }
        }
    }
    let b1 = vec![spec.detector_bias; hidden];

    let readouts = 1 + spec.distractor_count;
    let mut w2 = vec![0.0; readouts * hidden];
    w2[..spec.n_features * m].fill(1.0);
    for d in 0..spec.distractor_count {
        let start = (spec.n_features + d) * m;
        for u in start..start + m {
            w2[(1 + d) * hidden + u] = 1.0;
        }
    }

    let mut layers = Vec::new();
    if let Geometry::Image { .. } = spec.geometry {
        layers.push(LayerSpec::new("flatten", LayerKind::Flatten));
    }
    layers.push(LayerSpec::new(
        "fc1",
        LayerKind::Dense {
            weights: Tensor::new(vec![hidden, d_in], w1)?,
            bias: Some(Tensor::from_vec(b1)),
        },
    ));
    layers.push(LayerSpec::new(HIDDEN, LayerKind::Relu));
    layers.push(LayerSpec::new(
        "fc2",
        LayerKind::Dense {
            weights: Tensor::new(vec![readouts, hidden], w2)?,
            bias: Some(Tensor::from_vec(vec![0.0; readouts])),
        },
    ));
    layers.push(LayerSpec::new(READOUT, LayerKind::Relu));
    let net = Network::new(spec.geometry.input_shape(), layers)?;

    let group = |t: usize| (t * m..(t + 1) * m).collect::<Vec<_>>();
    let rows_of = |range: std::ops::Range<usize>| -> Result<Option<Tensor>> {
        if range.is_empty() {
            return Ok(None);
        }
        Tensor::from_rows(&all[range]).map(Some)
    };
    let gt = GroundTruth {
        templates: rows_of(0..spec.n_features)?.expect("n_features >= 1"),
        distractor_templates: rows_of(spec.n_features..n_t)?,
        feature_supports: (0..spec.n_features).map(group).collect(),
        distractor_supports: (spec.n_features..n_t).map(group).collect(),
        target: NeuronTarget::scalar(READOUT, 0),
        attribution_layer: HIDDEN.to_string(),
        input_shape: spec.geometry.input_shape(),
    };
    Ok((net, gt))
}

/// Samples with one active feature each (round-robin), amplitude
/// `U[0.5, 1.5]`, every distractor at amplitude `U[0, A]`, plus Gaussian
/// noise. Ids are `s00000`, `s00001`, ...
pub fn generate_samples(gt: &GroundTruth, spec: &PolyNeuronSpec, n: usize, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise_sigma: {e}")))?;
    let d_in = gt.templates.cols();
    let mut ids = Vec::with_capacity(n);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let f = i % gt.n_features();
        let a: f64 = rng.random_range(0.5..=1.5);
        let mut x: Vec<f64> = gt.template(f).iter().map(|v| a * v).collect();
        if let Some(dt) = &gt.distractor_templates {
            for d in 0..dt.rows() {
                let b = rng.random::<f64>() * spec.distractor_amplitude;
                x.iter_mut().zip(dt.row(d)).for_each(|(x, v)| *x += b * v);
            }
        }
        if spec.noise_sigma > 0.0 {
            x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        debug_assert_eq!(x.len(), d_in);
        ids.push(format!("s{i:05}"));
        samples.push(Tensor::new(gt.input_shape.clone(), x)?);
        labels.push(f);
    }
    Ok((Dataset::new(ids, samples)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{forward, neuron_activation};

    fn spec(n_features: usize, distractors: usize) -> PolyNeuronSpec {
        PolyNeuronSpec {
            n_features,
            distractor_count: distractors,
            noise_sigma: 0.0,
            ..PolyNeuronSpec::default()
        }
    }

    #[test]
    fn templates_orthonormal() {
        let (_, gt) = build_poly_network(&spec(3, 5)).unwrap();
        let mut all = gt.templates.row_vecs();
        all.extend(gt.distractor_templates.unwrap().row_vecs());
        for i in 0..all.len() {
            for j in 0..all.len() {
                let dot: f64 = all[i].iter().zip(&all[j]).map(|(a, b)| a * b).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9, "{i},{j}: {dot}");
            }
        }
    }

    #[test]
    fn infeasible_geometry() {
        let s = PolyNeuronSpec {
            geometry: Geometry::Vector { dim: 4 },
            ..spec(2, 3)
        };
        assert!(matches!(build_poly_network(&s), Err(Error::Infeasible(_))));
        let s = PolyNeuronSpec {
            geometry: Geometry::Image { channels: 1, height: 2, width: 2 },
            ..spec(2, 3)
        };
        assert!(matches!(build_poly_network(&s), Err(Error::Infeasible(_))));
    }

    #[test]
    fn noiseless_samples_are_scaled_templates() {
        let s = spec(2, 0);
        let (_, gt) = build_poly_network(&s).unwrap();
        let (data, labels) = generate_samples(&gt, &s, 7, 3).unwrap();
        assert_eq!(labels, vec![0, 1, 0, 1, 0, 1, 0]);
        for ((_, x), &f) in data.iter().zip(&labels) {
            let t = gt.template(f);
            let a = x.data().iter().zip(t).map(|(p, q)| p * q).sum::<f64>();
            assert!((0.5..=1.5).contains(&a));
            for (p, q) in x.data().iter().zip(t) {
                assert!((p - a * q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn target_tracks_active_detector_group() {
        let s = spec(2, 0);
        let (net, gt) = build_poly_network(&s).unwrap();
        for f in 0..2 {
            let x = Tensor::new(vec![64], gt.template(f).to_vec()).unwrap();
            let trace = forward(&net, &x).unwrap();
            let h = trace.get(HIDDEN).unwrap().data();
            let group: f64 = gt.feature_supports[f].iter().map(|&u| h[u]).sum();
            let other: f64 = gt.feature_supports[1 - f].iter().map(|&u| h[u]).sum();
            assert_eq!(other, 0.0);
            assert!((neuron_activation(&trace, &gt.target).unwrap() - group).abs() < 1e-12);
        }
    }
}
