use rayon::prelude::*;

use crate::attribution::{attribute, Aggregation, Method};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::netcore::{forward, Network, NeuronTarget};
use crate::tensor::Tensor;

use super::kmeans::{kmeans_fit, KMeansParams};
use super::model::{CircuitModel, FeatureSource, Preprocessing};
use super::references::{select_references, ReferenceSet};

/// Settings for one purification run.
#[derive(Debug, Clone, PartialEq)]
pub struct PurifyConfig {
    pub n_ref: usize,
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    pub method: Method,
    pub aggregation: Aggregation,
    /// Lower layer to attribute to; the nearest preceding nonlinearity
    /// output when unset.
    pub at_layer: Option<String>,
    pub row_norm: bool,
    pub standardize: bool,
}

impl Default for PurifyConfig {
    fn default() -> Self {
        PurifyConfig {
            n_ref: 100,
            k: 2,
            seed: 0,
            max_iter: 300,
            tol: 1e-6,
            method: Method::GradAct,
            aggregation: Aggregation::ChannelSum,
            at_layer: None,
            row_norm: false,
            standardize: false,
        }
    }
}

impl PurifyConfig {
    pub fn kmeans(&self) -> KMeansParams {
        KMeansParams {
            k: self.k,
            seed: self.seed,
            max_iter: self.max_iter,
            tol: self.tol,
        }
    }

    pub fn resolve_layer(&self, net: &Network, target: &NeuronTarget) -> Result<String> {
        match &self.at_layer {
            Some(l) => Ok(l.clone()),
            None => net.default_attribution_layer(&target.layer),
        }
    }
}

/// One cluster of a purified neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualNeuron {
    pub parent: NeuronTarget,
    /// Index of the centroid in the fitted model.
    pub cluster: usize,
    /// Member sample ids in reference order.
    pub members: Vec<String>,
    pub centroid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Purification {
    pub references: ReferenceSet,
    /// `[n_ref, n]` rows in reference order, before preprocessing.
    pub matrix: Tensor,
    pub model: CircuitModel,
    /// Largest cluster first; ties by lower cluster index.
    pub virtual_neurons: Vec<VirtualNeuron>,
}

fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<Tensor> {
    Tensor::from_rows(&rows)
}

fn per_sample<F>(dataset: &Dataset, refset: &ReferenceSet, f: F) -> Result<Tensor>
where
    F: Fn(&Tensor) -> Result<Vec<f64>> + Sync,
{
    let rows = refset
        .entries
        .par_iter()
        .map(|(id, _)| {
            dataset.get(id).and_then(&f).map_err(|e| match e {
                Error::MissingSample(_) => e,
                other => Error::SampleFailed {
                    sample: id.clone(),
                    source: Box::new(other),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows_to_matrix(rows)
}

/// Attribution vector of every reference sample, one row each.
pub fn build_attribution_matrix(
    net: &Network,
    dataset: &Dataset,
    refset: &ReferenceSet,
    at_layer: &str,
    method: Method,
    aggregation: Aggregation,
) -> Result<Tensor> {
    per_sample(dataset, refset, |x| {
        let trace = forward(net, x)?;
        Ok(attribute(net, &trace, &refset.target, at_layer, method, aggregation)?.values)
    })
}

/// Activation vector of `layer` per reference sample; feature maps are
/// reduced to their spatial maximum per channel.
pub fn activation_matrix(net: &Network, dataset: &Dataset, refset: &ReferenceSet, layer: &str) -> Result<Tensor> {
    net.position(layer)?;
    per_sample(dataset, refset, |x| {
        let trace = forward(net, x)?;
        Ok(activation_row(trace.get(layer)?))
    })
}

pub fn activation_row(t: &Tensor) -> Vec<f64> {
    if t.ndim() == 3 {
        let plane = t.shape()[1] * t.shape()[2];
        t.data()
            .chunks_exact(plane)
            .map(|c| c.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect()
    } else {
        t.data().to_vec()
    }
}

/// Clusters `matrix` rows and wraps the result with its metadata.
pub fn fit_circuits(
    refset: &ReferenceSet,
    matrix: &Tensor,
    layer: &str,
    source: FeatureSource,
    config: &PurifyConfig,
) -> Result<CircuitModel> {
    let (pre, rows) = Preprocessing::fit(matrix, config.row_norm, config.standardize)?;
    let params = config.kmeans();
    let fit = kmeans_fit(&rows, &params)?;
    Ok(CircuitModel::from_fit(
        refset.target.clone(),
        layer.to_string(),
        source,
        pre,
        params,
        refset.ids().map(str::to_string).collect(),
        fit,
    ))
}

/// Splits the reference set into the model's clusters.
pub fn virtual_neurons(model: &CircuitModel) -> Vec<VirtualNeuron> {
    let mut out: Vec<VirtualNeuron> = (0..model.k())
        .map(|c| VirtualNeuron {
            parent: model.target.clone(),
            cluster: c,
            members: model
                .labels
                .iter()
                .zip(&model.sample_ids)
                .filter(|(l, _)| **l == c)
                .map(|(_, id)| id.clone())
                .collect(),
            centroid: model.centroids.row(c).to_vec(),
        })
        .collect();
    out.sort_by(|a, b| b.members.len().cmp(&a.members.len()).then(a.cluster.cmp(&b.cluster)));
    out
}

/// Reference selection, attribution matrix, k-means, virtual neurons.
pub fn purify_neuron(net: &Network, dataset: &Dataset, target: &NeuronTarget, config: &PurifyConfig) -> Result<Purification> {
    let layer = config.resolve_layer(net, target)?;
    let references = select_references(net, dataset, target, config.n_ref)?;
    let matrix = build_attribution_matrix(net, dataset, &references, &layer, config.method, config.aggregation)?;
    let source = FeatureSource::Attribution {
        method: config.method,
        aggregation: config.aggregation,
    };
    let model = fit_circuits(&references, &matrix, &layer, source, config)?;
    Ok(Purification {
        virtual_neurons: virtual_neurons(&model),
        references,
        matrix,
        model,
    })
}

/// Activation-clustering baseline on `layer` (the attribution layer when unset).
pub fn purify_by_activation(
    net: &Network,
    dataset: &Dataset,
    target: &NeuronTarget,
    config: &PurifyConfig,
) -> Result<Purification> {
    let layer = config.resolve_layer(net, target)?;
    let references = select_references(net, dataset, target, config.n_ref)?;
    let matrix = activation_matrix(net, dataset, &references, &layer)?;
    let model = fit_circuits(&references, &matrix, &layer, FeatureSource::Activation, config)?;
    Ok(Purification {
        virtual_neurons: virtual_neurons(&model),
        references,
        matrix,
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{LayerKind, LayerSpec};

    fn identity_net() -> Network {
        Network::new(vec![2], vec![LayerSpec::new("relu", LayerKind::Relu)]).unwrap()
    }

    #[test]
    fn activation_rows_follow_forward() {
        let net = identity_net();
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            vec![Tensor::from_vec(vec![1.0, -2.0]), Tensor::from_vec(vec![-3.0, -1.0])],
        )
        .unwrap();
        let r = select_references(&net, &d, &NeuronTarget::scalar("relu", 0), 2).unwrap();
        let m = activation_matrix(&net, &d, &r, "relu").unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn spatial_activation_row_is_channel_max() {
        let t = Tensor::new(vec![2, 1, 2], vec![1.0, 3.0, -1.0, -2.0]).unwrap();
        assert_eq!(activation_row(&t), vec![3.0, -1.0]);
    }

    #[test]
    fn virtual_neurons_sorted_by_size() {
        let refset = ReferenceSet {
            target: NeuronTarget::scalar("relu", 0),
            entries: ["a", "b", "c"].iter().map(|s| (s.to_string(), 1.0)).collect(),
        };
        let m = Tensor::from_rows(&[vec![0.0], vec![10.0], vec![10.2]]).unwrap();
        let model = fit_circuits(&refset, &m, "relu", FeatureSource::Activation, &PurifyConfig::default()).unwrap();
        let vns = virtual_neurons(&model);
        assert_eq!(vns[0].members, vec!["b", "c"]);
        assert_eq!(vns[1].members, vec!["a"]);
    }
}
