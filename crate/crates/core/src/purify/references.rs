use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::netcore::{forward, neuron_activation, Network, NeuronTarget};

/// The `n_ref` samples that activate a neuron most, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    pub target: NeuronTarget,
    /// `(sample_id, activation)`, scores non-increasing.
    pub entries: Vec<(String, f64)>,
}

impl ReferenceSet {
    pub fn n_ref(&self) -> usize {
        self.entries.len()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }
}

/// Target activation of every sample, in dataset order.
pub fn score_samples(net: &Network, dataset: &Dataset, target: &NeuronTarget) -> Result<Vec<f64>> {
    target.validate(net.shape_at(net.position(&target.layer)?))?;
    dataset
        .samples()
        .par_iter()
        .zip(dataset.ids().par_iter())
        .map(|(x, id)| {
            forward(net, x)
                .and_then(|t| neuron_activation(&t, target))
                .map_err(|e| Error::SampleFailed {
                    sample: id.clone(),
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Top `n_ref` samples by activation; ties go to the smaller sample id.
pub fn select_references(net: &Network, dataset: &Dataset, target: &NeuronTarget, n_ref: usize) -> Result<ReferenceSet> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n_ref == 0 {
        return Err(Error::InvalidArgument("n_ref must be at least 1".into()));
    }
    if n_ref > dataset.len() {
        return Err(Error::InvalidArgument(format!(
            "n_ref = {n_ref} exceeds the dataset size ({})",
            dataset.len()
        )));
    }
    let scores = score_samples(net, dataset, target)?;
    let mut entries: Vec<(String, f64)> = dataset.ids().iter().cloned().zip(scores).collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries.truncate(n_ref);
    Ok(ReferenceSet {
        target: target.clone(),
        entries,
    })
}
