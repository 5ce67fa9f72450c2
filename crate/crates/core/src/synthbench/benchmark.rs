use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::Method;
use crate::error::{Error, Result};
use crate::evaluation::{intra_inter, pairwise_euclidean_rows, purity, ClusterLabels, SeparabilityReport};
use crate::purify::{purify_by_activation, purify_neuron, Purification, PurifyConfig};
use crate::tensor::Tensor;

use super::construct::{build_poly_network, generate_samples, GroundTruth, PolyNeuronSpec};

pub const REPORT_NOTE: &str = "Superposition here is constructed, not learned: each feature owns a disjoint \
detector group and templates are exactly orthogonal. Trained polysemantic units need not share this structure.";

/// Offset between the network seed and the sample-stream seed of a run.
const SAMPLE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSettings {
    pub spec: PolyNeuronSpec,
    pub n_samples: usize,
    pub n_ref: usize,
    /// Cluster count; defaults to `spec.n_features`.
    pub k: Option<usize>,
    pub seeds: Vec<u64>,
    pub method: Method,
}

impl Default for BenchmarkSettings {
    fn default() -> Self {
        BenchmarkSettings {
            spec: PolyNeuronSpec::default(),
            n_samples: 400,
            n_ref: 100,
            k: None,
            seeds: (0..10).collect(),
            method: Method::GradAct,
        }
    }
}

impl BenchmarkSettings {
    pub fn k(&self) -> usize {
        self.k.unwrap_or(self.spec.n_features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub purity: f64,
    /// Share of references in the largest cluster.
    pub dominant_share: f64,
    /// On ground-truth template embeddings; absent when undefined (k = 1
    /// or a clustering with only singletons).
    pub separability: Option<SeparabilityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Reference-set members per ground-truth feature.
    pub references_per_feature: Vec<usize>,
    pub pure: MethodOutcome,
    pub activation: MethodOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub purity_mean: f64,
    /// Standard error over seeds; zero with a single seed.
    pub purity_sem: f64,
    pub dominant_share_mean: f64,
    pub rho_intra: Option<f64>,
    pub rho_inter: Option<f64>,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub note: String,
    pub spec: PolyNeuronSpec,
    pub n_samples: usize,
    pub n_ref: usize,
    pub k: usize,
    pub method: Method,
    pub seeds: Vec<u64>,
    pub pure: MethodSummary,
    pub activation: MethodSummary,
    pub runs: Vec<SeedOutcome>,
}

fn score_method(run: &Purification, truth: &[usize], gt: &GroundTruth) -> Result<MethodOutcome> {
    let n = truth.len();
    let k = run.model.k();
    let labels = ClusterLabels::new(run.model.labels.clone(), k)?;
    let truth_labels = ClusterLabels::new(truth.to_vec(), gt.n_features())?;
    let mut sizes = vec![0usize; k];
    for &l in labels.labels() {
        sizes[l] += 1;
    }
    let embeddings = Tensor::from_rows(&truth.iter().map(|&f| gt.template(f).to_vec()).collect::<Vec<_>>())?;
    let separability = match intra_inter(&pairwise_euclidean_rows(&embeddings)?, &labels) {
        Ok(r) => Some(r),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(MethodOutcome {
        purity: purity(&labels, &truth_labels)?,
        dominant_share: *sizes.iter().max().unwrap_or(&0) as f64 / n as f64,
        separability,
    })
}

/// One self-contained benchmark run: network and samples from `seed`,
/// both clusterings with k-means seeded by `seed`.
pub fn run_seed(settings: &BenchmarkSettings, seed: u64) -> Result<SeedOutcome> {
    let spec = PolyNeuronSpec { seed, ..settings.spec.clone() };
    let (net, gt) = build_poly_network(&spec)?;
    let (data, labels) = generate_samples(&gt, &spec, settings.n_samples, seed ^ SAMPLE_STREAM)?;
    let config = PurifyConfig {
        n_ref: settings.n_ref,
        k: settings.k(),
        seed,
        method: settings.method,
        at_layer: Some(gt.attribution_layer.clone()),
        ..PurifyConfig::default()
    };
    let pure = purify_neuron(&net, &data, &gt.target, &config)?;
    let act = purify_by_activation(&net, &data, &gt.target, &config)?;

    let label_of = |id: &str| {
        let idx = data.ids().iter().position(|x| x == id).expect("reference ids come from the dataset");
        labels[idx]
    };
    let truth: Vec<usize> = pure.references.ids().map(label_of).collect();
    let truth_act: Vec<usize> = act.references.ids().map(label_of).collect();
    debug_assert_eq!(truth, truth_act);
    let mut per_feature = vec![0; gt.n_features()];
    for &f in &truth {
        per_feature[f] += 1;
    }
    Ok(SeedOutcome {
        seed,
        references_per_feature: per_feature,
        pure: score_method(&pure, &truth, &gt)?,
        activation: score_method(&act, &truth_act, &gt)?,
    })
}

fn summarize(runs: &[&MethodOutcome]) -> MethodSummary {
    let n = runs.len() as f64;
    let purity_mean = runs.iter().map(|r| r.purity).sum::<f64>() / n;
    let purity_sem = if runs.len() > 1 {
        let var = runs.iter().map(|r| (r.purity - purity_mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    let seps: Vec<&SeparabilityReport> = runs.iter().filter_map(|r| r.separability.as_ref()).collect();
    let mean_of = |f: fn(&SeparabilityReport) -> f64| {
        (!seps.is_empty()).then(|| seps.iter().map(|s| f(s)).sum::<f64>() / seps.len() as f64)
    };
    MethodSummary {
        purity_mean,
        purity_sem,
        dominant_share_mean: runs.iter().map(|r| r.dominant_share).sum::<f64>() / n,
        rho_intra: mean_of(|s| s.rho_intra),
        rho_inter: mean_of(|s| s.rho_inter),
        score: mean_of(|s| s.score),
    }
}

/// Attribution clustering vs activation clustering over every seed.
pub fn run_benchmark(settings: &BenchmarkSettings) -> Result<BenchmarkReport> {
    settings.spec.validate()?;
    if settings.seeds.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs at least one seed".into()));
    }
    let runs = settings
        .seeds
        .par_iter()
        .map(|&s| run_seed(settings, s))
        .collect::<Result<Vec<_>>>()?;
    let pure: Vec<&MethodOutcome> = runs.iter().map(|r| &r.pure).collect();
    let act: Vec<&MethodOutcome> = runs.iter().map(|r| &r.activation).collect();
    Ok(BenchmarkReport {
        note: REPORT_NOTE.to_string(),
        spec: settings.spec.clone(),
        n_samples: settings.n_samples,
        n_ref: settings.n_ref,
        k: settings.k(),
        method: settings.method,
        seeds: settings.seeds.clone(),
        pure: summarize(&pure),
        activation: summarize(&act),
        runs,
    })
}
