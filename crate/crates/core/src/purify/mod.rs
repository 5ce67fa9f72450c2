//! Reference samples, attribution matrices, k-means circuits and the
//! activation-clustering baseline.

mod kmeans;
mod model;
mod pipeline;
mod references;

pub use kmeans::{kmeans_fit, nearest, KMeansFit, KMeansParams};
pub use model::{
    assign_circuit, load_model, save_model, Assignment, CircuitModel, ColumnStats, FeatureSource, Preprocessing,
    CENTROIDS_FILE, MODEL_FILE,
};
pub use pipeline::{
    activation_matrix, activation_row, build_attribution_matrix, fit_circuits, purify_by_activation, purify_neuron,
    virtual_neurons, Purification, PurifyConfig, VirtualNeuron,
};
pub use references::{score_samples, select_references, ReferenceSet};
