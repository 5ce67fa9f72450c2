//! # pure-core
//!
//! Disentangles polysemantic neurons into "virtual" neurons by clustering
//! their circuit attributions.
//!
//! For each of the most strongly activating reference samples of a neuron,
//! the relevance of every unit in a lower layer is computed (Gradient x
//! Activation by default, epsilon-LRP as an alternative). Samples that use
//! different circuits produce attribution vectors that fall into different
//! clusters; k-means centroids over those vectors become the virtual
//! neurons, and new samples are routed to the nearest centroid.
//!
//! Modules:
//!
//! - [`netcore`]: sequential networks, forward traces, neuron gradients.
//! - [`attribution`]: relevance messages, node relevances, Gradient x Activation.
//! - [`purify`]: reference selection, k-means circuits, activation baseline.
//! - [`evaluation`]: distance matrices, intra/inter-cluster separability,
//!   distance correlation, purity, PCA projection.
//! - [`vizcrop`]: heatmap smoothing, thresholding and cropping of reference images.
//! - [`synthbench`]: networks with planted superimposed circuits and the
//!   attribution-vs-activation benchmark.

pub mod attribution;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod netcore;
pub mod ntfile;
pub mod purify;
pub mod synthbench;
pub mod tensor;
pub mod vizcrop;

pub use error::{Error, Result};
pub use tensor::Tensor;
