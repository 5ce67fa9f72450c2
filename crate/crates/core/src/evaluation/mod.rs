//! Embedding distance matrices, intra/inter-cluster separability, distance
//! correlation, cluster purity and PCA projection.

mod correlation;
mod distance;
mod pca;
mod separability;
mod svg;

pub use correlation::{distance_correlation, pearson, ranks, CorrelationKind, CorrelationOptions, CorrelationReport};
pub use distance::{pairwise_euclidean, pairwise_euclidean_rows, DistanceMatrix, EmbeddingSet};
pub use pca::{pca_project, PcaProjection};
pub use separability::{cluster_embeddings, intra_inter, purity, ClusterLabels, SeparabilityReport};
pub use svg::scatter_svg;
