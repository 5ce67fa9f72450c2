//! Circuit edges and nodes: LRP relevance messages, their aggregation into
//! node relevances, and Gradient x Activation (the default).

mod gradact;
mod lrp;
mod vector;

pub use gradact::{attribute, gradact_attribution, gradact_tensor, input_heatmap, relevance_tensor};
pub use lrp::{lrp_aggregate, lrp_backward, lrp_messages, Edge, LrpOutcome, LrpParams, RelevanceMessages, DEGENERATE_Z};
pub use vector::{load_batch, save_batch, Aggregation, AttributionMeta, AttributionVector, Method};
