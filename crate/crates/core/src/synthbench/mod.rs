//! Networks with planted superimposed circuits, so purification quality can
//! be scored against known ground truth.

mod benchmark;
mod construct;

pub use benchmark::{
    run_benchmark, run_seed, BenchmarkReport, BenchmarkSettings, MethodOutcome, MethodSummary, SeedOutcome, REPORT_NOTE,
};
pub use construct::{build_poly_network, generate_samples, Geometry, GroundTruth, PolyNeuronSpec, HIDDEN, READOUT};
