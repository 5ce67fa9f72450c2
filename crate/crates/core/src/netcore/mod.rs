//! Sequential feed-forward networks: layers, forward traces, and exact
//! reverse-mode gradients of single neurons.

mod grad;
mod layer;
mod manifest;
mod network;
mod trace;

pub(crate) use grad::span;
pub(crate) use layer::{maxpool_source, ConvGeometry};

pub use grad::{finite_diff_grad, grad_wrt_layer};
pub use layer::{LayerKind, LayerSpec};
pub use manifest::{load_network, save_network};
pub use network::{Network, INPUT};
pub use trace::{forward, neuron_activation, neuron_activation_at, ForwardTrace, NeuronTarget, Reduction};
