//! Dense float64 GCN, SGC, GIN and MLP with hand-derived gradients.

mod adam;
mod forward;
mod loss;
mod model;
mod train;

pub use adam::{adam_step, AdamState};
pub use forward::{
    gcn_forward, gin_forward, mlp_forward, neighbor_sum, sgc_forward, sgc_logits, sgc_propagate, softmax, Dropout,
    GinForward, NodeForward,
};
pub use loss::{gin_backward, graph_loss_and_grads, loss_and_grads, masked_cross_entropy, Grads};
pub use model::{Arch, Model};
pub use train::{
    accuracy, argmax, evaluate_graphs, evaluate_nodes, graph_logits, train_graphs, train_nodes, EpochMetrics,
    GraphTask, NodeTask, TrainConfig, TrainOutcome,
};
