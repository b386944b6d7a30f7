//! Dense feed-forward networks with analytic backpropagation and the
//! optimizers used to train them.

mod batch;
mod checkpoint;
mod layer;
mod optim;

pub use batch::epoch_batches;
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use layer::{
    backward, flatten_params, forward, n_params, predict, unflatten_params, xavier_bound,
    xavier_init, Activation, DenseLayer, Gradients, LayerGradient,
};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
