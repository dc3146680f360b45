//! DeepONet surrogate for the map `lambda_hat -> k`.
//!
//! A branch network encodes the estimate sampled at `m` sensors, a trunk
//! network encodes the query point `(x, y)`, and the kernel value is their
//! inner product scaled back to physical units. Gradients are computed by a
//! hand-written reverse pass; training uses Adam on minibatches.

mod io;
mod mlp;
mod model;
mod train;

pub use io::{load_model, save_model, FORMAT_VERSION};
pub use mlp::{Activation, Dense, DenseGrad, Mlp};
pub use model::{Batch, DeepONetConfig, DeepONetModel, Gradients, Normalization, PreparedOperator};
pub use train::{relative_l2, train, Adam, TrainConfig, TrainReport};
