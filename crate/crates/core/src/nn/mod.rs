//! Dense neural-network kernel: layers with explicit reverse passes, seeded
//! initialization, Adam and the mean-squared-error loss. Everything is `f64`.

pub mod adam;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod gru;
pub mod init;
pub mod loss;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::{adaptive_avg_pool, adaptive_avg_pool_backward, conv1d_forward, Conv1d, Padding, Series};
pub use dense::{fc_backward, fc_forward, leaky_relu, leaky_relu_backward, DEFAULT_LEAKY_SLOPE};
pub use gru::{GruCache, GruCell, GruGrads, GruTrace, GruWeights};
pub use init::init_params;
pub use loss::{mse, mse_backward};
pub use tensor::{GradientSet, Matrix, Param, ParamSet, Shape, Vector};
