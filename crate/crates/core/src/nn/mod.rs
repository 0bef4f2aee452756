//! Small differentiable-numerics toolkit with hand-written backward passes.

pub mod gradcheck;
pub mod grl;
pub mod layers;
pub mod loss;
pub mod matrix;
pub mod optim;
pub mod rng;

pub use gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport, ParamSpan};
pub use grl::{grl_backward, GradientReversal};
pub use layers::{BatchNorm, Dense, Dropout, Mode, Param, Relu, Softplus};
pub use loss::{cross_entropy_loss, mse_loss, softmax};
pub use matrix::Matrix;
pub use optim::{Adam, AdamConfig, PlateauScheduler};
pub use rng::RngStream;
