//! Loss, analytic gradients, finite-difference checks, Adam and training.

pub mod adam;
pub mod backward;
pub mod loss;
pub mod params;
pub mod train;

pub use adam::{step, AdamState, LearningRates, StepRates};
pub use backward::{backward, fd_gradient, render_loss, specular_weight_partials, GradientBundle, Objective};
pub use loss::{loss, loss_with_grad};
pub use params::{all_params, flatten, unflatten, Field, FlatParams, ParamRef, PARAMS_PER_GAUSSIAN};
pub use train::{log_csv, train, windowed_loss, LogRecord, TrainConfig, TrainResult};
