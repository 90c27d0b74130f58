//! Per-step tracking networks, their training, and the optimization-based
//! baseline.

mod baseline;
mod io;
mod net;
mod train;

pub use baseline::{baseline_control, BaselineParams, BaselineResult};
pub use io::{load_controllers, save_controllers, MANIFEST};
pub use net::{Cache, Layout, StepNet};
pub use train::{
    fit, hinge, loss, loss_and_grad, mean_tracking_norm, train_all, train_step_controller, tracking_norm,
    training_samples, Adam, LossValue, StepTarget, TrainConfig, TrainLog,
};
