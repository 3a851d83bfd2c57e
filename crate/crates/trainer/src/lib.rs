//! Planar masked affine autoregressive flow, trained by maximum likelihood
//! with an optional C_OCT penalty, on a drifting mixing function.

pub mod adam;
pub mod error;
pub mod model;
pub mod objective;
pub mod rng;
pub mod scenario;
pub mod train;

pub use adam::Adam;
pub use error::{Result, TrainError};
pub use model::FlowModel;
pub use objective::{loss, loss_and_grad, Anchor, LossParts};
pub use scenario::DriftScenario;
pub use train::{drift_from, drift_train, evaluate, pretrain_t0, Checkpoint, Pretrained, TimeRecord, TrainConfig, TrainTrace};
