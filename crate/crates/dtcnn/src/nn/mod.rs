//! Neural-network execution: layer math with hand-written backward passes,
//! network assembly, and minibatch SGD.

mod gemm;
pub mod layers;
mod net;
mod sgd;

pub use layers::{
    center_crop_plan, conv_backward, conv_forward, crop_forward, dropout_backward,
    dropout_forward, energy_backward, energy_forward, fc_backward, fc_forward, lrn_backward,
    lrn_forward, maxpool_backward, maxpool_forward, random_crop_plan, relu, relu_backward,
    softmax_loss, window_out_extent, CropPlan, LrnParams,
};
pub use net::{train_step, GradSet, LayerParams, Network, TrainSample};
pub use sgd::{sgd_update, TrainConfig};
