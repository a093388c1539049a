//! Minimal deterministic CNN engine: layers, loss, Adam and gradient checking.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod network;
pub mod ops;
pub mod spec;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{gradient_check, gradient_check_with, GradCheckOptions, GradCheckReport};
pub use network::Network;
pub use ops::{avgpool_global, conv2d_forward, maxpool2x2, softmax, softmax_cross_entropy};
pub use spec::{
    build_classifier, extraction_block, Activation, ChannelPlan, Dims, LayerSpec, NetworkSpec,
    EXTRACTION_BLOCK,
};
