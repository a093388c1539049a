//! Confidence-based refinement of patch training sets.
//!
//! Slides are tiled into overlapping patches, each patch expanded into its
//! eight rotation/flip variants, and a small CNN is trained on the result.
//! The refinement loop then repeatedly scores the training set, deactivates
//! records whose label the model does not support, drops any variant group
//! that lost too many members, and fine-tunes. Slides are classified by
//! majority vote over non-overlapping patches.

mod binio;
pub mod class;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod patch;
pub mod ral;
pub mod scalar;
pub mod slice;
pub mod split;
pub mod synth;
pub mod tensor;

pub use class::Class;
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type Network32 = nn::Network<f32>;
pub type Network64 = nn::Network<f64>;
pub type AdamState32 = nn::AdamState<f32>;
