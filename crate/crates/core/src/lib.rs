pub mod counterfactual;
pub mod error;
pub mod fuzzy;
pub mod gradcam;
pub mod integrated_gradients;
pub mod layer;
pub mod linalg;
pub mod lrp;
pub mod models;
pub mod network;
pub mod nle;
pub mod report;
pub mod shapley;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use layer::{Activation, Layer};
pub use network::{ActivationTrace, Network};
pub use tensor::Tensor;
