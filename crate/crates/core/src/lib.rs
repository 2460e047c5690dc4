//! Quaternion-valued neural networks for multivariate time series.
//!
//! The crate covers quaternion algebra and calculus, quaternion layers with
//! hand-derived (GHR) backpropagation, a component-level reverse-mode AD
//! engine used to cross-check it, the min/max/mean/std quaternionic
//! compression of time series, and a small training stack.
//!
//! Algebra, tensors and compression are generic over the scalar type; the
//! network stack runs in `f64`.

pub mod autodiff;
pub mod backprop;
pub mod calculus;
pub mod compress;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod quaternion;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use quaternion::{Axis, Quat};
pub use tensor::Tensor;

pub type Quaternion = Quat<f64>;
pub type Quaternion32 = Quat<f32>;
pub type QTensor = Tensor<Quaternion>;
pub type RTensor = Tensor<f64>;
