//! Minimal tensor engine with reverse-mode automatic differentiation and the
//! 3D layers an encoder/decoder needs.

mod graph;
pub mod kernels;
mod params;
mod tensor;

pub use graph::{Graph, Var, PROB_FLOOR};
pub use params::{Param, ParamStore};
pub use tensor::Tensor;
