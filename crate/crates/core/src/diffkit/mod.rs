//! Small reverse-mode toolkit for the fixed network shapes used here.

pub mod adam;
pub mod layers;
pub mod params;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use layers::{Dense, GruCell, LayerNorm};
pub use params::{soft_update, Grads, ParamId, ParamSet};
pub use tensor::Tensor;
