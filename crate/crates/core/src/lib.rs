//! CTAN: a non-dissipative, ODE-derived deep graph network for
//! continuous-time dynamic graphs, with the spectral checks that certify its
//! non-dissipativeness, synthetic long-range benchmarks and a streaming
//! link-prediction harness.

// `!(x > 0.0)` style guards are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod ctdg;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod model;
pub mod spectral;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{NamedTensors, Tensor};
