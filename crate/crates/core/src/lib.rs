//! Cascading residual networks for single-image super-resolution.

pub mod arch;
pub mod cost;
mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use arch::{Network, NetworkSpec, ParamStore, UnitKind, Variant};
pub use error::{Error, Result};
pub use metrics::ImageU8;
pub use model::Model;
pub use tensor::{DType, Real, Shape, Tensor};
