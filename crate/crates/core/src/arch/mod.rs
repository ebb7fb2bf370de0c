//! Network assembly: residual and residual-E units, local and global
//! cascading, sub-pixel upsampling heads, parameter sharing and checkpoints.

pub mod blocks;
pub mod checkpoint;
mod layers;
mod network;
mod params;
mod spec;

pub use layers::{Cascade, ConvLayer, Head, Unit};
pub use network::{ForwardPass, Network};
pub use params::ParamStore;
pub use spec::{NetworkSpec, UnitKind, Variant, SUPPORTED_SCALES};
