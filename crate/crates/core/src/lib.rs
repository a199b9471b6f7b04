//! Simulator and planner for free-space 4F optical CNN accelerators.
//!
//! The crate models the optical convolution engine as an ideal circular
//! correlator at SLM resolution, lays out inputs and filters on the SLM planes
//! with input, filter, channel and mixed tiling, models camera detection
//! (square-law, noise, quantization) and estimates system throughput.
//! Every tiled path is checked against the brute-force oracle in [`oracle`].

pub mod error;
pub mod nn;
pub mod optics;
pub mod oracle;
pub mod perf;
pub mod sensor;
pub mod tensor;
pub mod tiling;

pub use error::{Error, ErrorKind, Result};
pub use nn::{Model, Pipeline};
pub use optics::{FieldPlane, OpticsEngine, SystemConfig};
pub use perf::{LayerSpec, NetworkSpec};
pub use sensor::{BitDepth, FullScale, Readout, SensorConfig};
pub use tensor::{ConvMode, ConvSpec, FilterBank, MultiChannelImage};
pub use tiling::{Scheme, TilingLayout};
