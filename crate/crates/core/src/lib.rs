//! Dynamic dilated filtering for RGB-D salient object detection.
//!
//! * [`tensor`]: dense `f64` tensors and the standard convolution, pooling,
//!   resizing and activation primitives.
//! * [`dynfilter`]: position-specific kernel generation, dilated adaptive
//!   convolution and the three-branch pyramid module, with gradients.
//! * [`net`]: a desk-scale two-stream network wiring everything together.
//! * [`losses`]: BCE, edge- and region-enhanced losses and their sum.
//! * [`metrics`]: the saliency evaluation measures and dataset aggregation.
//! * [`io`]: PGM images, dataset pairing and report writing.

pub mod checks;
pub mod dense;
pub mod dynfilter;
pub mod error;
pub mod init;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod net;
pub mod params;
pub mod reference;
pub mod tensor;

#[cfg(test)]
mod testing;

pub use error::{Error, Result};
pub use tensor::{Shape, Tensor};
