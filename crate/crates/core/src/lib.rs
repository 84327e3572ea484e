//! U-Net instance segmentation from four extreme points, on the CPU.
//!
//! The guide in `book/` walks through each module; its snippets are compiled
//! as doc-tests of this crate.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod inference;
pub mod loss;
pub mod mask;
pub mod metrics;
pub mod ops;
pub mod optim;
pub mod polygon;
pub mod tensor;
pub mod trainer;
pub mod unet;

pub use error::{Error, Result};
pub use mask::BinaryMask;
pub use tensor::{Scalar, Shape, Tensor};

// The guide's snippets run as doc-tests, one module per chapter.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/extreme-points.md")]
    mod extreme_points {}
    #[doc = include_str!("../../../book/src/losses.md")]
    mod losses {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/polygons.md")]
    mod polygons {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/service.md")]
    mod service {}
}
