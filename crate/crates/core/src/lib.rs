//! glyphforge: a self-contained character-recognition toolkit.
//!
//! Two halves, usable separately or end to end:
//!
//! - a small CNN engine built from scratch ([`tensor`], [`nn`]): conv /
//!   pool / fully-connected layers with hand-written backprop, SGD,
//!   layer freezing, architecture presets, and a bit-exact checkpoint
//!   format for transfer learning;
//! - a classical scene-text front end ([`imgproc`], [`pipeline`]):
//!   grayscale, Gaussian blur, thresholding, morphological opening and
//!   connected components turn a word image into per-character crops,
//!   which the CNN then classifies.
//!
//! [`dataset`] supplies PGM/PPM codecs, directory-per-class loading with
//! deterministic splits, and a synthetic glyph generator so everything is
//! testable without external data. [`augment`] provides the seeded
//! training-time transforms. [`train`], [`config`], [`metrics`] and
//! [`plot`] back the `glyphforge` CLI.

pub mod augment;
pub mod config;
pub mod dataset;
pub mod error;
pub mod imgproc;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod plot;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use imgproc::{BoundingBox, ImageU8};
pub use rng::Rng;
pub use tensor::Tensor;
