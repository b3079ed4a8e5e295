//! Dynamic-texture classification toolkit.
//!
//! A video volume is sliced on the three orthogonal planes (`xy`, `xt`, `yt`),
//! an independent texture CNN is trained on the slice stack of each plane, and
//! the raw last-layer outputs of all slices on all planes are summed into a
//! collective classification score.
//!
//! The crate is organized around the pipeline stages:
//!
//! * [`tensor`] — dense n-d arrays, the seeded RNG, bilinear resizing
//! * [`slicer`] — orthogonal-plane slice extraction from video volumes
//! * [`nn`] — layer forward/backward passes and the SGD optimizer
//! * [`arch`] — the texture CNN architecture builders and shape/param oracles
//! * [`ensemble`] — per-plane and global score fusion, evaluation reports
//! * [`data`] — PGM/PPM frames, dataset manifests, split protocols, synthetic
//!   dynamic textures, binary checkpoints
//! * [`config`] / [`pipeline`] — run configuration and the slice/train/eval
//!   drivers used by the CLI

pub mod arch;
pub mod config;
pub mod data;
pub mod ensemble;
pub mod error;
pub mod nn;
pub mod pipeline;
pub mod slicer;
pub mod tensor;

pub use error::{Error, Result};
