//! Quality-aware image representation learning toolkit.
//!
//! Pipeline, end to end: a deterministic 25-kind distortion bank degrades
//! source images at 5 severities; an overlap-constrained crop sampler and a
//! half-swap scheme turn chunks of distorted variants into labeled
//! query/key pairs; a momentum-contrast trainer with an InfoNCE loss and a
//! FIFO negative queue learns a small convolutional encoder from those
//! pairs; a ridge head maps frozen pooled features to quality scores; and
//! an evaluation harness reports median SRCC/PLCC over repeated splits.

pub mod color;
pub mod contrast;
pub mod distort;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod io;
pub mod kernel;
pub mod manifest;
pub mod metrics;
pub mod nn;
pub mod pairs;
pub mod protocol;
pub mod raster;
pub mod resample;
pub mod ridge;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use kernel::{convolve2d, make_disk_kernel, make_gaussian_kernel, make_line_kernel, Kernel2D};
pub use raster::{Image, Rect};
pub use resample::{rescale, resize, ResizeMethod};
