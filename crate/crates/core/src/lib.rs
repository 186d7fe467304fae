//! Outlier-aware dictionary quantization for single-precision weight matrices.
//!
//! * [`quant`] separates Gaussian outliers and selects per-layer centroids.
//! * [`container`] serializes quantized layers into the bit-packed `.gobo`
//!   container and streams them back out.
//! * [`kernel`] computes matrix-vector products directly on bin indexes by
//!   summing activations per centroid.
//! * [`tilesim`] models the accelerator tile that executes that kernel.

pub mod container;
pub mod fixtures;
pub mod kernel;
pub mod matrix;
pub mod quant;
pub mod tilesim;

mod compensated;

pub use container::{ContainerError, ContainerGeometry, Layout};
pub use kernel::{ActivationVector, KernelError};
pub use matrix::{MatrixError, WeightMatrix};
pub use quant::{dequantize, quantize, Method, QuantConfig, QuantError, QuantizedLayer};
