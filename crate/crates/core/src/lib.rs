//! Spherical convolutional hourglass networks for dense labeling on the sphere.
//!
//! The crate is organized bottom-up:
//!
//! * [`sphgrid`]: equiangular grids, exact quadrature, signal containers.
//! * [`formats`]: the `.sphs` / `.sphl` binary containers.
//! * [`harmonics`]: Legendre tables, spherical harmonic transforms, Wigner-d
//!   blocks and rotations.
//! * [`filters`]: anchor-point zonal filters and band-limit resampling.
//! * [`diffnet`]: differentiable layers with hand-written adjoints and the two
//!   hourglass architectures (spherical and planar baseline).
//! * [`trainer`]: loss, Adam, mIoU, training loop and checkpoints.
//! * [`scenes`]: synthetic spherical segmentation scenes and cube-map ingestion.
//! * [`config`]: the line-based `key = value` run configuration.

pub mod config;
pub mod diffnet;
pub mod error;
pub mod formats;
pub mod filters;
pub mod harmonics;
mod linalg;
mod par;
pub mod scenes;
pub mod sphgrid;
pub mod trainer;

pub use error::{Error, FormatError, Result};
pub use par::with_threads;
