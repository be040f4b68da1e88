//! CPU differentiable 3D Gaussian splatting with a diffuse/specular light
//! decomposition and hierarchical normal-gradient densification.
//!
//! The crate is organized bottom-up:
//!
//! - [`scene`]: Gaussian primitives, covariance, spherical harmonics, normals
//! - [`camera`]: pinhole camera and EWA projection to screen-space splats
//! - [`shading`]: the diffuse/specular blend modulated by incident light
//! - [`raster`]: tiled front-to-back compositing and a brute-force reference
//! - [`densify`]: density grid, fused geometric/normal gradients, hierarchical splitting
//! - [`optim`]: loss, analytic backward pass, finite-difference oracle, Adam, training
//! - [`metrics`]: PSNR and SSIM
//! - [`io`], [`synth`], [`cli`]: file formats, synthetic scenes, command line

// `!(x <= tol)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod cli;
pub mod densify;
pub mod error;
pub mod io;
pub mod metrics;
pub mod optim;
pub mod raster;
pub mod scene;
pub mod shading;
pub mod synth;

pub use camera::{Camera, Splat2D};
pub use error::{Error, Result};
pub use raster::Image;
pub use scene::{Gaussian3D, GaussianCloud};
pub use shading::{ShadingConfig, ShadingMode};
