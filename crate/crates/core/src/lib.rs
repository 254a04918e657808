//! Conversion of volumetric scalar fields into 3D Gaussian splat sets.
//!
//! The pipeline applies a transfer function to a scalar volume, decomposes
//! the resulting RGBA field with a separable 3D wavelet transform, keeps a
//! budgeted sparse set of coefficients and maps each retained coefficient to
//! an anisotropic Gaussian through a precomputed per-subband transition bank.
//! The resulting splats can be refined against volume-rendered references.
//!
//! Module map:
//!
//! * [`volume`] raw scalar ingestion, transfer functions, world frame
//! * [`wavelet`] multi-level 3D DWT/IDWT, band addressing, impulses
//! * [`bank`] canonical kernels and their dominant-lobe Gaussian fits
//! * [`sparsify`] energy-aware budget allocation and coefficient selection
//! * [`construct`] coefficient-to-splat mapping, mixture evaluation, PLY
//! * [`render`] DVR reference renderer, splat rasterizer, PSNR/SSIM
//! * [`finetune`] analytic gradients and Adam refinement

pub mod bank;
pub mod construct;
pub mod container;
pub mod finetune;
pub mod render;
pub mod sparsify;
pub mod volume;
pub mod wavelet;

pub use bank::{build_bank, GaussianGeom, TransitionBank, TransitionEntry};
pub use construct::{build_splats, eval_mixture, GainMode, SignMode, Splat, SplatSet};
pub use sparsify::{sparsify_pyramid, SparseBand, SparsePyramid, SparsifyConfig};
pub use volume::{RadianceVolume, ScalarVolume, TransferFunction, VolumeMeta};
pub use wavelet::{dwt3, idwt3, BandKey, Boundary, Filter, WaveletPyramid};
