//! Reference volume integrator, splat rasterizer and image metrics.
//!
//! Both renderers are orthographic and share the same front-to-back
//! emission-absorption recurrence over a black background.

mod camera;
mod dvr;
mod image;
mod metrics;
mod splat;

use thiserror::Error;

pub use camera::{camera_rig, Camera, DEFAULT_HALF_EXTENT};
pub use dvr::{composite_samples, render_dvr, sample_trilinear};
pub use image::Image;
pub use metrics::{psnr, ssim, ssim_with_grad, PSNR_CAP, SSIM_WINDOW};
pub use splat::{plan_splats, project, rasterize, render_splats, PlanEntry, Projection, RenderPlan, TILE};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("image resolutions differ: {0:?} vs {1:?}")]
    ResolutionMismatch([usize; 2], [usize; 2]),
    #[error("images must be at least {min}x{min} for SSIM, got {got:?}")]
    TooSmall { min: usize, got: [usize; 2] },
    #[error("splat {0} has a singular covariance")]
    SingularCovariance(usize),
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("ray step {step} exceeds half the voxel size {voxel}")]
    StepTooLarge { step: f64, voxel: f64 },
    #[error("image file: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] crate::container::ContainerError),
}

/// Compositing knobs shared by both renderers.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RenderOptions {
    pub max_opacity: f64,
    /// Rays stop once transmittance drops below this.
    pub min_transmittance: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            max_opacity: 0.99,
            min_transmittance: 1e-4,
        }
    }
}
