use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::RenderError;

/// Half-diagonal of the normalized world box of a cube.
const MAX_HALF_DIAGONAL: f64 = 1.732_050_807_568_877_2;
/// Half height of the image plane that frames any normalized volume.
pub const DEFAULT_HALF_EXTENT: f64 = MAX_HALF_DIAGONAL;

/// Orthographic camera. Pixel `(i, j)` (column, row; row 0 on top) sees the
/// ray through `position + u * right + v * up` along `forward`, for `t` in
/// `[near, far]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vector3<f64>,
    pub forward: Vector3<f64>,
    pub up: Vector3<f64>,
    pub right: Vector3<f64>,
    /// Half height of the image plane in world units.
    pub half_extent: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub far: f64,
}

impl Camera {
    /// Camera at `position` looking at `target`, world `z` up unless the view
    /// is nearly vertical, in which case `y` is used.
    pub fn look_at(
        position: Vector3<f64>,
        target: Vector3<f64>,
        half_extent: f64,
        resolution: [usize; 2],
        near: f64,
        far: f64,
    ) -> Result<Self, RenderError> {
        let forward = (target - position)
            .try_normalize(1e-12)
            .ok_or_else(|| RenderError::InvalidCamera("position equals target".into()))?;
        let world_up = if forward.z.abs() > 0.999 { Vector3::y() } else { Vector3::z() };
        let right = forward.cross(&world_up).normalize();
        let up = right.cross(&forward);
        let cam = Camera {
            position,
            forward,
            up,
            right,
            half_extent,
            width: resolution[0],
            height: resolution[1],
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), RenderError> {
        let bad = |m: &str| Err(RenderError::InvalidCamera(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("resolution must be positive");
        }
        if !(self.half_extent > 0.0) {
            return bad("half_extent must be positive");
        }
        if !(self.near < self.far) {
            return bad("near must be less than far");
        }
        let (f, u, r) = (self.forward, self.up, self.right);
        let ortho = [f.dot(&u), f.dot(&r), u.dot(&r), f.norm() - 1.0, u.norm() - 1.0, r.norm() - 1.0];
        if ortho.iter().any(|e| e.abs() > 1e-9) {
            return bad("camera triad is not orthonormal");
        }
        Ok(())
    }

    pub fn resolution(&self) -> [usize; 2] {
        [self.width, self.height]
    }

    pub fn half_width(&self) -> f64 {
        self.half_extent * self.width as f64 / self.height as f64
    }

    /// Image-plane coordinates of a pixel center.
    pub fn pixel_to_plane(&self, px: usize, py: usize) -> [f64; 2] {
        [
            (2.0 * (px as f64 + 0.5) / self.width as f64 - 1.0) * self.half_width(),
            (1.0 - 2.0 * (py as f64 + 0.5) / self.height as f64) * self.half_extent,
        ]
    }

    /// Continuous pixel coordinates `(column, row)` of an image-plane point.
    pub fn plane_to_pixel(&self, u: f64, v: f64) -> [f64; 2] {
        [
            (u / self.half_width() + 1.0) * 0.5 * self.width as f64 - 0.5,
            (1.0 - v / self.half_extent) * 0.5 * self.height as f64 - 0.5,
        ]
    }

    pub fn ray_origin(&self, px: usize, py: usize) -> Vector3<f64> {
        let [u, v] = self.pixel_to_plane(px, py);
        self.position + self.right * u + self.up * v
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Camera {
        Camera {
            position: self.position + offset,
            ..self.clone()
        }
    }
}

/// `count` cameras on a Fibonacci sphere of `radius`, all aimed at the origin.
pub fn camera_rig(
    count: usize,
    radius: f64,
    resolution: [usize; 2],
    half_extent: f64,
) -> Result<Vec<Camera>, RenderError> {
    if count == 0 {
        return Err(RenderError::InvalidCamera("rig needs at least one camera".into()));
    }
    if !(radius > MAX_HALF_DIAGONAL) {
        return Err(RenderError::InvalidCamera(format!(
            "rig radius {radius} must exceed the world half-diagonal {MAX_HALF_DIAGONAL}"
        )));
    }
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            let p = Vector3::new(r * phi.cos(), r * phi.sin(), z) * radius;
            Camera::look_at(
                p,
                Vector3::zeros(),
                half_extent,
                resolution,
                radius - MAX_HALF_DIAGONAL,
                radius + MAX_HALF_DIAGONAL,
            )
        })
        .collect()
}
