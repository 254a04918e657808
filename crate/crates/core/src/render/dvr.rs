use nalgebra::Vector3;
use rayon::prelude::*;

use super::{Camera, Image, RenderError, RenderOptions};
use crate::volume::RadianceVolume;

/// Trilinear RGBA at a world point, with voxel centers at cell midpoints of
/// `vol.world_box`. Zero outside the box; clamped to the outermost centers
/// inside it.
pub fn sample_trilinear(vol: &RadianceVolume, x: &Vector3<f64>) -> [f64; 4] {
    let dims = vol.meta.dims;
    let bx = &vol.world_box;
    let mut base = [0usize; 3];
    let mut frac = [0.0; 3];
    for a in 0..3 {
        let n = dims[a] as f64;
        let xi = (x[a] - bx.min[a]) / (bx.max[a] - bx.min[a]) * n - 0.5;
        if !(-0.5..=n - 0.5).contains(&xi) {
            return [0.0; 4];
        }
        let xi = xi.clamp(0.0, n - 1.0);
        let i = (xi.floor() as usize).min(dims[a] - 2);
        base[a] = i;
        frac[a] = xi - i as f64;
    }
    let mut out = [0.0; 4];
    for corner in 0..8 {
        let mut w = 1.0;
        let mut idx = base;
        for a in 0..3 {
            if corner >> a & 1 == 1 {
                w *= frac[a];
                idx[a] += 1;
            } else {
                w *= 1.0 - frac[a];
            }
        }
        if w == 0.0 {
            continue;
        }
        for (c, o) in out.iter_mut().enumerate() {
            *o += w * vol.channels[c][idx];
        }
    }
    out
}

/// Front-to-back emission-absorption over RGBA samples. Each sample's opacity
/// is corrected to `1 - (1 - a)^exponent`, where `exponent` is the step in
/// units of the opacity's reference length. Returns color and the final
/// transmittance.
pub fn composite_samples<I>(samples: I, exponent: f64, min_transmittance: f64) -> ([f64; 3], f64)
where
    I: IntoIterator<Item = [f64; 4]>,
{
    let mut color = [0.0; 3];
    let mut t = 1.0;
    for s in samples {
        let a = s[3].clamp(0.0, 1.0);
        if a == 0.0 {
            continue;
        }
        let alpha = 1.0 - (1.0 - a).powf(exponent);
        for c in 0..3 {
            color[c] += t * alpha * s[c].clamp(0.0, 1.0);
        }
        t *= 1.0 - alpha;
        if t < min_transmittance {
            break;
        }
    }
    (color, t)
}

/// Reference image by ray marching `[near, far]` with the given step.
pub fn render_dvr(
    vol: &RadianceVolume,
    cam: &Camera,
    step: f64,
    opts: &RenderOptions,
) -> Result<Image, RenderError> {
    cam.validate()?;
    let voxel = (0..3)
        .map(|a| (vol.world_box.max[a] - vol.world_box.min[a]) / vol.meta.dims[a] as f64)
        .fold(f64::INFINITY, f64::min);
    if !(step > 0.0 && step <= 0.5 * voxel * (1.0 + 1e-12)) {
        return Err(RenderError::StepTooLarge { step, voxel });
    }
    let exponent = step / voxel;
    let n_steps = ((cam.far - cam.near) / step).ceil() as usize;
    let mut pixels = vec![[0.0; 3]; cam.width * cam.height];
    pixels
        .par_chunks_mut(cam.width)
        .enumerate()
        .for_each(|(py, row)| {
            for (px, out) in row.iter_mut().enumerate() {
                let origin = cam.ray_origin(px, py);
                let samples = (0..n_steps).map(|k| {
                    let t = cam.near + (k as f64 + 0.5) * step;
                    sample_trilinear(vol, &(origin + cam.forward * t))
                });
                *out = composite_samples(samples, exponent, opts.min_transmittance).0;
            }
        });
    Ok(Image {
        width: cam.width,
        height: cam.height,
        pixels,
    })
}
