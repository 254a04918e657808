//! Orthographic splat rasterizer.
//!
//! [`plan_splats`] fixes the discrete decisions of a frame: depth order and
//! the pixels each splat may touch (its 3σ ellipse, binned into tiles).
//! [`rasterize`] evaluates opacities and colors against such a plan, so a plan
//! built from one parameter set can be replayed with nearby parameters.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use super::{Camera, Image, RenderError, RenderOptions};
use crate::construct::{Splat, CUTOFF_SIGMAS};

pub const TILE: usize = 16;

/// A splat in the camera frame, in world units on the image plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection {
    pub mean: Vector2<f64>,
    pub cov: Matrix2<f64>,
    pub conic: Matrix2<f64>,
    pub depth: f64,
}

pub fn project(s: &Splat, cam: &Camera) -> Option<Projection> {
    let rel = s.center - cam.position;
    let (r, u) = (cam.right, cam.up);
    let sr = s.covariance * r;
    let su = s.covariance * u;
    let cov = Matrix2::new(r.dot(&sr), r.dot(&su), u.dot(&sr), u.dot(&su));
    let cov = 0.5 * (cov + cov.transpose());
    if !(cov.determinant() > 0.0 && cov[(0, 0)] > 0.0) {
        return None;
    }
    Some(Projection {
        mean: Vector2::new(rel.dot(&r), rel.dot(&u)),
        cov,
        conic: cov.try_inverse()?,
        depth: rel.dot(&cam.forward),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanEntry {
    pub splat: usize,
    /// Footprint-defining mean and conic, frozen at planning time.
    pub mean: Vector2<f64>,
    pub conic: Matrix2<f64>,
    pub cols: [usize; 2],
    pub rows: [usize; 2],
}

impl PlanEntry {
    pub fn covers(&self, plane: Vector2<f64>) -> bool {
        let d = plane - self.mean;
        d.dot(&(self.conic * d)) <= CUTOFF_SIGMAS * CUTOFF_SIGMAS
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderPlan {
    /// Front to back.
    pub entries: Vec<PlanEntry>,
    pub tiles_x: usize,
    /// Per tile, entry indices in depth order.
    pub bins: Vec<Vec<u32>>,
}

impl RenderPlan {
    /// Entries whose frozen footprint covers a pixel, front to back.
    pub fn pixel_entries<'a>(
        &'a self,
        cam: &'a Camera,
        px: usize,
        py: usize,
    ) -> impl Iterator<Item = usize> + 'a {
        let plane = Vector2::from(cam.pixel_to_plane(px, py));
        self.bins[(py / TILE) * self.tiles_x + px / TILE]
            .iter()
            .map(|&e| e as usize)
            .filter(move |&e| {
                let en = &self.entries[e];
                (en.cols[0]..=en.cols[1]).contains(&px)
                    && (en.rows[0]..=en.rows[1]).contains(&py)
                    && en.covers(plane)
            })
    }
}

fn pixel_span(lo: f64, hi: f64, n: usize) -> Option<[usize; 2]> {
    let a = lo.ceil().max(0.0);
    let b = hi.floor().min(n as f64 - 1.0);
    (a <= b).then(|| [a as usize, b as usize])
}

pub fn plan_splats(splats: &[Splat], cam: &Camera) -> Result<RenderPlan, RenderError> {
    cam.validate()?;
    let mut projected = Vec::with_capacity(splats.len());
    for (i, s) in splats.iter().enumerate() {
        let p = project(s, cam).ok_or(RenderError::SingularCovariance(i))?;
        if p.depth < cam.near || p.depth > cam.far {
            continue;
        }
        let ru = CUTOFF_SIGMAS * p.cov[(0, 0)].sqrt();
        let rv = CUTOFF_SIGMAS * p.cov[(1, 1)].sqrt();
        let [c0, r1] = cam.plane_to_pixel(p.mean.x - ru, p.mean.y - rv);
        let [c1, r0] = cam.plane_to_pixel(p.mean.x + ru, p.mean.y + rv);
        let (Some(cols), Some(rows)) = (pixel_span(c0, c1, cam.width), pixel_span(r0, r1, cam.height)) else {
            continue;
        };
        projected.push((p.depth, i, PlanEntry { splat: i, mean: p.mean, conic: p.conic, cols, rows }));
    }
    // depth first; content breaks ties so the order never depends on input order
    projected.sort_by(|a, b| {
        let (sa, sb) = (&splats[a.1], &splats[b.1]);
        a.0.total_cmp(&b.0)
            .then_with(|| {
                sa.center
                    .iter()
                    .chain(sa.amplitude.iter())
                    .zip(sb.center.iter().chain(sb.amplitude.iter()))
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then(a.1.cmp(&b.1))
    });
    let tiles_x = cam.width.div_ceil(TILE);
    let tiles_y = cam.height.div_ceil(TILE);
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];
    let entries: Vec<PlanEntry> = projected.into_iter().map(|(_, _, e)| e).collect();
    for (k, e) in entries.iter().enumerate() {
        for ty in e.rows[0] / TILE..=e.rows[1] / TILE {
            for tx in e.cols[0] / TILE..=e.cols[1] / TILE {
                bins[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    Ok(RenderPlan { entries, tiles_x, bins })
}

/// Opacity of a splat at an image-plane point, before the clamp.
pub(crate) fn footprint(p: &Projection, opacity: f64, plane: Vector2<f64>) -> (f64, f64) {
    let d = plane - p.mean;
    let g = (-0.5 * d.dot(&(p.conic * d))).exp();
    (opacity * g, g)
}

/// Projections of the planned splats under the current parameters.
pub(crate) fn live_projections(
    plan: &RenderPlan,
    splats: &[Splat],
    cam: &Camera,
) -> Result<Vec<Projection>, RenderError> {
    plan.entries
        .iter()
        .map(|e| project(&splats[e.splat], cam).ok_or(RenderError::SingularCovariance(e.splat)))
        .collect()
}

pub fn rasterize(
    plan: &RenderPlan,
    splats: &[Splat],
    cam: &Camera,
    opts: &RenderOptions,
) -> Result<Image, RenderError> {
    let live = live_projections(plan, splats, cam)?;
    let mut pixels = vec![[0.0; 3]; cam.width * cam.height];
    pixels.par_chunks_mut(cam.width).enumerate().for_each(|(py, row)| {
        for (px, out) in row.iter_mut().enumerate() {
            let plane = Vector2::from(cam.pixel_to_plane(px, py));
            let mut t = 1.0;
            for e in plan.pixel_entries(cam, px, py) {
                let s = &splats[plan.entries[e].splat];
                let alpha = footprint(&live[e], s.opacity(), plane).0.min(opts.max_opacity);
                for c in 0..3 {
                    out[c] += t * alpha * s.amplitude[c];
                }
                t *= 1.0 - alpha;
                if t < opts.min_transmittance {
                    break;
                }
            }
        }
    });
    Ok(Image {
        width: cam.width,
        height: cam.height,
        pixels,
    })
}

pub fn render_splats(splats: &[Splat], cam: &Camera, opts: &RenderOptions) -> Result<Image, RenderError> {
    rasterize(&plan_splats(splats, cam)?, splats, cam, opts)
}
