//! Image loss and reverse-mode gradients through the splat rasterizer.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rayon::prelude::*;

use super::params::{normalize_quat, quat_to_rot, SplatParams, PARAM_LEN};
use super::FinetuneError;
use crate::render::{plan_splats, project, rasterize, ssim_with_grad, Camera, Image, RenderError, RenderOptions, RenderPlan};

/// `(1 - λ) L1 + λ (1 - SSIM)`; the SSIM term is skipped entirely when `λ = 0`.
pub fn loss(pred: &Image, gt: &Image, lambda_ssim: f64) -> Result<f64, RenderError> {
    Ok(loss_with_grad(pred, gt, lambda_ssim)?.0)
}

/// Loss and its gradient w.r.t. every predicted pixel channel. The L1
/// subgradient at a zero residual is taken as 0.
pub fn loss_with_grad(pred: &Image, gt: &Image, lambda_ssim: f64) -> Result<(f64, Vec<[f64; 3]>), RenderError> {
    pred.same_resolution(gt)?;
    let n = (pred.pixels.len() * 3) as f64;
    let mut l1 = 0.0;
    let mut grad: Vec<[f64; 3]> = pred
        .pixels
        .iter()
        .zip(&gt.pixels)
        .map(|(p, q)| {
            std::array::from_fn(|c| {
                let d = p[c] - q[c];
                l1 += d.abs();
                let sign = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                (1.0 - lambda_ssim) * sign / n
            })
        })
        .collect();
    let mut total = (1.0 - lambda_ssim) * l1 / n;
    if lambda_ssim > 0.0 {
        let (s, gs) = ssim_with_grad(pred, gt)?;
        total += lambda_ssim * (1.0 - s);
        for (g, d) in grad.iter_mut().zip(gs) {
            for c in 0..3 {
                g[c] -= lambda_ssim * d[c];
            }
        }
    }
    Ok((total, grad))
}

#[derive(Clone, Debug)]
pub struct Backward {
    pub loss: f64,
    pub pred: Image,
    /// Per splat, laid out as [`super::SplatParam::to_array`].
    pub grads: Vec<[f64; PARAM_LEN]>,
}

/// Loss of `params` replayed against a fixed plan.
pub fn loss_with_plan(
    params: &SplatParams,
    plan: &RenderPlan,
    cam: &Camera,
    gt: &Image,
    lambda_ssim: f64,
    opts: &RenderOptions,
) -> Result<f64, FinetuneError> {
    let pred = rasterize(plan, &params.materialize(), cam, opts)?;
    Ok(loss(&pred, gt, lambda_ssim)?)
}

/// Image-plane gradients of one planned entry.
#[derive(Clone, Copy, Default)]
struct EntryGrad {
    mean: [f64; 2],
    /// w.r.t. conic entries (a00, a01, a11), a01 counted once.
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
}

impl EntryGrad {
    fn add(&mut self, o: &EntryGrad) {
        for i in 0..2 {
            self.mean[i] += o.mean[i];
        }
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.color[i] += o.color[i];
        }
        self.opacity += o.opacity;
    }
}

const ROW_BLOCK: usize = 8;

pub fn backward(
    params: &SplatParams,
    cam: &Camera,
    gt: &Image,
    lambda_ssim: f64,
    opts: &RenderOptions,
) -> Result<Backward, FinetuneError> {
    let splats = params.materialize();
    let plan = plan_splats(&splats, cam)?;
    backward_with_plan(params, &plan, cam, gt, lambda_ssim, opts)
}

/// Exact gradients of the loss for a fixed depth order and footprint.
pub fn backward_with_plan(
    params: &SplatParams,
    plan: &RenderPlan,
    cam: &Camera,
    gt: &Image,
    lambda_ssim: f64,
    opts: &RenderOptions,
) -> Result<Backward, FinetuneError> {
    let splats = params.materialize();
    let pred = rasterize(plan, &splats, cam, opts)?;
    let (loss, dpix) = loss_with_grad(&pred, gt, lambda_ssim)?;
    let live = plan
        .entries
        .iter()
        .map(|e| project(&splats[e.splat], cam).ok_or(RenderError::SingularCovariance(e.splat)))
        .collect::<Result<Vec<_>, _>>()?;
    let n_entries = plan.entries.len();

    // row blocks accumulate privately and are merged in block order
    let blocks: Vec<Vec<EntryGrad>> = (0..cam.height.div_ceil(ROW_BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![EntryGrad::default(); n_entries];
            let mut chain: Vec<(usize, f64, f64, f64, Vector2<f64>, bool)> = Vec::new();
            for py in b * ROW_BLOCK..((b + 1) * ROW_BLOCK).min(cam.height) {
                for px in 0..cam.width {
                    let g = dpix[py * cam.width + px];
                    if g == [0.0; 3] {
                        continue;
                    }
                    let plane = Vector2::from(cam.pixel_to_plane(px, py));
                    chain.clear();
                    let mut t = 1.0;
                    for e in plan.pixel_entries(cam, px, py) {
                        let s = &splats[plan.entries[e].splat];
                        let p = &live[e];
                        let d = plane - p.mean;
                        let gauss = (-0.5 * d.dot(&(p.conic * d))).exp();
                        let raw = s.opacity() * gauss;
                        let clamped = raw > opts.max_opacity;
                        let alpha = raw.min(opts.max_opacity);
                        chain.push((e, alpha, t, gauss, d, clamped));
                        t *= 1.0 - alpha;
                        if t < opts.min_transmittance {
                            break;
                        }
                    }
                    let mut behind = [0.0; 3];
                    for &(e, alpha, t, gauss, d, clamped) in chain.iter().rev() {
                        let s = &splats[plan.entries[e].splat];
                        let c = s.rgb();
                        let eg = &mut acc[e];
                        let mut dalpha = 0.0;
                        for ch in 0..3 {
                            eg.color[ch] += g[ch] * alpha * t;
                            dalpha += g[ch] * (c[ch] * t - behind[ch] / (1.0 - alpha));
                            behind[ch] += c[ch] * alpha * t;
                        }
                        if clamped {
                            continue;
                        }
                        eg.opacity += dalpha * gauss;
                        // alpha = a exp(e), e = -½ dᵀ A d, d = plane - mean
                        let de = dalpha * alpha;
                        let ad = live[e].conic * d;
                        eg.mean[0] += de * ad.x;
                        eg.mean[1] += de * ad.y;
                        eg.conic[0] += de * (-0.5 * d.x * d.x);
                        eg.conic[1] += de * (-d.x * d.y);
                        eg.conic[2] += de * (-0.5 * d.y * d.y);
                    }
                }
            }
            acc
        })
        .collect();
    let mut entry_grads = vec![EntryGrad::default(); n_entries];
    for block in &blocks {
        for (a, b) in entry_grads.iter_mut().zip(block) {
            a.add(b);
        }
    }

    let mut grads = vec![[0.0; PARAM_LEN]; params.len()];
    let proj_rows = nalgebra::Matrix2x3::from_rows(&[cam.right.transpose(), cam.up.transpose()]);
    for (k, entry) in plan.entries.iter().enumerate() {
        let eg = &entry_grads[k];
        let sp = &params.splats[entry.splat];
        let out = &mut grads[entry.splat];
        let a = live[k].conic;
        let g_conic = Matrix2::new(eg.conic[0], 0.5 * eg.conic[1], 0.5 * eg.conic[1], eg.conic[2]);
        let g_cov2 = -(a * g_conic * a);
        let g_cov3: Matrix3<f64> = proj_rows.transpose() * g_cov2 * proj_rows;

        let g_center = proj_rows.transpose() * Vector2::new(eg.mean[0], eg.mean[1]);
        for i in 0..3 {
            out[i] += g_center[i];
        }

        let (qn, qnorm) = normalize_quat(sp.rotation);
        let r = quat_to_rot(qn);
        let s = sp.scales();
        let d = Matrix3::from_diagonal(&Vector3::from(s.map(|v| v * v)));
        // Σ = R D Rᵀ
        let rt_g_r = r.transpose() * g_cov3 * r;
        for i in 0..3 {
            out[3 + i] += 2.0 * s[i] * s[i] * rt_g_r[(i, i)];
        }
        let g_r = 2.0 * g_cov3 * r * d;
        let g_qn = quat_grad(qn, &g_r);
        let dot: f64 = (0..4).map(|i| qn[i] * g_qn[i]).sum();
        for i in 0..4 {
            out[6 + i] += (g_qn[i] - qn[i] * dot) / qnorm;
        }

        let rgb = sp.rgb();
        for c in 0..3 {
            out[10 + c] += eg.color[c] * rgb[c] * (1.0 - rgb[c]);
        }
        let op = sp.opacity();
        out[13] += eg.opacity * op * (1.0 - op);
    }
    Ok(Backward { loss, pred, grads })
}

/// `Σ_ij G_ij ∂R_ij/∂q` for the unit-quaternion rotation formula.
fn quat_grad(q: [f64; 4], g: &Matrix3<f64>) -> [f64; 4] {
    let [w, x, y, z] = q;
    let dw = Matrix3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let dx = Matrix3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x);
    let dy = Matrix3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y);
    let dz = Matrix3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0);
    [dw, dx, dy, dz].map(|m| m.component_mul(g).sum())
}
