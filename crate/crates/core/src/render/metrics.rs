use super::{Image, RenderError};

pub const PSNR_CAP: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Peak signal-to-noise ratio on `[0, 1]` pixels over all channels.
pub fn psnr(a: &Image, b: &Image) -> Result<f64, RenderError> {
    a.same_resolution(b)?;
    let n = (a.pixels.len() * 3) as f64;
    let mse = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).powi(2)))
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] = std::array::from_fn(|i| (-((i as f64 - r).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable windowed mean over every fully contained window.
fn blur_valid(src: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..SSIM_WINDOW).map(|k| taps[k] * src[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| taps[k] * tmp[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`blur_valid`]: scatters a window map back onto the image grid.
fn blur_adjoint(map: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            let v = map[y * ow + x];
            for k in 0..SSIM_WINDOW {
                tmp[(y + k) * ow + x] += taps[k] * v;
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            let v = tmp[y * ow + x];
            for k in 0..SSIM_WINDOW {
                out[y * w + x + k] += taps[k] * v;
            }
        }
    }
    out
}

fn check_sizes(a: &Image, b: &Image) -> Result<(), RenderError> {
    a.same_resolution(b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(RenderError::TooSmall {
            min: SSIM_WINDOW,
            got: a.resolution(),
        });
    }
    Ok(())
}

/// Mean SSIM of one channel, and optionally its gradient w.r.t. `x`.
fn ssim_channel(x: &[f64], y: &[f64], w: usize, h: usize, grad: bool) -> (f64, Option<Vec<f64>>) {
    let taps = gaussian_taps();
    let prod = |f: &dyn Fn(usize) -> f64| (0..x.len()).map(f).collect::<Vec<f64>>();
    let mx = blur_valid(x, w, h, &taps);
    let my = blur_valid(y, w, h, &taps);
    let mxx = blur_valid(&prod(&|i| x[i] * x[i]), w, h, &taps);
    let myy = blur_valid(&prod(&|i| y[i] * y[i]), w, h, &taps);
    let mxy = blur_valid(&prod(&|i| x[i] * y[i]), w, h, &taps);
    let n = mx.len();
    let mut total = 0.0;
    let (mut da, mut db, mut dc) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        let n1 = 2.0 * ux * uy + C1;
        let d1 = ux * ux + uy * uy + C1;
        let n2 = 2.0 * cxy + C2;
        let d2 = vx + vy + C2;
        let s = n1 * n2 / (d1 * d2);
        total += s;
        if grad {
            let ds_dux = 2.0 * uy * n2 / (d1 * d2) - s * 2.0 * ux / d1;
            let ds_dvx = -s / d2;
            let ds_dcxy = 2.0 * n1 / (d1 * d2);
            // dS/dx_q = w_q (ds_dux + 2 ds_dvx (x_q - ux) + ds_dcxy (y_q - uy))
            da[i] = ds_dux - 2.0 * ds_dvx * ux - ds_dcxy * uy;
            db[i] = 2.0 * ds_dvx;
            dc[i] = ds_dcxy;
        }
    }
    let mean = total / n as f64;
    if !grad {
        return (mean, None);
    }
    let (ga, gb, gc) = (blur_adjoint(&da, w, h, &taps), blur_adjoint(&db, w, h, &taps), blur_adjoint(&dc, w, h, &taps));
    let g = (0..x.len())
        .map(|q| (ga[q] + gb[q] * x[q] + gc[q] * y[q]) / n as f64)
        .collect();
    (mean, Some(g))
}

/// Single-scale SSIM, channel-averaged mean over all fully contained windows.
pub fn ssim(a: &Image, b: &Image) -> Result<f64, RenderError> {
    check_sizes(a, b)?;
    if a == b {
        return Ok(1.0);
    }
    let total: f64 = (0..3)
        .map(|c| ssim_channel(&a.channel(c), &b.channel(c), a.width, a.height, false).0)
        .sum();
    Ok(total / 3.0)
}

/// SSIM of `pred` against `target` together with its gradient w.r.t. `pred`.
pub fn ssim_with_grad(pred: &Image, target: &Image) -> Result<(f64, Vec<[f64; 3]>), RenderError> {
    check_sizes(pred, target)?;
    let mut grad = vec![[0.0; 3]; pred.pixels.len()];
    let mut total = 0.0;
    for c in 0..3 {
        let (s, g) = ssim_channel(&pred.channel(c), &target.channel(c), pred.width, pred.height, true);
        total += s;
        for (out, v) in grad.iter_mut().zip(g.unwrap()) {
            out[c] = v / 3.0;
        }
    }
    Ok((total / 3.0, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn textured(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |x, y| {
            let base = 0.5 + 0.3 * ((x as f64 * 0.7).sin() * (y as f64 * 0.45).cos());
            [0, 1, 2].map(|c| (base + 0.15 * rng.gen_range(-1.0..1.0) + 0.05 * c as f64).clamp(0.0, 1.0))
        })
    }

    /// Direct per-window evaluation with an explicit 2D kernel.
    fn reference_ssim(a: &Image, b: &Image) -> f64 {
        let r = 5i64;
        let mut k = [[0.0; 11]; 11];
        let mut s = 0.0;
        for (i, row) in k.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (-(((i as i64 - r).pow(2) + (j as i64 - r).pow(2)) as f64) / 4.5).exp();
                s += *v;
            }
        }
        let mut total = 0.0;
        let mut count = 0;
        for c in 0..3 {
            for y0 in 0..=a.height - 11 {
                for x0 in 0..=a.width - 11 {
                    let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for i in 0..11 {
                        for j in 0..11 {
                            let w = k[i][j] / s;
                            let p = a.get(x0 + j, y0 + i)[c];
                            let q = b.get(x0 + j, y0 + i)[c];
                            mx += w * p;
                            my += w * q;
                            xx += w * p * p;
                            yy += w * q * q;
                            xy += w * p * q;
                        }
                    }
                    let (vx, vy, cxy) = (xx - mx * mx, yy - my * my, xy - mx * my);
                    total += (2.0 * mx * my + C1) * (2.0 * cxy + C2)
                        / ((mx * mx + my * my + C1) * (vx + vy + C2));
                    count += 1;
                }
            }
        }
        total / count as f64
    }

    #[test]
    fn psnr_examples() {
        let a = textured(12, 12, 1);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        let zero = Image::black(4, 4);
        let one = Image::filled(4, 4, [1.0; 3]);
        assert_eq!(psnr(&zero, &one).unwrap(), 0.0);
        let b = a.map(|v| v + 0.1);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        assert!(matches!(psnr(&a, &zero), Err(RenderError::ResolutionMismatch(..))));
    }

    #[test]
    fn ssim_examples() {
        let a = textured(24, 20, 2);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let inv = a.map(|v| 1.0 - v);
        let s = ssim(&a, &inv).unwrap();
        assert!((s - reference_ssim(&a, &inv)).abs() < 1e-12);
        assert!(s < 0.2, "{s}");
        let b = textured(24, 20, 3);
        assert!((ssim(&a, &b).unwrap() - reference_ssim(&a, &b)).abs() < 1e-12);
    }

    #[test]
    fn ssim_constant_patches() {
        let a = Image::filled(16, 16, [0.4; 3]);
        let b = Image::filled(16, 16, [0.5; 3]);
        let (m1, m2) = (0.4, 0.5);
        let expected = (2.0 * m1 * m2 + C1) * C2 / ((m1 * m1 + m2 * m2 + C1) * C2);
        assert!((ssim(&a, &b).unwrap() - expected).abs() < 1e-9);
        assert!(matches!(ssim(&Image::black(10, 20), &Image::black(10, 20)), Err(RenderError::TooSmall { .. })));
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let a = textured(14, 13, 4);
        let b = textured(14, 13, 5);
        let (s, g) = ssim_with_grad(&a, &b).unwrap();
        assert!((s - ssim(&a, &b).unwrap()).abs() < 1e-14);
        let h = 1e-6;
        for &(px, c) in &[(0usize, 0usize), (20, 1), (90, 2), (181, 0)] {
            let mut p = a.clone();
            p.pixels[px][c] += h;
            let mut m = a.clone();
            m.pixels[px][c] -= h;
            let fd = (ssim(&p, &b).unwrap() - ssim(&m, &b).unwrap()) / (2.0 * h);
            assert!((fd - g[px][c]).abs() < 1e-7 * (1.0 + fd.abs()), "{px}/{c}: {fd} vs {}", g[px][c]);
        }
    }
}
