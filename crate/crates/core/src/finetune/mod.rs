//! Image-space refinement of splat parameters against reference renderings.
//!
//! Each step renders one randomly chosen view, backpropagates the image loss
//! analytically and applies an Adam update with per-group learning rates.
//! Splat count never changes.

mod backward;
mod params;

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backward::{backward, backward_with_plan, loss, loss_with_grad, loss_with_plan, Backward};
pub use params::{Group, SplatParam, SplatParams, PARAM_LEN, PROB_EPS};

use crate::construct::ConstructError;
use crate::render::{psnr, render_splats, Camera, Image, RenderError, RenderOptions};

pub const DEFAULT_LAMBDA_SSIM: f64 = 0.2;

#[derive(Debug, Error)]
pub enum FinetuneError {
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error("non-finite loss {loss} at iteration {iter} (view {view})")]
    NonFiniteLoss { iter: usize, view: usize, loss: f64 },
    #[error("no training views")]
    NoViews,
    #[error("invalid finetune config: {0}")]
    InvalidConfig(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningRates {
    pub center: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub rgb: f64,
    pub opacity: f64,
}

impl LearningRates {
    /// Defaults; the center rate scales with the scene's half-diagonal.
    pub fn for_extent(scene_extent: f64) -> Self {
        LearningRates {
            center: 2e-4 * scene_extent,
            log_scale: 5e-3,
            rotation: 1e-3,
            rgb: 2.5e-3,
            opacity: 5e-2,
        }
    }

    pub fn zero() -> Self {
        LearningRates {
            center: 0.0,
            log_scale: 0.0,
            rotation: 0.0,
            rgb: 0.0,
            opacity: 0.0,
        }
    }

    pub fn get(&self, group: Group) -> f64 {
        match group {
            Group::Center => self.center,
            Group::LogScale => self.log_scale,
            Group::Rotation => self.rotation,
            Group::Rgb => self.rgb,
            Group::Opacity => self.opacity,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub step: u64,
    pub rates: LearningRates,
    pub adam: AdamConfig,
    pub first_moment: Vec<[f64; PARAM_LEN]>,
    pub second_moment: Vec<[f64; PARAM_LEN]>,
}

impl OptState {
    pub fn new(n: usize, rates: LearningRates, adam: AdamConfig) -> Self {
        OptState {
            step: 0,
            rates,
            adam,
            first_moment: vec![[0.0; PARAM_LEN]; n],
            second_moment: vec![[0.0; PARAM_LEN]; n],
        }
    }

    pub fn apply(&mut self, params: &mut SplatParams, grads: &[[f64; PARAM_LEN]]) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.adam;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (i, sp) in params.splats.iter_mut().enumerate() {
            let mut x = sp.to_array();
            let (m, v) = (&mut self.first_moment[i], &mut self.second_moment[i]);
            for group in Group::ALL {
                let lr = self.rates.get(group);
                for j in group.range() {
                    let g = grads[i][j];
                    m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                    v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                    if lr != 0.0 {
                        x[j] -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
                    }
                }
            }
            *sp = SplatParam::from_array(&x);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub iters: usize,
    pub rates: LearningRates,
    pub adam: AdamConfig,
    pub seed: u64,
    pub lambda_ssim: f64,
    pub render: RenderOptions,
}

impl FinetuneConfig {
    pub fn new(iters: usize, rates: LearningRates, seed: u64) -> Self {
        FinetuneConfig {
            iters,
            rates,
            adam: AdamConfig::default(),
            seed,
            lambda_ssim: DEFAULT_LAMBDA_SSIM,
            render: RenderOptions::default(),
        }
    }
}

/// A training view: camera and its reference image.
#[derive(Clone, Debug)]
pub struct View {
    pub camera: Camera,
    pub target: Image,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub iter: usize,
    pub view: usize,
    pub loss: f64,
    pub psnr: f64,
}

#[derive(Clone, Debug)]
pub struct FinetuneOutcome {
    pub params: SplatParams,
    pub state: OptState,
    pub log: Vec<LogEntry>,
}

pub fn optimize(params: SplatParams, views: &[View], config: &FinetuneConfig) -> Result<FinetuneOutcome, FinetuneError> {
    if views.is_empty() {
        return Err(FinetuneError::NoViews);
    }
    if !(0.0..=1.0).contains(&config.lambda_ssim) {
        return Err(FinetuneError::InvalidConfig(format!("lambda_ssim {} outside [0, 1]", config.lambda_ssim)));
    }
    let mut params = params;
    let mut state = OptState::new(params.len(), config.rates, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut log = Vec::with_capacity(config.iters);
    for iter in 0..config.iters {
        let view = rng.gen_range(0..views.len());
        let v = &views[view];
        let b = backward(&params, &v.camera, &v.target, config.lambda_ssim, &config.render)?;
        if !b.loss.is_finite() || b.grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(FinetuneError::NonFiniteLoss { iter, view, loss: b.loss });
        }
        log.push(LogEntry {
            iter,
            view,
            loss: b.loss,
            psnr: psnr(&b.pred, &v.target)?,
        });
        state.apply(&mut params, &b.grads);
    }
    Ok(FinetuneOutcome { params, state, log })
}

/// Mean loss and mean PSNR over a set of views.
pub fn evaluate_views(params: &SplatParams, views: &[View], lambda_ssim: f64, opts: &RenderOptions) -> Result<(f64, f64), FinetuneError> {
    if views.is_empty() {
        return Err(FinetuneError::NoViews);
    }
    let splats = params.materialize();
    let (mut l, mut p) = (0.0, 0.0);
    for v in views {
        let img = render_splats(&splats, &v.camera, opts)?;
        l += loss(&img, &v.target, lambda_ssim)?;
        p += psnr(&img, &v.target)?;
    }
    let n = views.len() as f64;
    Ok((l / n, p / n))
}

pub fn log_to_csv(log: &[LogEntry]) -> String {
    let mut out = String::from("iter,view,loss,psnr\n");
    for e in log {
        writeln!(out, "{},{},{:.17e},{:.17e}", e.iter, e.view, e.loss, e.psnr).unwrap();
    }
    out
}

pub fn write_state(path: &Path, state: &OptState) -> Result<(), FinetuneError> {
    let json = serde_json::to_vec_pretty(state).map_err(|e| FinetuneError::Checkpoint(e.to_string()))?;
    std::fs::write(path, json).map_err(|e| FinetuneError::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn read_state(path: &Path) -> Result<OptState, FinetuneError> {
    let bytes = std::fs::read(path).map_err(|e| FinetuneError::Checkpoint(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| FinetuneError::Checkpoint(e.to_string()))
}
