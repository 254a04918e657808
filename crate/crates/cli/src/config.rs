use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wavesplat::bank::{DEFAULT_RIDGE_LAMBDA, DEFAULT_TAU};
use wavesplat::finetune::{LearningRates, DEFAULT_LAMBDA_SSIM};
use wavesplat::render::DEFAULT_HALF_EXTENT;
use wavesplat::volume::meta_path_for;
use wavesplat::{Boundary, Filter, GainMode, SignMode, SparsifyConfig};

use crate::error::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub output_dir: Option<PathBuf>,
    pub volume: VolumeSection,
    pub tf: TfSection,
    pub wavelet: WaveletSection,
    pub bank: BankSection,
    pub sparsify: SparsifyConfig,
    pub construct: ConstructSection,
    pub rig: RigSection,
    pub finetune: FinetuneSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumeSection {
    pub path: Option<PathBuf>,
    /// Defaults to `<stem>.meta.json` next to the raw file.
    pub meta: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TfSection {
    /// Grayscale ramp when absent.
    pub path: Option<PathBuf>,
    pub count: usize,
}

impl Default for TfSection {
    fn default() -> Self {
        TfSection { path: None, count: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WaveletSection {
    pub levels: usize,
    pub filter: Filter,
    pub boundary: Boundary,
}

impl Default for WaveletSection {
    fn default() -> Self {
        WaveletSection {
            levels: 3,
            filter: Filter::Bior44,
            boundary: Boundary::Symmetric,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BankSection {
    pub tau: f64,
    pub ridge_lambda: f64,
}

impl Default for BankSection {
    fn default() -> Self {
        BankSection {
            tau: DEFAULT_TAU,
            ridge_lambda: DEFAULT_RIDGE_LAMBDA,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConstructSection {
    pub gain_mode: GainMode,
    pub sign_mode: SignMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigSection {
    pub count: usize,
    pub radius: f64,
    pub resolution: [usize; 2],
    pub half_extent: f64,
    /// Ray-march step as a fraction of the voxel size.
    pub step_fraction: f64,
}

impl Default for RigSection {
    fn default() -> Self {
        RigSection {
            count: 8,
            radius: 3.0,
            resolution: [64, 64],
            half_extent: DEFAULT_HALF_EXTENT,
            step_fraction: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub iters: usize,
    pub seed: u64,
    pub lambda_ssim: f64,
    /// Scene-scaled defaults when absent.
    pub rates: Option<LearningRates>,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        FinetuneSection {
            iters: 300,
            seed: 0,
            lambda_ssim: DEFAULT_LAMBDA_SSIM,
            rates: None,
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

impl PipelineConfig {
    /// Parses a TOML file; relative paths inside it resolve against its directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.output_dir,
            &mut cfg.volume.path,
            &mut cfg.volume.meta,
            &mut cfg.tf.path,
        ] {
            if let Some(v) = p.as_mut() {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("wavesplat-out"))
    }

    pub fn volume_path(&self) -> Result<&Path, CliError> {
        self.volume
            .path
            .as_deref()
            .ok_or_else(|| invalid("volume.path", "is required"))
    }

    pub fn meta_path(&self) -> Result<PathBuf, CliError> {
        match &self.volume.meta {
            Some(m) => Ok(m.clone()),
            None => Ok(meta_path_for(self.volume_path()?)),
        }
    }

    /// Range checks owned by the library modules, reported with the config key.
    pub fn validate(&self) -> Result<(), CliError> {
        self.volume_path()?;
        if self.tf.count == 0 {
            return Err(invalid("tf.count", "must be at least 1"));
        }
        if self.wavelet.levels == 0 {
            return Err(invalid("wavelet.levels", "must be at least 1"));
        }
        if !(self.bank.tau > 0.0 && self.bank.tau < 1.0) {
            return Err(invalid("bank.tau", format!("{} is outside (0, 1)", self.bank.tau)));
        }
        if !(self.bank.ridge_lambda >= 0.0 && self.bank.ridge_lambda.is_finite()) {
            return Err(invalid(
                "bank.ridge_lambda",
                format!("{} must be finite and non-negative", self.bank.ridge_lambda),
            ));
        }
        self.sparsify.validate().map_err(|e| invalid("sparsify", e))?;
        let rig = &self.rig;
        if rig.count == 0 {
            return Err(invalid("rig.count", "must be at least 1"));
        }
        if !(rig.radius > DEFAULT_HALF_EXTENT) {
            return Err(invalid(
                "rig.radius",
                format!("{} must exceed the world half-diagonal {DEFAULT_HALF_EXTENT:.4}", rig.radius),
            ));
        }
        if rig.resolution.iter().any(|&r| r == 0) {
            return Err(invalid("rig.resolution", "must be positive"));
        }
        if !(rig.half_extent > 0.0) {
            return Err(invalid("rig.half_extent", "must be positive"));
        }
        if !(rig.step_fraction > 0.0 && rig.step_fraction <= 0.5) {
            return Err(invalid("rig.step_fraction", format!("{} is outside (0, 0.5]", rig.step_fraction)));
        }
        if !(0.0..=1.0).contains(&self.finetune.lambda_ssim) {
            return Err(invalid("finetune.lambda_ssim", "must lie in [0, 1]"));
        }
        if let Some(r) = &self.finetune.rates {
            let all = [r.center, r.log_scale, r.rotation, r.rgb, r.opacity];
            if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("finetune.rates", "must be finite and non-negative"));
            }
        }
        Ok(())
    }
}
