//! Analytic splat construction from retained wavelet coefficients.
//!
//! Each retained coefficient `A` of band `(j, o)` at index `k` becomes one
//! Gaussian: the bank's canonical lobe translated to `k`, mapped to world
//! space, with RGBA amplitude `s * p`, where `p` is the coefficient scaled by
//! the band's energy weight.

mod ply;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Rotation3, SymmetricEigen, UnitQuaternion, Vector3};
use ndarray::{Array4, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{lookup, BankError, TransitionBank};
use crate::container::ContainerError;
use crate::sparsify::SparsePyramid;
use crate::volume::{RadianceVolume, VolumeMeta, WorldBox, WorldFrame};
use crate::wavelet::BandKey;

pub use ply::{export_ply, import_ply, read_ply, sidecar_path, write_ply, write_sidecar, PlyVertex, Sidecar, PROPERTIES, SH_C0};

/// Splats are Gaussians truncated at this Mahalanobis radius; beyond it a
/// full Gaussian is below `exp(-4.5)` of its peak.
pub const CUTOFF_SIGMAS: f64 = 3.0;
/// Coefficients whose modulated amplitude stays below this are dropped.
pub const SKIP_AMPLITUDE: f64 = 1e-12;
pub const MAX_EXPORT_OPACITY: f64 = 0.99;

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error(transparent)]
    Bank(#[from] BankError),
    #[error("sparse pyramid and bank disagree: {0}")]
    StructureMismatch(String),
    #[error("splat {0} has a singular covariance")]
    SingularCovariance(usize),
    #[error("covariance is not positive definite (eigenvalues {0:?})")]
    NotPd([f64; 3]),
    #[error("splat {index} cannot be exported: {reason}")]
    NonExportableSplat { index: usize, reason: String },
    #[error("PLY: {0}")]
    Ply(String),
    #[error("unknown {kind} {value:?}")]
    UnknownMode { kind: &'static str, value: String },
    #[error(transparent)]
    Io(#[from] ContainerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GainMode {
    /// Energy weight only.
    #[default]
    Fitted,
    /// Energy weight times the separable multirate gain `2^(-3j/2)`.
    Multirate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignMode {
    /// `|A| * w`: nonnegative amplitudes suitable for rendering.
    #[default]
    Magnitude,
    /// `A * w` times the lobe sign, which reproduces signed detail.
    Signed,
}

macro_rules! mode_strings {
    ($ty:ident, $kind:literal, $($var:ident => $s:literal),+) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $($ty::$var => $s),+ })
            }
        }
        impl FromStr for $ty {
            type Err = ConstructError;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($s => Ok($ty::$var),)+
                    _ => Err(ConstructError::UnknownMode { kind: $kind, value: s.to_string() }),
                }
            }
        }
    };
}

mode_strings!(GainMode, "gain mode", Fitted => "fitted", Multirate => "multirate");
mode_strings!(SignMode, "sign mode", Magnitude => "magnitude", Signed => "signed");

impl GainMode {
    pub fn scale(self, coarse_index: usize) -> f64 {
        match self {
            GainMode::Fitted => 1.0,
            GainMode::Multirate => 2f64.powf(-1.5 * coarse_index as f64),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splat {
    /// World-space center.
    pub center: Vector3<f64>,
    /// World-space covariance.
    pub covariance: Matrix3<f64>,
    /// RGBA amplitude; after export normalization rgb is color and a opacity.
    pub amplitude: [f64; 4],
    pub band: Option<BandKey>,
}

impl Splat {
    pub fn rgb(&self) -> [f64; 3] {
        [self.amplitude[0], self.amplitude[1], self.amplitude[2]]
    }

    pub fn opacity(&self) -> f64 {
        self.amplitude[3]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplatSet {
    pub splats: Vec<Splat>,
    pub world_box: WorldBox,
    pub gain_mode: GainMode,
    pub sign_mode: SignMode,
}

impl SplatSet {
    pub fn empty(world_box: WorldBox, gain_mode: GainMode, sign_mode: SignMode) -> Self {
        SplatSet {
            splats: Vec::new(),
            world_box,
            gain_mode,
            sign_mode,
        }
    }

    pub fn len(&self) -> usize {
        self.splats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splats.is_empty()
    }

    pub fn counts_per_band(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for s in &self.splats {
            let key = s.band.map_or_else(|| "untagged".to_string(), |b| b.to_string());
            *out.entry(key).or_insert(0) += 1;
        }
        out
    }

    /// Factor applied by [`SplatSet::export_normalized`].
    pub fn export_scale(&self) -> f64 {
        let peak = self.splats.iter().map(|s| s.opacity()).fold(0.0, f64::max);
        if peak > 0.0 {
            MAX_EXPORT_OPACITY / peak
        } else {
            1.0
        }
    }

    /// Renderable copy: amplitudes rescaled globally so the largest opacity
    /// is [`MAX_EXPORT_OPACITY`], then color and opacity clamped to `[0, 1]`.
    pub fn export_normalized(&self) -> SplatSet {
        let f = self.export_scale();
        let splats = self
            .splats
            .iter()
            .map(|s| Splat {
                amplitude: s.amplitude.map(|v| (v * f).clamp(0.0, 1.0)),
                ..s.clone()
            })
            .collect();
        SplatSet {
            splats,
            ..self.clone()
        }
    }

    pub fn concat(mut self, other: SplatSet) -> SplatSet {
        self.splats.extend(other.splats);
        self
    }
}

/// One retained coefficient to one world-space splat, or `None` when its
/// amplitude vanishes.
pub fn coeff_to_splat(
    bank: &TransitionBank,
    frame: &WorldFrame,
    band: BandKey,
    k: [usize; 3],
    coeff: [f64; 4],
    gain_mode: GainMode,
    sign_mode: SignMode,
) -> Result<Option<Splat>, ConstructError> {
    let geom = lookup(bank, &band, k)?;
    let entry = bank.entry(&band)?;
    let p: [f64; 4] = std::array::from_fn(|c| match sign_mode {
        SignMode::Magnitude => coeff[c].abs() * entry.weight[c],
        SignMode::Signed => coeff[c] * entry.weight[c] * entry.lobe_sign,
    });
    if p.iter().all(|v| v.abs() < SKIP_AMPLITUDE) {
        return Ok(None);
    }
    let s = gain_mode.scale(band.coarse_index(bank.levels));
    let center = Vector3::from(frame.cell_to_world(geom.center.into()));
    let scale = Matrix3::from_diagonal(&Vector3::from(frame.voxel_size));
    Ok(Some(Splat {
        center,
        covariance: scale * geom.covariance * scale,
        amplitude: p.map(|v| s * v),
        band: Some(band),
    }))
}

pub fn build_splats(
    sparse: &SparsePyramid,
    bank: &TransitionBank,
    frame: &WorldFrame,
    gain_mode: GainMode,
    sign_mode: SignMode,
) -> Result<SplatSet, ConstructError> {
    if sparse.source_dims != bank.source_dims
        || sparse.levels != bank.levels
        || sparse.filter != bank.filter
        || sparse.boundary != bank.boundary
    {
        return Err(ConstructError::StructureMismatch(format!(
            "sparse {:?}/J={}/{}/{} vs bank {:?}/J={}/{}/{}",
            sparse.source_dims,
            sparse.levels,
            sparse.filter,
            sparse.boundary,
            bank.source_dims,
            bank.levels,
            bank.filter,
            bank.boundary
        )));
    }
    if frame.dims != bank.source_dims {
        return Err(ConstructError::StructureMismatch(format!(
            "frame dims {:?} vs bank {:?}",
            frame.dims, bank.source_dims
        )));
    }
    let mut splats = Vec::with_capacity(sparse.retained());
    for (band, sb) in &sparse.bands {
        for (&k, &a) in sb.indices.iter().zip(&sb.values) {
            if let Some(s) = coeff_to_splat(bank, frame, *band, k, a, gain_mode, sign_mode)? {
                splats.push(s);
            }
        }
    }
    Ok(SplatSet {
        splats,
        world_box: frame.world_box(),
        gain_mode,
        sign_mode,
    })
}

struct Prepared {
    center: Vector3<f64>,
    precision: Matrix3<f64>,
    amplitude: [f64; 4],
    lo: [usize; 3],
    hi: [usize; 3],
}

fn prepare(splats: &[Splat], frame: &WorldFrame) -> Result<Vec<Prepared>, ConstructError> {
    let mut out = Vec::with_capacity(splats.len());
    for (i, s) in splats.iter().enumerate() {
        let precision = s
            .covariance
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(ConstructError::SingularCovariance(i))?;
        let reach: [f64; 3] = std::array::from_fn(|a| CUTOFF_SIGMAS * s.covariance[(a, a)].sqrt());
        let c: [f64; 3] = s.center.into();
        let lo_w = frame.world_to_index(std::array::from_fn(|a| c[a] - reach[a]));
        let hi_w = frame.world_to_index(std::array::from_fn(|a| c[a] + reach[a]));
        let n = frame.dims;
        if (0..3).any(|a| hi_w[a] < 0.0 || lo_w[a] > (n[a] - 1) as f64) {
            continue;
        }
        out.push(Prepared {
            center: s.center,
            precision,
            amplitude: s.amplitude,
            lo: std::array::from_fn(|a| lo_w[a].ceil().max(0.0) as usize),
            hi: std::array::from_fn(|a| (hi_w[a].floor() as usize).min(n[a] - 1)),
        });
    }
    Ok(out)
}

/// Squared Mahalanobis radius of the truncation boundary.
pub fn cutoff_radius2() -> f64 {
    CUTOFF_SIGMAS * CUTOFF_SIGMAS
}

/// Sum of the truncated splat Gaussians at every voxel center. The result is
/// the raw signed field; use [`RadianceVolume::clamped`] for display.
pub fn eval_mixture(splats: &SplatSet, meta: &VolumeMeta) -> Result<RadianceVolume, ConstructError> {
    let frame = meta.frame();
    let prepared = prepare(&splats.splats, &frame)?;
    let [nx, ny, nz] = meta.dims;
    let r2 = cutoff_radius2();
    let mut field = Array4::<f64>::zeros((nx, ny, nz, 4));
    field
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .enumerate()
        .for_each(|(x, mut slab)| {
            for p in prepared.iter().filter(|p| p.lo[0] <= x && x <= p.hi[0]) {
                for y in p.lo[1]..=p.hi[1] {
                    for z in p.lo[2]..=p.hi[2] {
                        let d = Vector3::from(frame.index_to_world([x, y, z])) - p.center;
                        let m = d.dot(&(p.precision * d));
                        if m > r2 {
                            continue;
                        }
                        let g = (-0.5 * m).exp();
                        for c in 0..4 {
                            slab[[y, z, c]] += p.amplitude[c] * g;
                        }
                    }
                }
            }
        });
    let channels = std::array::from_fn(|c| field.index_axis(Axis(3), c).to_owned());
    Ok(RadianceVolume::from_channels(meta.clone(), channels))
}

/// Export parameterization `Σ = R diag(s²) Rᵀ`: scales descending, proper
/// rotation, quaternion `(w, x, y, z)` with `w >= 0`.
pub fn cov_to_scale_rot(covariance: &Matrix3<f64>) -> Result<([f64; 3], [f64; 4]), ConstructError> {
    let sym = 0.5 * (covariance + covariance.transpose());
    let eig = SymmetricEigen::new(sym);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let vals: [f64; 3] = order.map(|i| eig.eigenvalues[i]);
    if !(vals[2] > 1e-10 * vals[0]) || !vals.iter().all(|v| v.is_finite()) {
        return Err(ConstructError::NotPd(vals));
    }
    let mut r = Matrix3::from_fn(|row, col| eig.eigenvectors[(row, order[col])]);
    if r.determinant() < 0.0 {
        r.column_mut(2).neg_mut();
    }
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
    let mut quat = [q.w, q.i, q.j, q.k];
    if quat[0] < 0.0 {
        quat = quat.map(|v| -v);
    }
    Ok((vals.map(f64::sqrt), quat))
}

/// Inverse of [`cov_to_scale_rot`]; the quaternion need not be normalized.
pub fn scale_rot_to_cov(scales: [f64; 3], quat: [f64; 4]) -> Matrix3<f64> {
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(quat[0], quat[1], quat[2], quat[3]));
    let r = q.to_rotation_matrix().into_inner();
    let s2 = Matrix3::from_diagonal(&Vector3::from(scales.map(|s| s * s)));
    r * s2 * r.transpose()
}
