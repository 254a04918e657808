//! Wavelet-to-Gaussian transition bank.
//!
//! For every subband the spatial response of a single unit coefficient (the
//! canonical kernel) is approximated by one Gaussian: its magnitude is
//! normalized into a weight field, thresholded to the dominant lobe, and the
//! lobe's weighted first and second moments give center and covariance. A
//! ridge fit then scales the Gaussian envelope to the kernel magnitude.
//! Any other coefficient of the same band reuses that Gaussian translated by
//! `stride * (k - anchor)`.
//!
//! Kernel fits live in voxel-index coordinates (voxel `i` at position `i`);
//! [`lookup`] adds the subpixel offset and so returns cell coordinates
//! (voxel `i` centered at `i + 0.5`), which [`crate::volume::WorldFrame`]
//! maps to world space.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{self, ContainerError, Reader};
use crate::wavelet::{
    band_list, idwt3, impulse_pyramid, level_dims, BandKey, Boundary, Filter, WaveletError,
};

/// Covariance floor added to every fitted lobe, in voxel².
pub const COVARIANCE_FLOOR: f64 = 1e-4;
pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-6;
pub const DEFAULT_SUBPIXEL_OFFSET: [f64; 3] = [0.5; 3];

#[derive(Debug, Error)]
pub enum BankError {
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
    #[error("kernel is identically zero")]
    EmptyKernel,
    #[error("gaussian has zero energy over the region of interest")]
    DegenerateGaussian,
    #[error("tau must lie in (0, 1), got {0}")]
    InvalidTau(f64),
    #[error("ridge lambda must be non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("band {band}: {source}")]
    Band {
        band: BandKey,
        #[source]
        source: Box<BankError>,
    },
    #[error("band {0} is not in the bank")]
    UnknownBand(BandKey),
    #[error("index {index:?} outside band {band} extent {extent:?}")]
    IndexOutOfRange {
        band: BandKey,
        index: [usize; 3],
        extent: [usize; 3],
    },
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Clone, Debug)]
pub struct CanonicalKernel {
    pub band: BandKey,
    pub values: Array3<f64>,
    pub anchor: [usize; 3],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianGeom {
    pub center: Vector3<f64>,
    pub covariance: Matrix3<f64>,
}

impl GaussianGeom {
    pub fn new(center: Vector3<f64>, covariance: Matrix3<f64>) -> Self {
        GaussianGeom { center, covariance }
    }

    pub fn isotropic(center: [f64; 3], sigma: f64) -> Self {
        GaussianGeom {
            center: Vector3::from(center),
            covariance: Matrix3::identity() * sigma * sigma,
        }
    }

    pub fn precision(&self) -> Result<Matrix3<f64>, BankError> {
        self.covariance
            .cholesky()
            .map(|c| c.inverse())
            .ok_or(BankError::NotPositiveDefinite)
    }

    /// Unnormalized Gaussian `exp(-½ dᵀ Σ⁻¹ d)` with the given precision.
    pub fn eval_with(&self, precision: &Matrix3<f64>, p: Vector3<f64>) -> f64 {
        let d = p - self.center;
        (-0.5 * d.dot(&(precision * d))).exp()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.covariance).eigenvalues.min()
    }
}

/// Voxels of a kernel's dominant lobe.
#[derive(Clone, Debug, PartialEq)]
pub struct Roi {
    pub voxels: Vec<[usize; 3]>,
}

impl Roi {
    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }
}

fn position(v: [usize; 3]) -> Vector3<f64> {
    Vector3::new(v[0] as f64, v[1] as f64, v[2] as f64)
}

/// Spatial response of a unit coefficient at the band-center index.
pub fn canonical_kernel(
    dims: [usize; 3],
    levels: usize,
    filter: Filter,
    boundary: Boundary,
    band: BandKey,
) -> Result<CanonicalKernel, BankError> {
    if !band.is_valid_for(levels) {
        return Err(WaveletError::InvalidBand { band, levels }.into());
    }
    let anchor = level_dims(dims, band.level).map(|n| n / 2);
    kernel_at(dims, levels, filter, boundary, band, anchor)
}

/// Spatial response of a unit coefficient at an arbitrary index.
pub fn kernel_at(
    dims: [usize; 3],
    levels: usize,
    filter: Filter,
    boundary: Boundary,
    band: BandKey,
    k: [usize; 3],
) -> Result<CanonicalKernel, BankError> {
    let pyramid = impulse_pyramid(dims, levels, filter, boundary, band, k)?;
    let values = idwt3(&pyramid)?;
    Ok(CanonicalKernel {
        band,
        values,
        anchor: k,
    })
}

/// Voxels whose normalized magnitude exceeds `tau` times the peak.
pub fn dominant_lobe_roi(kernel: &CanonicalKernel, tau: f64) -> Result<Roi, BankError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(BankError::InvalidTau(tau));
    }
    let peak = kernel.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(BankError::EmptyKernel);
    }
    // W = |v| / Σ|v|; the normalization cancels in the relative test
    let voxels = kernel
        .values
        .indexed_iter()
        .filter(|(_, v)| v.abs() > tau * peak)
        .map(|((i, j, k), _)| [i, j, k])
        .collect();
    Ok(Roi { voxels })
}

/// Weighted moments of |kernel| over its dominant lobe.
pub fn fit_dominant_lobe(kernel: &CanonicalKernel, tau: f64) -> Result<GaussianGeom, BankError> {
    let roi = dominant_lobe_roi(kernel, tau)?;
    Ok(moments_over(kernel, &roi))
}

fn moments_over(kernel: &CanonicalKernel, roi: &Roi) -> GaussianGeom {
    let total: f64 = kernel.values.iter().map(|v| v.abs()).sum();
    let weight = |v: [usize; 3]| kernel.values[v].abs() / total;
    let mass: f64 = roi.voxels.iter().map(|&v| weight(v)).sum();
    let center = roi
        .voxels
        .iter()
        .fold(Vector3::zeros(), |acc, &v| acc + position(v) * weight(v))
        / mass;
    let mut cov = roi.voxels.iter().fold(Matrix3::zeros(), |acc, &v| {
        let d = position(v) - center;
        acc + d * d.transpose() * weight(v)
    }) / mass;
    cov = 0.5 * (cov + cov.transpose());
    cov += Matrix3::identity() * COVARIANCE_FLOOR;
    GaussianGeom::new(center, cov)
}

/// Closed-form scalar ridge fit `argmin_w Σ(|y| - w g)² + λ w²` over the ROI.
pub fn fit_energy_weight(
    kernel: &CanonicalKernel,
    geom: &GaussianGeom,
    roi: &Roi,
    ridge_lambda: f64,
) -> Result<f64, BankError> {
    if !(ridge_lambda >= 0.0) {
        return Err(BankError::InvalidLambda(ridge_lambda));
    }
    let precision = geom.precision()?;
    let (mut gy, mut gg) = (0.0, 0.0);
    for &v in &roi.voxels {
        let g = geom.eval_with(&precision, position(v));
        gy += g * kernel.values[v].abs();
        gg += g * g;
    }
    ridge_weight(gy, gg, ridge_lambda)
}

pub(crate) fn ridge_weight(gy: f64, gg: f64, lambda: f64) -> Result<f64, BankError> {
    if gg == 0.0 {
        return Err(BankError::DegenerateGaussian);
    }
    Ok((gy / (gg + lambda)).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitionEntry {
    pub band: BandKey,
    /// Canonical Gaussian in voxel-index coordinates.
    pub geom: GaussianGeom,
    /// Energy weight broadcast to the four RGBA channels.
    pub weight: [f64; 4],
    pub stride: usize,
    pub subpixel_offset: [f64; 3],
    pub anchor: [usize; 3],
    /// Sign of the kernel's dominant lobe relative to the positive envelope.
    pub lobe_sign: f64,
    /// Relative L² error of `lobe_sign * w * g` against the kernel over the ROI.
    pub fit_residual: f64,
    pub roi_size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionBank {
    pub source_dims: [usize; 3],
    pub levels: usize,
    pub filter: Filter,
    pub boundary: Boundary,
    pub tau: f64,
    pub ridge_lambda: f64,
    pub entries: BTreeMap<BandKey, TransitionEntry>,
}

/// Fits one band's entry from its canonical kernel.
pub fn fit_entry(
    kernel: &CanonicalKernel,
    tau: f64,
    ridge_lambda: f64,
    subpixel_offset: [f64; 3],
) -> Result<TransitionEntry, BankError> {
    let roi = dominant_lobe_roi(kernel, tau)?;
    let geom = moments_over(kernel, &roi);
    let weight = fit_energy_weight(kernel, &geom, &roi, ridge_lambda)?;
    let precision = geom.precision()?;
    let gs: Vec<f64> = roi
        .voxels
        .iter()
        .map(|&v| geom.eval_with(&precision, position(v)))
        .collect();
    let signed: f64 = roi.voxels.iter().zip(&gs).map(|(&v, g)| g * kernel.values[v]).sum();
    let lobe_sign = if signed < 0.0 { -1.0 } else { 1.0 };
    let (mut err, mut norm) = (0.0, 0.0);
    for (&v, g) in roi.voxels.iter().zip(&gs) {
        let y = kernel.values[v];
        err += (y - lobe_sign * weight * g).powi(2);
        norm += y * y;
    }
    Ok(TransitionEntry {
        band: kernel.band,
        geom,
        weight: [weight; 4],
        stride: kernel.band.stride(),
        subpixel_offset,
        anchor: kernel.anchor,
        lobe_sign,
        fit_residual: (err / norm).sqrt(),
        roi_size: roi.len(),
    })
}

pub fn build_bank(
    dims: [usize; 3],
    levels: usize,
    filter: Filter,
    boundary: Boundary,
    tau: f64,
    ridge_lambda: f64,
) -> Result<TransitionBank, BankError> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(BankError::InvalidTau(tau));
    }
    if !(ridge_lambda >= 0.0) {
        return Err(BankError::InvalidLambda(ridge_lambda));
    }
    let entries = band_list(levels)
        .into_par_iter()
        .map(|band| {
            canonical_kernel(dims, levels, filter, boundary, band)
                .and_then(|k| fit_entry(&k, tau, ridge_lambda, DEFAULT_SUBPIXEL_OFFSET))
                .map(|e| (band, e))
                .map_err(|source| BankError::Band {
                    band,
                    source: Box::new(source),
                })
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .collect();
    Ok(TransitionBank {
        source_dims: dims,
        levels,
        filter,
        boundary,
        tau,
        ridge_lambda,
        entries,
    })
}

impl TransitionBank {
    pub fn entry(&self, band: &BandKey) -> Result<&TransitionEntry, BankError> {
        self.entries.get(band).ok_or(BankError::UnknownBand(*band))
    }

    pub fn band_extent(&self, band: &BandKey) -> [usize; 3] {
        level_dims(self.source_dims, band.level)
    }
}

/// Gaussian for coefficient `k` of `band`, in cell coordinates.
pub fn lookup(bank: &TransitionBank, band: &BandKey, k: [usize; 3]) -> Result<GaussianGeom, BankError> {
    let entry = bank.entry(band)?;
    let extent = bank.band_extent(band);
    if (0..3).any(|a| k[a] >= extent[a]) {
        return Err(BankError::IndexOutOfRange {
            band: *band,
            index: k,
            extent,
        });
    }
    let stride = entry.stride as f64;
    let center = Vector3::from_fn(|a, _| {
        entry.geom.center[a]
            + stride * (k[a] as f64 - entry.anchor[a] as f64)
            + entry.subpixel_offset[a]
    });
    Ok(GaussianGeom::new(center, entry.geom.covariance))
}

const MAGIC: &[u8; 8] = b"WSBANK01";
/// f64 fields per band record.
const RECORD_LEN: usize = 20;

#[derive(Serialize, Deserialize)]
struct BankHeader {
    source_dims: [usize; 3],
    levels: usize,
    filter: Filter,
    boundary: Boundary,
    tau: f64,
    ridge_lambda: f64,
    subpixel_offset: [f64; 3],
    bands: Vec<BandKey>,
    record_layout: Vec<String>,
}

fn record_layout() -> Vec<String> {
    [
        "level", "o_x", "o_y", "o_z", "anchor_x", "anchor_y", "anchor_z", "center_x", "center_y",
        "center_z", "cov_xx", "cov_xy", "cov_xz", "cov_yy", "cov_yz", "cov_zz", "weight",
        "lobe_sign", "fit_residual", "roi_size",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

pub fn encode_bank(bank: &TransitionBank) -> Vec<u8> {
    let offset = bank
        .entries
        .values()
        .next()
        .map(|e| e.subpixel_offset)
        .unwrap_or(DEFAULT_SUBPIXEL_OFFSET);
    let header = BankHeader {
        source_dims: bank.source_dims,
        levels: bank.levels,
        filter: bank.filter,
        boundary: bank.boundary,
        tau: bank.tau,
        ridge_lambda: bank.ridge_lambda,
        subpixel_offset: offset,
        bands: bank.entries.keys().copied().collect(),
        record_layout: record_layout(),
    };
    let mut payload = Vec::with_capacity(bank.entries.len() * RECORD_LEN * 8);
    for e in bank.entries.values() {
        let c = &e.geom.covariance;
        let o = e.band.orientation.map(|p| (p == crate::wavelet::Pass::H) as u8 as f64);
        let rec = [
            e.band.level as f64,
            o[0],
            o[1],
            o[2],
            e.anchor[0] as f64,
            e.anchor[1] as f64,
            e.anchor[2] as f64,
            e.geom.center[0],
            e.geom.center[1],
            e.geom.center[2],
            c[(0, 0)],
            c[(0, 1)],
            c[(0, 2)],
            c[(1, 1)],
            c[(1, 2)],
            c[(2, 2)],
            e.weight[0],
            e.lobe_sign,
            e.fit_residual,
            e.roi_size as f64,
        ];
        for v in rec {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    container::encode(MAGIC, &header, &payload)
}

pub fn decode_bank(bytes: &[u8]) -> Result<TransitionBank, BankError> {
    let (h, payload): (BankHeader, _) = container::decode(MAGIC, bytes)?;
    let mut r = Reader::new(payload);
    let mut entries = BTreeMap::new();
    for band in &h.bands {
        let mut rec = [0.0; RECORD_LEN];
        for slot in rec.iter_mut() {
            *slot = r.f64()?;
        }
        if rec[0] as usize != band.level {
            return Err(ContainerError::Payload(format!("record level for {band}")).into());
        }
        let cov = Matrix3::new(
            rec[10], rec[11], rec[12], rec[11], rec[13], rec[14], rec[12], rec[14], rec[15],
        );
        entries.insert(
            *band,
            TransitionEntry {
                band: *band,
                geom: GaussianGeom::new(Vector3::new(rec[7], rec[8], rec[9]), cov),
                weight: [rec[16]; 4],
                stride: band.stride(),
                subpixel_offset: h.subpixel_offset,
                anchor: [rec[4] as usize, rec[5] as usize, rec[6] as usize],
                lobe_sign: rec[17],
                fit_residual: rec[18],
                roi_size: rec[19] as usize,
            },
        );
    }
    r.finish()?;
    Ok(TransitionBank {
        source_dims: h.source_dims,
        levels: h.levels,
        filter: h.filter,
        boundary: h.boundary,
        tau: h.tau,
        ridge_lambda: h.ridge_lambda,
        entries,
    })
}

pub fn write_bank(path: &Path, bank: &TransitionBank) -> Result<(), BankError> {
    Ok(container::write_file(path, &encode_bank(bank))?)
}

pub fn read_bank(path: &Path) -> Result<TransitionBank, BankError> {
    decode_bank(&container::read_file(path)?)
}
