//! Binary little-endian PLY in the layout common to 3DGS viewers, plus a JSON
//! sidecar describing how the splats were produced.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{cov_to_scale_rot, scale_rot_to_cov, ConstructError, GainMode, SignMode, Splat, SplatSet};
use crate::container;

/// Zeroth-order spherical-harmonic basis constant.
pub const SH_C0: f64 = 0.28209479177387814;
const OPACITY_EPS: f64 = 1e-5;

pub const PROPERTIES: [&str; 17] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1",
    "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
];

/// One vertex record as stored on disk.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlyVertex {
    pub position: [f32; 3],
    pub normal: [f32; 3],
    pub f_dc: [f32; 3],
    pub opacity: f32,
    pub log_scale: [f32; 3],
    pub rotation: [f32; 4],
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(OPACITY_EPS, 1.0 - OPACITY_EPS);
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl PlyVertex {
    pub fn from_splat(index: usize, s: &Splat) -> Result<Self, ConstructError> {
        let bad = |reason: String| ConstructError::NonExportableSplat { index, reason };
        if !s.center.iter().chain(s.amplitude.iter()).all(|v| v.is_finite()) {
            return Err(bad("non-finite center or amplitude".into()));
        }
        let (scales, rot) = cov_to_scale_rot(&s.covariance).map_err(|e| bad(e.to_string()))?;
        Ok(PlyVertex {
            position: std::array::from_fn(|a| s.center[a] as f32),
            normal: [0.0; 3],
            f_dc: std::array::from_fn(|c| ((s.amplitude[c] - 0.5) / SH_C0) as f32),
            opacity: logit(s.amplitude[3]) as f32,
            log_scale: scales.map(|v| v.ln() as f32),
            rotation: rot.map(|v| v as f32),
        })
    }

    pub fn to_splat(&self) -> Splat {
        let scales = self.log_scale.map(|v| (v as f64).exp());
        let rgb = self.f_dc.map(|v| v as f64 * SH_C0 + 0.5);
        Splat {
            center: Vector3::from(self.position.map(f64::from)),
            covariance: scale_rot_to_cov(scales, self.rotation.map(f64::from)),
            amplitude: [rgb[0], rgb[1], rgb[2], sigmoid(self.opacity as f64)],
            band: None,
        }
    }

    fn fields(&self) -> [f32; 17] {
        let mut out = [0f32; 17];
        out[0..3].copy_from_slice(&self.position);
        out[3..6].copy_from_slice(&self.normal);
        out[6..9].copy_from_slice(&self.f_dc);
        out[9] = self.opacity;
        out[10..13].copy_from_slice(&self.log_scale);
        out[13..17].copy_from_slice(&self.rotation);
        out
    }

    fn from_fields(f: &[f32; 17]) -> Self {
        PlyVertex {
            position: [f[0], f[1], f[2]],
            normal: [f[3], f[4], f[5]],
            f_dc: [f[6], f[7], f[8]],
            opacity: f[9],
            log_scale: [f[10], f[11], f[12]],
            rotation: [f[13], f[14], f[15], f[16]],
        }
    }
}

/// Encodes splats as they are; callers wanting viewer-ready colors apply
/// [`SplatSet::export_normalized`] first.
pub fn export_ply(splats: &[Splat]) -> Result<Vec<u8>, ConstructError> {
    let vertices = splats
        .iter()
        .enumerate()
        .map(|(i, s)| PlyVertex::from_splat(i, s))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n",
        vertices.len()
    );
    for p in PROPERTIES {
        out.push_str(&format!("property float {p}\n"));
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    bytes.reserve(vertices.len() * 17 * 4);
    for v in &vertices {
        for f in v.fields() {
            bytes.extend_from_slice(&f.to_le_bytes());
        }
    }
    Ok(bytes)
}

/// Parses any binary little-endian PLY whose single `vertex` element holds
/// (at least) the documented float properties, in any order.
pub fn import_ply(bytes: &[u8]) -> Result<Vec<PlyVertex>, ConstructError> {
    let err = |m: &str| ConstructError::Ply(m.to_string());
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| err("missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| err("header is not UTF-8"))?;
    let mut lines = header.lines();
    if lines.next() != Some("ply") {
        return Err(err("missing ply magic"));
    }
    let mut count = None;
    let mut props: Vec<String> = Vec::new();
    for line in lines {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "binary_little_endian", "1.0"] => {}
            ["format", other, ..] => return Err(ConstructError::Ply(format!("unsupported format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                count = Some(n.parse::<usize>().map_err(|_| err("bad vertex count"))?);
            }
            ["element", name, _] => return Err(ConstructError::Ply(format!("unexpected element {name}"))),
            ["property", "float" | "float32", name] if count.is_some() => props.push(name.to_string()),
            ["property", ty, name] => {
                return Err(ConstructError::Ply(format!("property {name} has unsupported type {ty}")))
            }
            _ => return Err(ConstructError::Ply(format!("unrecognized header line {line:?}"))),
        }
    }
    let count = count.ok_or_else(|| err("no vertex element"))?;
    let slots: Vec<usize> = PROPERTIES
        .iter()
        .map(|name| {
            props
                .iter()
                .position(|p| p == name)
                .ok_or_else(|| ConstructError::Ply(format!("missing property {name}")))
        })
        .collect::<Result<_, _>>()?;
    let stride = props.len() * 4;
    let body = &bytes[end + END.len()..];
    if body.len() != count * stride {
        return Err(ConstructError::Ply(format!(
            "expected {} payload bytes, found {}",
            count * stride,
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(stride)
        .map(|rec| {
            let fields: [f32; 17] = std::array::from_fn(|i| {
                let o = slots[i] * 4;
                f32::from_le_bytes(rec[o..o + 4].try_into().unwrap())
            });
            PlyVertex::from_fields(&fields)
        })
        .collect())
}

pub fn write_ply(path: &Path, splats: &[Splat]) -> Result<(), ConstructError> {
    Ok(container::write_file(path, &export_ply(splats)?)?)
}

pub fn read_ply(path: &Path) -> Result<Vec<Splat>, ConstructError> {
    Ok(import_ply(&container::read_file(path)?)?
        .iter()
        .map(PlyVertex::to_splat)
        .collect())
}

/// Provenance written next to every PLY.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub gain_mode: GainMode,
    pub sign_mode: SignMode,
    pub splat_count: usize,
    /// Global amplitude factor applied before export.
    pub export_scale: f64,
    pub world_box: crate::volume::WorldBox,
    pub per_band: BTreeMap<String, usize>,
    #[serde(default)]
    pub bank: Option<serde_json::Value>,
}

impl Sidecar {
    pub fn for_set(set: &SplatSet, export_scale: f64, bank: Option<serde_json::Value>) -> Self {
        Sidecar {
            gain_mode: set.gain_mode,
            sign_mode: set.sign_mode,
            splat_count: set.len(),
            export_scale,
            world_box: set.world_box,
            per_band: set.counts_per_band(),
            bank,
        }
    }
}

pub fn sidecar_path(ply: &Path) -> PathBuf {
    ply.with_extension("json")
}

pub fn write_sidecar(ply: &Path, sidecar: &Sidecar) -> Result<(), ConstructError> {
    let json = serde_json::to_vec_pretty(sidecar).map_err(|e| ConstructError::Ply(e.to_string()))?;
    Ok(container::write_file(&sidecar_path(ply), &json)?)
}
