//! Scalar volumes, transfer functions and the normalized world frame.
//!
//! Volumes are stored as headerless raw files (x varies fastest) with a
//! `<name>.meta.json` sidecar describing dims, sample type, value range and
//! voxel spacing. Samples are normalized to `[0, 1]` on load.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("file {path} has {actual} bytes, expected {expected} for the declared dims and sample type")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("degenerate value range: min == max == {0}")]
    DegenerateRange(f64),
    #[error("invalid volume metadata: {0}")]
    InvalidMeta(String),
    #[error("invalid transfer function: {0}")]
    InvalidTransferFunction(String),
    #[error("voxel index {index:?} outside dims {dims:?}")]
    IndexOutOfRange { index: [usize; 3], dims: [usize; 3] },
    #[error("non-finite sample at linear offset {0}")]
    NonFiniteSample(usize),
    #[error("malformed JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleType {
    #[serde(rename = "u8")]
    U8,
    #[serde(rename = "u16le")]
    U16Le,
    #[serde(rename = "f32le")]
    F32Le,
}

impl SampleType {
    pub fn width(self) -> usize {
        match self {
            SampleType::U8 => 1,
            SampleType::U16Le => 2,
            SampleType::F32Le => 4,
        }
    }
}

fn unit_spacing() -> [f64; 3] {
    [1.0; 3]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeMeta {
    pub dims: [usize; 3],
    pub sample_type: SampleType,
    #[serde(default)]
    pub value_range: Option<[f64; 2]>,
    #[serde(default = "unit_spacing")]
    pub spacing: [f64; 3],
}

impl VolumeMeta {
    /// Unit-spaced metadata, mostly for synthetic volumes.
    pub fn new(dims: [usize; 3], sample_type: SampleType) -> Self {
        VolumeMeta {
            dims,
            sample_type,
            value_range: None,
            spacing: unit_spacing(),
        }
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        if let Some(axis) = self.dims.iter().position(|&d| d < 2) {
            return Err(VolumeError::InvalidMeta(format!(
                "dims[{axis}] = {} must be at least 2",
                self.dims[axis]
            )));
        }
        if let Some([lo, hi]) = self.value_range {
            if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
                return Err(VolumeError::InvalidMeta(format!(
                    "value_range [{lo}, {hi}] must satisfy min < max"
                )));
            }
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(VolumeError::InvalidMeta(format!(
                "spacing {:?} must be positive",
                self.spacing
            )));
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn expected_bytes(&self) -> u64 {
        (self.voxel_count() * self.sample_type.width()) as u64
    }

    pub fn from_json_file(path: &Path) -> Result<Self, VolumeError> {
        let text = fs::read_to_string(path).map_err(|source| VolumeError::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        let meta: VolumeMeta = serde_json::from_str(&text).map_err(|source| VolumeError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn frame(&self) -> WorldFrame {
        WorldFrame::new(self.dims, self.spacing)
    }
}

/// Sidecar path for a raw volume: `foo.raw` becomes `foo.meta.json`.
pub fn meta_path_for(raw: &Path) -> PathBuf {
    let stem = raw
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    raw.with_file_name(format!("{stem}.meta.json"))
}

#[derive(Clone, Debug)]
pub struct ScalarVolume {
    pub meta: VolumeMeta,
    /// Indexed `[x, y, z]`, samples in `[0, 1]`.
    pub data: Array3<f64>,
}

impl ScalarVolume {
    pub fn from_array(meta: VolumeMeta, data: Array3<f64>) -> Result<Self, VolumeError> {
        meta.validate()?;
        let shape = data.shape();
        if shape != meta.dims {
            return Err(VolumeError::InvalidMeta(format!(
                "data extent {shape:?} differs from dims {:?}",
                meta.dims
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(VolumeError::InvalidMeta(
                "scalar samples must lie in [0, 1]".into(),
            ));
        }
        Ok(ScalarVolume { meta, data })
    }
}

pub fn load_raw(path: &Path, meta: &VolumeMeta) -> Result<ScalarVolume, VolumeError> {
    meta.validate()?;
    let bytes = fs::read(path).map_err(|source| VolumeError::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.len() as u64 != meta.expected_bytes() {
        return Err(VolumeError::SizeMismatch {
            path: path.to_path_buf(),
            expected: meta.expected_bytes(),
            actual: bytes.len() as u64,
        });
    }
    let samples: Vec<f64> = match meta.sample_type {
        SampleType::U8 => bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        SampleType::U16Le => bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect(),
        SampleType::F32Le => {
            let raw: Vec<f64> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if let Some(bad) = raw.iter().position(|v| !v.is_finite()) {
                return Err(VolumeError::NonFiniteSample(bad));
            }
            let [lo, hi] = match meta.value_range {
                Some(r) => r,
                None => {
                    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    [lo, hi]
                }
            };
            if lo == hi {
                return Err(VolumeError::DegenerateRange(lo));
            }
            raw.iter()
                .map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
                .collect()
        }
    };
    let [nx, ny, nz] = meta.dims;
    // file order is x-fastest, i.e. a C-order (z, y, x) array
    let zyx = Array3::from_shape_vec((nz, ny, nx), samples).expect("length checked above");
    let data = zyx.permuted_axes([2, 1, 0]).as_standard_layout().to_owned();
    Ok(ScalarVolume {
        meta: meta.clone(),
        data,
    })
}

/// Inverse of [`load_raw`]; u8/u16 values are quantized by rounding.
pub fn save_raw(path: &Path, vol: &ScalarVolume) -> Result<(), VolumeError> {
    let meta = &vol.meta;
    let [nx, ny, nz] = meta.dims;
    let mut bytes = Vec::with_capacity(meta.expected_bytes() as usize);
    let [lo, hi] = meta.value_range.unwrap_or([0.0, 1.0]);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let v = vol.data[[x, y, z]];
                match meta.sample_type {
                    SampleType::U8 => bytes.push((v * 255.0).round() as u8),
                    SampleType::U16Le => {
                        bytes.extend_from_slice(&((v * 65535.0).round() as u16).to_le_bytes())
                    }
                    SampleType::F32Le => {
                        bytes.extend_from_slice(&((lo + v * (hi - lo)) as f32).to_le_bytes())
                    }
                }
            }
        }
    }
    fs::write(path, bytes).map_err(|source| VolumeError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `<path>` and its `.meta.json` sidecar.
pub fn save_volume(raw_path: &Path, vol: &ScalarVolume) -> Result<(), VolumeError> {
    save_raw(raw_path, vol)?;
    let meta_path = meta_path_for(raw_path);
    let json = serde_json::to_string_pretty(&vol.meta).expect("meta serializes");
    fs::write(&meta_path, json).map_err(|source| VolumeError::Write {
        path: meta_path,
        source,
    })
}

/// Loads a raw volume using its sidecar metadata.
pub fn load_volume(raw_path: &Path) -> Result<ScalarVolume, VolumeError> {
    let meta = VolumeMeta::from_json_file(&meta_path_for(raw_path))?;
    load_raw(raw_path, &meta)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub value: f64,
    pub r: f64,
    pub g: f64,
    pub b: f64,
    pub a: f64,
}

impl ControlPoint {
    pub fn new(value: f64, rgba: [f64; 4]) -> Self {
        ControlPoint {
            value,
            r: rgba[0],
            g: rgba[1],
            b: rgba[2],
            a: rgba[3],
        }
    }

    pub fn rgba(&self) -> [f64; 4] {
        [self.r, self.g, self.b, self.a]
    }
}

/// Piecewise-linear RGBA transfer function.
///
/// A support `[a, b]` is left-closed and right-open, except that `b = 1`
/// also owns the value 1. This makes an equal-width partition of `[0, 1]`
/// assign every scalar to exactly one interval.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransferFunction {
    control_points: Vec<ControlPoint>,
    support: Option<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TfJson {
    Full {
        control_points: Vec<ControlPoint>,
        #[serde(default)]
        support: Option<[f64; 2]>,
    },
    Points(Vec<ControlPoint>),
}

impl<'de> Deserialize<'de> for TransferFunction {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let (points, support) = match TfJson::deserialize(de)? {
            TfJson::Full {
                control_points,
                support,
            } => (control_points, support),
            TfJson::Points(p) => (p, None),
        };
        TransferFunction::new(points, support).map_err(serde::de::Error::custom)
    }
}

impl TransferFunction {
    pub fn new(
        control_points: Vec<ControlPoint>,
        support: Option<[f64; 2]>,
    ) -> Result<Self, VolumeError> {
        let bad = |m: String| Err(VolumeError::InvalidTransferFunction(m));
        if control_points.len() < 2 {
            return bad("need at least two control points".into());
        }
        if control_points[0].value != 0.0 || control_points.last().unwrap().value != 1.0 {
            return bad("control points must start at 0 and end at 1".into());
        }
        if control_points.windows(2).any(|w| w[0].value >= w[1].value) {
            return bad("control point values must be strictly increasing".into());
        }
        if control_points
            .iter()
            .flat_map(|p| p.rgba())
            .any(|c| !(0.0..=1.0).contains(&c))
        {
            return bad("rgba components must lie in [0, 1]".into());
        }
        if let Some([a, b]) = support {
            if !(0.0 <= a && a < b && b <= 1.0) {
                return bad(format!("support [{a}, {b}] must be a subinterval of [0, 1]"));
            }
        }
        Ok(TransferFunction {
            control_points,
            support,
        })
    }

    /// Linear ramp from transparent black to opaque white.
    pub fn grayscale_ramp() -> Self {
        TransferFunction::new(
            vec![
                ControlPoint::new(0.0, [0.0; 4]),
                ControlPoint::new(1.0, [1.0; 4]),
            ],
            None,
        )
        .expect("valid ramp")
    }

    pub fn control_points(&self) -> &[ControlPoint] {
        &self.control_points
    }

    pub fn support(&self) -> Option<[f64; 2]> {
        self.support
    }

    pub fn with_support(&self, support: [f64; 2]) -> Result<Self, VolumeError> {
        TransferFunction::new(self.control_points.clone(), Some(support))
    }

    pub fn in_support(&self, s: f64) -> bool {
        match self.support {
            None => true,
            Some([a, b]) => s >= a && (s < b || (b >= 1.0 && s <= b)),
        }
    }

    pub fn eval(&self, s: f64) -> [f64; 4] {
        if !self.in_support(s) {
            return [0.0; 4];
        }
        let pts = &self.control_points;
        let s = s.clamp(0.0, 1.0);
        // first point with value > s; segment is [hi - 1, hi]
        let hi = pts.partition_point(|p| p.value <= s).clamp(1, pts.len() - 1);
        let (p0, p1) = (&pts[hi - 1], &pts[hi]);
        let t = (s - p0.value) / (p1.value - p0.value);
        let (c0, c1) = (p0.rgba(), p1.rgba());
        std::array::from_fn(|c| (c0[c] + t * (c1[c] - c0[c])).clamp(0.0, 1.0))
    }

    pub fn from_json_file(path: &Path) -> Result<Self, VolumeError> {
        let text = fs::read_to_string(path).map_err(|source| VolumeError::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| VolumeError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Splits `tf` into `count` copies supported on an equal-width partition of `[0, 1]`.
pub fn make_interval_tfs(
    tf: &TransferFunction,
    count: usize,
) -> Result<Vec<TransferFunction>, VolumeError> {
    if count == 0 {
        return Err(VolumeError::InvalidTransferFunction(
            "interval count must be at least 1".into(),
        ));
    }
    (0..count)
        .map(|h| {
            let a = h as f64 / count as f64;
            let b = if h + 1 == count {
                1.0
            } else {
                (h + 1) as f64 / count as f64
            };
            tf.with_support([a, b])
        })
        .collect()
}

/// Axis-aligned world-space box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl WorldBox {
    pub fn half_diagonal(&self) -> f64 {
        (0..3)
            .map(|a| (0.5 * (self.max[a] - self.min[a])).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Voxel-to-world mapping: the volume is centered at the origin and its
/// longest physical axis spans exactly `[-1, 1]`.
///
/// Continuous *cell* coordinates put voxel `i` on `[i, i + 1)`, so the voxel
/// center sits at `i + 0.5`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorldFrame {
    pub dims: [usize; 3],
    /// World length of one voxel along each axis.
    pub voxel_size: [f64; 3],
    pub half_extent: [f64; 3],
}

impl WorldFrame {
    pub fn new(dims: [usize; 3], spacing: [f64; 3]) -> Self {
        let lengths: [f64; 3] = std::array::from_fn(|a| dims[a] as f64 * spacing[a]);
        let longest = lengths.iter().copied().fold(0.0, f64::max);
        WorldFrame {
            dims,
            voxel_size: std::array::from_fn(|a| 2.0 * spacing[a] / longest),
            half_extent: std::array::from_fn(|a| lengths[a] / longest),
        }
    }

    pub fn world_box(&self) -> WorldBox {
        WorldBox {
            min: self.half_extent.map(|h| -h),
            max: self.half_extent,
        }
    }

    pub fn cell_to_world(&self, p: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| p[a] * self.voxel_size[a] - self.half_extent[a])
    }

    /// Continuous voxel-index coordinate (voxel centers at integers) of a world point.
    pub fn world_to_index(&self, x: [f64; 3]) -> [f64; 3] {
        std::array::from_fn(|a| (x[a] + self.half_extent[a]) / self.voxel_size[a] - 0.5)
    }

    pub fn index_to_world(&self, index: [usize; 3]) -> [f64; 3] {
        self.cell_to_world(index.map(|i| i as f64 + 0.5))
    }

    pub fn min_voxel_size(&self) -> f64 {
        self.voxel_size.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// World coordinate of a voxel center.
pub fn world_coords(meta: &VolumeMeta, index: [usize; 3]) -> Result<[f64; 3], VolumeError> {
    if (0..3).any(|a| index[a] >= meta.dims[a]) {
        return Err(VolumeError::IndexOutOfRange {
            index,
            dims: meta.dims,
        });
    }
    Ok(meta.frame().index_to_world(index))
}

#[derive(Clone, Debug)]
pub struct RadianceVolume {
    pub meta: VolumeMeta,
    /// One `[x, y, z]` array per channel, in r, g, b, a order.
    pub channels: [Array3<f64>; 4],
    pub world_box: WorldBox,
}

impl RadianceVolume {
    pub fn from_channels(meta: VolumeMeta, channels: [Array3<f64>; 4]) -> Self {
        let world_box = meta.frame().world_box();
        RadianceVolume {
            meta,
            channels,
            world_box,
        }
    }

    pub fn rgba(&self, index: [usize; 3]) -> [f64; 4] {
        std::array::from_fn(|c| self.channels[c][index])
    }

    pub fn clamped(&self) -> RadianceVolume {
        let channels = self.channels.clone().map(|c| c.mapv(|v| v.clamp(0.0, 1.0)));
        RadianceVolume {
            meta: self.meta.clone(),
            channels,
            world_box: self.world_box,
        }
    }
}

pub fn apply_tf(vol: &ScalarVolume, tf: &TransferFunction) -> RadianceVolume {
    let mut chans: [Array3<f64>; 4] = std::array::from_fn(|_| Array3::zeros(vol.data.raw_dim()));
    let [r, g, b, a] = &mut chans;
    Zip::from(r)
        .and(g)
        .and(b)
        .and(a)
        .and(&vol.data)
        .par_for_each(|r, g, b, a, &s| {
            let c = tf.eval(s);
            (*r, *g, *b, *a) = (c[0], c[1], c[2], c[3]);
        });
    RadianceVolume::from_channels(vol.meta.clone(), chans)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    fn ramp() -> TransferFunction {
        TransferFunction::grayscale_ramp()
    }

    #[test]
    fn u8_max_maps_to_one() {
        let f = write_tmp(&[255u8; 64]);
        let vol = load_raw(f.path(), &VolumeMeta::new([4, 4, 4], SampleType::U8)).unwrap();
        assert!(vol.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn u16_little_endian_decode() {
        let bytes: Vec<u8> = [0x00u8, 0x80].repeat(64);
        let f = write_tmp(&bytes);
        let vol = load_raw(f.path(), &VolumeMeta::new([4, 4, 4], SampleType::U16Le)).unwrap();
        let expected = 32768.0 / 65535.0;
        assert!(vol.data.iter().all(|&v| v == expected));
        assert!((expected - 0.50001).abs() < 1e-5);
    }

    #[test]
    fn f32_wrong_length_is_size_mismatch() {
        let f = write_tmp(&vec![0u8; 63 * 4]);
        let err = load_raw(f.path(), &VolumeMeta::new([4, 4, 4], SampleType::F32Le)).unwrap_err();
        assert!(matches!(err, VolumeError::SizeMismatch { expected: 256, actual: 252, .. }));
    }

    #[test]
    fn f32_observed_range_and_degenerate_range() {
        let vals: Vec<u8> = (0..8).flat_map(|i| (i as f32 * 2.0 - 3.0).to_le_bytes()).collect();
        let f = write_tmp(&vals);
        let vol = load_raw(f.path(), &VolumeMeta::new([2, 2, 2], SampleType::F32Le)).unwrap();
        assert_eq!(vol.data[[0, 0, 0]], 0.0);
        assert_eq!(vol.data[[1, 1, 1]], 1.0);
        assert!((vol.data[[1, 0, 0]] - 1.0 / 7.0).abs() < 1e-12);

        let flat: Vec<u8> = (0..8).flat_map(|_| 2.5f32.to_le_bytes()).collect();
        let f = write_tmp(&flat);
        let err = load_raw(f.path(), &VolumeMeta::new([2, 2, 2], SampleType::F32Le)).unwrap_err();
        assert!(matches!(err, VolumeError::DegenerateRange(v) if v == 2.5));
    }

    #[test]
    fn x_is_fastest_in_file_order() {
        let bytes: Vec<u8> = (0..8).collect();
        let f = write_tmp(&bytes);
        let vol = load_raw(f.path(), &VolumeMeta::new([2, 2, 2], SampleType::U8)).unwrap();
        assert_eq!(vol.data[[1, 0, 0]], 1.0 / 255.0);
        assert_eq!(vol.data[[0, 1, 0]], 2.0 / 255.0);
        assert_eq!(vol.data[[0, 0, 1]], 4.0 / 255.0);
    }

    #[test]
    fn missing_file_is_unreadable() {
        let err = load_raw(
            Path::new("/nonexistent/volume.raw"),
            &VolumeMeta::new([2, 2, 2], SampleType::U8),
        )
        .unwrap_err();
        assert!(matches!(err, VolumeError::UnreadableFile { .. }));
    }

    #[test]
    fn meta_validation() {
        let mut m = VolumeMeta::new([4, 1, 4], SampleType::U8);
        assert!(m.validate().is_err());
        m.dims = [4, 4, 4];
        m.value_range = Some([1.0, 1.0]);
        assert!(m.validate().is_err());
        let err = serde_json::from_str::<VolumeMeta>(r#"{"sample_type":"u8"}"#).unwrap_err();
        assert!(err.to_string().contains("dims"));
    }

    #[test]
    fn tf_interpolation() {
        let tf = ramp();
        assert_eq!(tf.eval(0.5), [0.5; 4]);
        let tf = TransferFunction::new(
            vec![
                ControlPoint::new(0.0, [0.0; 4]),
                ControlPoint::new(0.5, [1.0, 0.0, 0.0, 0.2]),
                ControlPoint::new(1.0, [0.0, 0.0, 1.0, 1.0]),
            ],
            None,
        )
        .unwrap();
        let c = tf.eval(0.75);
        let want = [0.5, 0.0, 0.5, 0.6];
        for i in 0..4 {
            assert!((c[i] - want[i]).abs() < 1e-12);
        }
        assert_eq!(tf.eval(1.0), [0.0, 0.0, 1.0, 1.0]);
        assert_eq!(tf.eval(0.0), [0.0; 4]);
    }

    #[test]
    fn tf_support_zeroes_outside() {
        let tf = ramp().with_support([0.5, 0.8]).unwrap();
        assert_eq!(tf.eval(0.2), [0.0; 4]);
        assert_eq!(tf.eval(0.6), [0.6; 4]);
    }

    #[test]
    fn tf_rejects_bad_points() {
        let p = |v| ControlPoint::new(v, [0.0; 4]);
        assert!(TransferFunction::new(vec![p(0.0), p(0.5)], None).is_err());
        assert!(TransferFunction::new(vec![p(0.0), p(0.7), p(0.7), p(1.0)], None).is_err());
        assert!(TransferFunction::new(vec![p(0.0), ControlPoint::new(1.0, [2.0; 4])], None).is_err());
    }

    #[test]
    fn tf_json_forms() {
        let bare = r#"[{"value":0,"r":0,"g":0,"b":0,"a":0},{"value":1,"r":1,"g":1,"b":1,"a":1}]"#;
        let tf: TransferFunction = serde_json::from_str(bare).unwrap();
        assert_eq!(tf, ramp());
        let full = format!(r#"{{"control_points":{bare},"support":[0.2,0.4]}}"#);
        let tf: TransferFunction = serde_json::from_str(&full).unwrap();
        assert_eq!(tf.support(), Some([0.2, 0.4]));
    }

    #[test]
    fn interval_partitions() {
        let one = make_interval_tfs(&ramp(), 1).unwrap();
        assert_eq!(one[0].support(), Some([0.0, 1.0]));
        let five = make_interval_tfs(&ramp(), 5).unwrap();
        let supports: Vec<_> = five.iter().map(|t| t.support().unwrap()).collect();
        for (h, s) in supports.iter().enumerate() {
            assert!((s[0] - 0.2 * h as f64).abs() < 1e-15);
            assert!((s[1] - 0.2 * (h + 1) as f64).abs() < 1e-15);
        }
        let two = make_interval_tfs(&ramp(), 2).unwrap();
        let sum: Vec<f64> = (0..4).map(|c| two[0].eval(0.3)[c] + two[1].eval(0.3)[c]).collect();
        assert_eq!(sum, ramp().eval(0.3).to_vec());
        assert!(make_interval_tfs(&ramp(), 0).is_err());
    }

    #[test]
    fn partition_owns_every_value_once() {
        let parts = make_interval_tfs(&ramp(), 5).unwrap();
        for i in 0..=1000 {
            let s = i as f64 / 1000.0;
            let owners = parts.iter().filter(|t| t.in_support(s)).count();
            assert_eq!(owners, 1, "scalar {s}");
        }
    }

    #[test]
    fn world_coordinates() {
        let m = VolumeMeta::new([4, 4, 4], SampleType::U8);
        assert_eq!(world_coords(&m, [0, 0, 0]).unwrap(), [-0.75; 3]);
        assert_eq!(world_coords(&m, [2, 2, 2]).unwrap(), [0.25; 3]);
        assert!(matches!(
            world_coords(&m, [4, 0, 0]),
            Err(VolumeError::IndexOutOfRange { .. })
        ));
        let odd = VolumeMeta::new([5, 5, 5], SampleType::U8);
        assert_eq!(world_coords(&odd, [2, 2, 2]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn world_frame_respects_aspect() {
        let mut m = VolumeMeta::new([8, 4, 4], SampleType::U8);
        m.spacing = [1.0, 1.0, 3.0];
        let frame = m.frame();
        // physical lengths 8, 4, 12
        assert_eq!(frame.half_extent, [8.0 / 12.0, 4.0 / 12.0, 1.0]);
        let corner = frame.cell_to_world([0.0, 0.0, 0.0]);
        assert_eq!(corner, [-8.0 / 12.0, -4.0 / 12.0, -1.0]);
        let far = frame.cell_to_world([8.0, 4.0, 4.0]);
        assert!((far[2] - 1.0).abs() < 1e-15);
        let back = frame.world_to_index(frame.index_to_world([3, 1, 2]));
        for (a, want) in [3.0, 1.0, 2.0].iter().enumerate() {
            assert!((back[a] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_tf_per_voxel() {
        let mut data = Array3::zeros((2, 2, 2));
        data[[1, 0, 1]] = 0.5;
        let vol = ScalarVolume::from_array(VolumeMeta::new([2, 2, 2], SampleType::F32Le), data).unwrap();
        let rf = apply_tf(&vol, &ramp());
        assert_eq!(rf.rgba([1, 0, 1]), [0.5; 4]);
        assert_eq!(rf.rgba([0, 0, 0]), [0.0; 4]);
        assert_eq!(rf.world_box.min, [-1.0; 3]);
    }

    #[test]
    fn save_load_round_trip_u8_u16() {
        let dir = tempfile::tempdir().unwrap();
        for st in [SampleType::U8, SampleType::U16Le] {
            let bytes: Vec<u8> = (0..(3 * 4 * 5 * st.width())).map(|i| (i * 37 % 251) as u8).collect();
            let raw = dir.path().join("v.raw");
            fs::write(&raw, &bytes).unwrap();
            let meta = VolumeMeta::new([3, 4, 5], st);
            let vol = load_raw(&raw, &meta).unwrap();
            let out = dir.path().join("w.raw");
            save_volume(&out, &vol).unwrap();
            assert_eq!(fs::read(&out).unwrap(), bytes);
            let again = load_volume(&out).unwrap();
            assert_eq!(again.data, vol.data);
        }
    }
}
