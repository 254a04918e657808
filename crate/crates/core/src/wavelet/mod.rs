//! Multi-level separable 3D discrete wavelet transform.
//!
//! Level 1 is the finest detail scale. Each level splits its input into
//! eight octant subbands; the seven detail bands are kept and the `LLL` band
//! is recursed, so a `J`-level pyramid holds `7J + 1` bands.

mod filter;
pub mod io;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::{s, Array3, Axis, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{Boundary, Filter, FilterBank, Taps};
use filter::{analyze, padded_len, synthesize};

#[derive(Debug, Error)]
pub enum WaveletError {
    #[error("{levels} levels do not fit source dims {dims:?}")]
    TooManyLevels { dims: [usize; 3], levels: usize },
    #[error("unsupported filter {0:?}")]
    UnsupportedFilter(String),
    #[error("unsupported boundary mode {0:?}")]
    UnsupportedBoundary(String),
    #[error("inconsistent pyramid: {0}")]
    InconsistentPyramid(String),
    #[error("index {index:?} outside band {band} extent {extent:?}")]
    IndexOutOfRange {
        band: BandKey,
        index: [usize; 3],
        extent: [usize; 3],
    },
    #[error("band {band} is not part of a {levels}-level pyramid")]
    InvalidBand { band: BandKey, levels: usize },
    #[error("cannot parse band key {0:?}")]
    BadBandKey(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pass {
    L,
    H,
}

/// Subband address. The derived ordering is the canonical band order:
/// level ascending, then orientation lexicographic with `L < H`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BandKey {
    pub level: usize,
    /// Per-axis pass for `(x, y, z)`.
    pub orientation: [Pass; 3],
}

impl BandKey {
    pub const fn new(level: usize, orientation: [Pass; 3]) -> Self {
        BandKey { level, orientation }
    }

    pub fn approximation(levels: usize) -> Self {
        BandKey::new(levels, [Pass::L; 3])
    }

    pub fn is_approximation(&self) -> bool {
        self.orientation == [Pass::L; 3]
    }

    pub fn is_valid_for(&self, levels: usize) -> bool {
        (1..=levels).contains(&self.level) && (!self.is_approximation() || self.level == levels)
    }

    /// Subsampling stride of this band relative to the source grid.
    pub fn stride(&self) -> usize {
        1 << self.level
    }

    /// Scale index counted from the coarsest level (0 = coarsest), i.e. the
    /// convention where the index grows with fineness.
    pub fn coarse_index(&self, levels: usize) -> usize {
        levels - self.level
    }
}

impl fmt::Display for BandKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.level)?;
        for p in self.orientation {
            f.write_str(if p == Pass::L { "L" } else { "H" })?;
        }
        Ok(())
    }
}

impl FromStr for BandKey {
    type Err = WaveletError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || WaveletError::BadBandKey(s.to_string());
        let (level, o) = s.split_once(':').ok_or_else(bad)?;
        let level: usize = level.parse().map_err(|_| bad())?;
        let chars: Vec<char> = o.chars().collect();
        if chars.len() != 3 {
            return Err(bad());
        }
        let mut orientation = [Pass::L; 3];
        for (slot, c) in orientation.iter_mut().zip(chars) {
            *slot = match c {
                'L' => Pass::L,
                'H' => Pass::H,
                _ => return Err(bad()),
            };
        }
        Ok(BandKey { level, orientation })
    }
}

impl Serialize for BandKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BandKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn orientation_of(octant: usize) -> [Pass; 3] {
    std::array::from_fn(|a| {
        if (octant >> (2 - a)) & 1 == 1 {
            Pass::H
        } else {
            Pass::L
        }
    })
}

/// All bands of a `levels`-deep pyramid in canonical order.
pub fn band_list(levels: usize) -> Vec<BandKey> {
    (1..=levels)
        .flat_map(|level| {
            let first = if level == levels { 0 } else { 1 };
            (first..8).map(move |o| BandKey::new(level, orientation_of(o)))
        })
        .collect()
}

/// Extent of any band at `level` (0 = the source grid itself).
pub fn level_dims(source: [usize; 3], level: usize) -> [usize; 3] {
    source.map(|n| n.div_ceil(1 << level))
}

fn check_levels(dims: [usize; 3], levels: usize) -> Result<(), WaveletError> {
    let ok = levels >= 1 && (0..levels).all(|l| level_dims(dims, l).iter().all(|&n| n >= 2));
    if ok {
        Ok(())
    } else {
        Err(WaveletError::TooManyLevels { dims, levels })
    }
}

/// Coefficients of one channel, addressed by [`BandKey`].
#[derive(Clone, Debug, PartialEq)]
pub struct WaveletPyramid {
    pub source_dims: [usize; 3],
    pub levels: usize,
    pub filter: Filter,
    pub boundary: Boundary,
    bands: BTreeMap<BandKey, Array3<f64>>,
}

impl WaveletPyramid {
    pub fn zeros(
        source_dims: [usize; 3],
        levels: usize,
        filter: Filter,
        boundary: Boundary,
    ) -> Result<Self, WaveletError> {
        check_levels(source_dims, levels)?;
        let bands = band_list(levels)
            .into_iter()
            .map(|b| (b, Array3::zeros(level_dims(source_dims, b.level))))
            .collect();
        Ok(WaveletPyramid {
            source_dims,
            levels,
            filter,
            boundary,
            bands,
        })
    }

    /// Builds a pyramid from explicit bands, validating completeness and extents.
    pub fn from_bands(
        source_dims: [usize; 3],
        levels: usize,
        filter: Filter,
        boundary: Boundary,
        bands: BTreeMap<BandKey, Array3<f64>>,
    ) -> Result<Self, WaveletError> {
        let p = WaveletPyramid {
            source_dims,
            levels,
            filter,
            boundary,
            bands,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), WaveletError> {
        check_levels(self.source_dims, self.levels)
            .map_err(|e| WaveletError::InconsistentPyramid(e.to_string()))?;
        let expected = band_list(self.levels);
        if self.bands.len() != expected.len() || !expected.iter().all(|b| self.bands.contains_key(b))
        {
            return Err(WaveletError::InconsistentPyramid(format!(
                "expected {} bands, found {}",
                expected.len(),
                self.bands.len()
            )));
        }
        for (b, arr) in &self.bands {
            let want = level_dims(self.source_dims, b.level);
            if arr.shape() != want {
                return Err(WaveletError::InconsistentPyramid(format!(
                    "band {b} has extent {:?}, expected {want:?}",
                    arr.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn band(&self, key: &BandKey) -> Option<&Array3<f64>> {
        self.bands.get(key)
    }

    pub fn band_mut(&mut self, key: &BandKey) -> Option<&mut Array3<f64>> {
        self.bands.get_mut(key)
    }

    /// Bands in canonical order.
    pub fn bands(&self) -> impl Iterator<Item = (&BandKey, &Array3<f64>)> {
        self.bands.iter()
    }

    pub fn bands_mut(&mut self) -> impl Iterator<Item = (&BandKey, &mut Array3<f64>)> {
        self.bands.iter_mut()
    }

    pub fn band_extent(&self, key: &BandKey) -> [usize; 3] {
        level_dims(self.source_dims, key.level)
    }

    pub fn same_structure(&self, other: &WaveletPyramid) -> bool {
        self.source_dims == other.source_dims
            && self.levels == other.levels
            && self.filter == other.filter
            && self.boundary == other.boundary
    }

    pub fn energy(&self) -> f64 {
        self.bands.values().flat_map(|a| a.iter()).map(|v| v * v).sum()
    }

    /// `self += a * other` over every band.
    pub fn add_scaled(&mut self, other: &WaveletPyramid, a: f64) {
        assert!(self.same_structure(other), "pyramid structures differ");
        for (k, band) in self.bands.iter_mut() {
            band.scaled_add(a, &other.bands[k]);
        }
    }
}

fn analyze_axis(input: &Array3<f64>, axis: usize, filter: Filter, boundary: Boundary) -> Array3<f64> {
    let n = input.shape()[axis];
    let m = padded_len(n);
    let half = m / 2;
    let mut shape = input.raw_dim();
    shape[axis] = m;
    let mut out = Array3::zeros(shape);
    Zip::from(out.lanes_mut(Axis(axis)))
        .and(input.lanes(Axis(axis)))
        .par_for_each(|mut o, i| {
            let x = i.to_vec();
            let (mut lo, mut hi) = (vec![0.0; half], vec![0.0; half]);
            analyze(&x, &mut lo, &mut hi, filter, boundary, &mut Vec::with_capacity(m + 16));
            for k in 0..half {
                o[k] = lo[k];
                o[half + k] = hi[k];
            }
        });
    out
}

fn synthesize_axis(
    input: &Array3<f64>,
    axis: usize,
    target: usize,
    filter: Filter,
    boundary: Boundary,
) -> Array3<f64> {
    let m = input.shape()[axis];
    let half = m / 2;
    let mut shape = input.raw_dim();
    shape[axis] = target;
    let mut out = Array3::zeros(shape);
    Zip::from(out.lanes_mut(Axis(axis)))
        .and(input.lanes(Axis(axis)))
        .par_for_each(|mut o, i| {
            let x = i.to_vec();
            let mut y = vec![0.0; target];
            synthesize(&x[..half], &x[half..], &mut y, filter, boundary, &mut Vec::with_capacity(m + 16));
            o.iter_mut().zip(y).for_each(|(d, v)| *d = v);
        });
    out
}

fn octant_slices(padded: [usize; 3], octant: usize) -> [std::ops::Range<usize>; 3] {
    let o = orientation_of(octant);
    std::array::from_fn(|a| {
        let half = padded[a] / 2;
        if o[a] == Pass::L {
            0..half
        } else {
            half..padded[a]
        }
    })
}

/// One analysis level: returns the eight octant bands in canonical order.
fn analyze_level(input: &Array3<f64>, filter: Filter, boundary: Boundary) -> Vec<Array3<f64>> {
    let mut cur = analyze_axis(input, 0, filter, boundary);
    cur = analyze_axis(&cur, 1, filter, boundary);
    cur = analyze_axis(&cur, 2, filter, boundary);
    let padded: [usize; 3] = [cur.shape()[0], cur.shape()[1], cur.shape()[2]];
    (0..8)
        .map(|o| {
            let [rx, ry, rz] = octant_slices(padded, o);
            cur.slice(s![rx, ry, rz]).to_owned()
        })
        .collect()
}

fn synthesize_level(
    octants: [&Array3<f64>; 8],
    target: [usize; 3],
    filter: Filter,
    boundary: Boundary,
) -> Array3<f64> {
    let padded = target.map(padded_len);
    let mut full = Array3::zeros(padded);
    for (o, band) in octants.iter().enumerate() {
        let [rx, ry, rz] = octant_slices(padded, o);
        full.slice_mut(s![rx, ry, rz]).assign(band);
    }
    let mut cur = synthesize_axis(&full, 2, target[2], filter, boundary);
    cur = synthesize_axis(&cur, 1, target[1], filter, boundary);
    synthesize_axis(&cur, 0, target[0], filter, boundary)
}

/// Forward `levels`-deep transform of one channel.
pub fn dwt3(
    channel: &Array3<f64>,
    levels: usize,
    filter: Filter,
    boundary: Boundary,
) -> Result<WaveletPyramid, WaveletError> {
    let source_dims = [channel.shape()[0], channel.shape()[1], channel.shape()[2]];
    check_levels(source_dims, levels)?;
    let mut bands = BTreeMap::new();
    let mut approx = channel.to_owned();
    for level in 1..=levels {
        let octs = analyze_level(&approx, filter, boundary);
        for (o, band) in octs.into_iter().enumerate() {
            if o == 0 {
                approx = band;
            } else {
                bands.insert(BandKey::new(level, orientation_of(o)), band);
            }
        }
    }
    bands.insert(BandKey::approximation(levels), approx);
    Ok(WaveletPyramid {
        source_dims,
        levels,
        filter,
        boundary,
        bands,
    })
}

/// Inverse transform; output extent equals `pyramid.source_dims`.
pub fn idwt3(pyramid: &WaveletPyramid) -> Result<Array3<f64>, WaveletError> {
    pyramid.validate()?;
    let (filter, boundary) = (pyramid.filter, pyramid.boundary);
    let mut approx = pyramid.bands[&BandKey::approximation(pyramid.levels)].clone();
    for level in (1..=pyramid.levels).rev() {
        let details: Vec<&Array3<f64>> = (1..8)
            .map(|o| &pyramid.bands[&BandKey::new(level, orientation_of(o))])
            .collect();
        let octants: [&Array3<f64>; 8] =
            std::array::from_fn(|o| if o == 0 { &approx } else { details[o - 1] });
        let target = level_dims(pyramid.source_dims, level - 1);
        approx = synthesize_level(octants, target, filter, boundary);
    }
    Ok(approx)
}

/// Pyramid that is zero except for a unit coefficient at `k` in `band`.
pub fn impulse_pyramid(
    source_dims: [usize; 3],
    levels: usize,
    filter: Filter,
    boundary: Boundary,
    band: BandKey,
    k: [usize; 3],
) -> Result<WaveletPyramid, WaveletError> {
    if !band.is_valid_for(levels) {
        return Err(WaveletError::InvalidBand { band, levels });
    }
    let mut p = WaveletPyramid::zeros(source_dims, levels, filter, boundary)?;
    let extent = p.band_extent(&band);
    if (0..3).any(|a| k[a] >= extent[a]) {
        return Err(WaveletError::IndexOutOfRange {
            band,
            index: k,
            extent,
        });
    }
    p.band_mut(&band).expect("band validated")[k] = 1.0;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_volume(dims: [usize; 3], seed: u64) -> Array3<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array3::from_shape_fn(dims, |_| rng.gen_range(-1.0..1.0))
    }

    fn max_abs_diff(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
        a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn band_counts() {
        assert_eq!(band_list(1).len(), 8);
        assert_eq!(band_list(2).len(), 15);
        assert_eq!(band_list(3).len(), 22);
        let bl = band_list(2);
        assert_eq!(bl[0].to_string(), "1:LLH");
        assert_eq!(bl[7].to_string(), "2:LLL");
        assert_eq!(bl.last().unwrap().to_string(), "2:HHH");
        let mut sorted = bl.clone();
        sorted.sort();
        assert_eq!(sorted, bl);
    }

    #[test]
    fn band_key_text_round_trip() {
        for b in band_list(3) {
            assert_eq!(b.to_string().parse::<BandKey>().unwrap(), b);
        }
        assert!("2:LXH".parse::<BandKey>().is_err());
        assert!(!BandKey::approximation(1).is_valid_for(2));
    }

    #[test]
    fn haar_constant_volume() {
        let c = 0.7;
        let x = Array3::from_elem((8, 8, 8), c);
        let p = dwt3(&x, 1, Filter::Haar, Boundary::Symmetric).unwrap();
        for (b, arr) in p.bands() {
            if b.is_approximation() {
                assert!(arr.iter().all(|v| (v - c * 2f64.powf(1.5)).abs() < 1e-12));
            } else {
                assert!(arr.iter().all(|v| v.abs() < 1e-12), "band {b}");
            }
        }
    }

    #[test]
    fn perfect_reconstruction_random_bior() {
        let x = random_volume([32, 32, 32], 1);
        let p = dwt3(&x, 3, Filter::Bior44, Boundary::Symmetric).unwrap();
        assert!(max_abs_diff(&idwt3(&p).unwrap(), &x) < 1e-6);
    }

    #[test]
    fn odd_and_anisotropic_dims_reconstruct() {
        for dims in [[9, 6, 13], [5, 5, 5], [17, 4, 3]] {
            let x = random_volume(dims, 7);
            for filter in [Filter::Haar, Filter::Bior44] {
                for boundary in [Boundary::Symmetric, Boundary::Periodic] {
                    let p = dwt3(&x, 2, filter, boundary).unwrap();
                    for (b, arr) in p.bands() {
                        assert_eq!(arr.shape(), level_dims(dims, b.level));
                    }
                    let err = max_abs_diff(&idwt3(&p).unwrap(), &x);
                    assert!(err < 1e-9, "{dims:?} {filter} {boundary}: {err}");
                }
            }
        }
    }

    #[test]
    fn too_many_levels() {
        let x = Array3::zeros((8, 8, 8));
        assert!(dwt3(&x, 3, Filter::Haar, Boundary::Symmetric).is_ok());
        assert!(matches!(
            dwt3(&x, 4, Filter::Haar, Boundary::Symmetric),
            Err(WaveletError::TooManyLevels { .. })
        ));
        assert!(dwt3(&x, 0, Filter::Haar, Boundary::Symmetric).is_err());
    }

    #[test]
    fn zero_pyramid_synthesizes_zero() {
        let p = WaveletPyramid::zeros([16, 16, 16], 2, Filter::Bior44, Boundary::Symmetric).unwrap();
        assert!(idwt3(&p).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn haar_ramp_exact() {
        let x = Array3::from_shape_fn((4, 4, 4), |(i, j, k)| (i + 4 * j + 16 * k) as f64);
        let p = dwt3(&x, 1, Filter::Haar, Boundary::Symmetric).unwrap();
        // first LLL coefficient: sum of the 2x2x2 block over 2^{3/2}
        let block: f64 = [0., 1., 4., 5., 16., 17., 20., 21.].iter().sum();
        let lll = p.band(&BandKey::approximation(1)).unwrap()[[0, 0, 0]];
        assert!((lll - block / 2f64.powf(1.5)).abs() < 1e-12);
        // x differences: (x0 - x1)/sqrt2 per axis; the ramp has constant x step 1
        let hll = p.band(&BandKey::new(1, [Pass::H, Pass::L, Pass::L])).unwrap()[[0, 0, 0]];
        assert!((hll - (-4.0 / 2f64.powf(1.5))).abs() < 1e-12);
        assert!(max_abs_diff(&idwt3(&p).unwrap(), &x) <= 1e-12);
    }

    #[test]
    fn haar_approximation_impulse_block() {
        let p = impulse_pyramid([8, 8, 8], 1, Filter::Haar, Boundary::Symmetric, BandKey::approximation(1), [1, 1, 1]).unwrap();
        let y = idwt3(&p).unwrap();
        for ((i, j, k), &v) in y.indexed_iter() {
            let inside = [i, j, k].iter().all(|c| (2..=3).contains(c));
            let want = if inside { 2f64.powf(-1.5) } else { 0.0 };
            assert!((v - want).abs() < 1e-15, "({i},{j},{k}) = {v}");
        }
    }

    #[test]
    fn impulse_is_one_hot_and_validated() {
        let band = BandKey::new(1, [Pass::H; 3]);
        let p = impulse_pyramid([8, 8, 8], 2, Filter::Bior44, Boundary::Symmetric, band, [0, 0, 0]).unwrap();
        let nonzero = p.bands().flat_map(|(_, a)| a.iter()).filter(|&&v| v != 0.0).count();
        assert_eq!(nonzero, 1);
        assert!(matches!(
            impulse_pyramid([8, 8, 8], 2, Filter::Bior44, Boundary::Symmetric, band, [4, 0, 0]),
            Err(WaveletError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            impulse_pyramid([8, 8, 8], 2, Filter::Bior44, Boundary::Symmetric, BandKey::approximation(1), [0, 0, 0]),
            Err(WaveletError::InvalidBand { .. })
        ));
    }

    #[test]
    fn inconsistent_pyramid_rejected() {
        let mut p = WaveletPyramid::zeros([8, 8, 8], 1, Filter::Haar, Boundary::Symmetric).unwrap();
        *p.band_mut(&BandKey::new(1, [Pass::H; 3])).unwrap() = Array3::zeros((3, 4, 4));
        assert!(matches!(idwt3(&p), Err(WaveletError::InconsistentPyramid(_))));
    }

    #[test]
    fn haar_parseval() {
        let x = random_volume([16, 16, 16], 3);
        let p = dwt3(&x, 3, Filter::Haar, Boundary::Periodic).unwrap();
        let e: f64 = x.iter().map(|v| v * v).sum();
        assert!((p.energy() - e).abs() < 1e-9 * e.max(1.0));
    }
}
