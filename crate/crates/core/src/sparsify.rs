//! Budgeted, channel-coherent coefficient selection.
//!
//! Every band gets a share of the global budget proportional to
//! `E^a_E * N^b_N`, where `E` is the reference-channel energy and `N` the
//! band cardinality, with a per-band floor. Inside a band, coefficients are
//! ranked by their joint RGBA magnitude, gated by a robust MAD noise threshold
//! and truncated to the band's share. A location is kept for all four
//! channels or for none.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::container::{self, ContainerError, Reader};
use crate::wavelet::{BandKey, Boundary, Filter, WaveletPyramid};

/// Consistency constant of the MAD estimator for Gaussian noise.
pub const MAD_NORMAL_CONSTANT: f64 = 0.6745;

#[derive(Debug, Error)]
pub enum SparsifyError {
    #[error("expected four structurally identical channel pyramids")]
    StructureMismatch,
    #[error("every band has zero allocation score")]
    AllZeroEnergy,
    #[error("median of an empty sequence")]
    EmptySequence,
    #[error("invalid sparsify config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Channel {
    R,
    G,
    B,
    #[default]
    A,
}

impl Channel {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Channel::R => "r",
            Channel::G => "g",
            Channel::B => "b",
            Channel::A => "alpha",
        })
    }
}

impl FromStr for Channel {
    type Err = SparsifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "r" | "red" => Ok(Channel::R),
            "g" | "green" => Ok(Channel::G),
            "b" | "blue" => Ok(Channel::B),
            "a" | "alpha" => Ok(Channel::A),
            _ => Err(SparsifyError::InvalidConfig(format!("unknown channel {s:?}"))),
        }
    }
}

impl Serialize for Channel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Channel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SparsifyConfig {
    pub k_total: usize,
    pub energy_exp: f64,
    pub count_exp: f64,
    pub mad_multiplier: f64,
    pub reference_channel: Channel,
    pub floor: usize,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        SparsifyConfig {
            k_total: 1000,
            energy_exp: 0.7,
            count_exp: 0.3,
            mad_multiplier: 3.0,
            reference_channel: Channel::A,
            floor: 10,
        }
    }
}

impl SparsifyConfig {
    pub fn with_budget(k_total: usize) -> Self {
        SparsifyConfig {
            k_total,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), SparsifyError> {
        let bad = |m: String| Err(SparsifyError::InvalidConfig(m));
        if self.k_total < 1 {
            return bad("k_total must be at least 1".into());
        }
        if !(self.mad_multiplier > 0.0) {
            return bad(format!("mad_multiplier must be positive, got {}", self.mad_multiplier));
        }
        if self.floor < 1 {
            return bad("floor must be at least 1".into());
        }
        if !self.energy_exp.is_finite() || !self.count_exp.is_finite() {
            return bad("exponents must be finite".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandStats {
    pub band: BandKey,
    pub energy: f64,
    pub count: usize,
}

impl BandStats {
    pub fn score(&self, config: &SparsifyConfig) -> f64 {
        if self.energy == 0.0 {
            return 0.0;
        }
        self.energy.powf(config.energy_exp) * (self.count as f64).powf(config.count_exp)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseBand {
    pub band: BandKey,
    pub indices: Vec<[usize; 3]>,
    pub values: Vec<[f64; 4]>,
}

impl SparseBand {
    pub fn empty(band: BandKey) -> Self {
        SparseBand {
            band,
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Per-band bookkeeping of one sparsification run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandReport {
    pub band: BandKey,
    pub energy: f64,
    pub count: usize,
    pub allocated: usize,
    pub threshold: f64,
    pub retained: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsePyramid {
    pub source_dims: [usize; 3],
    pub levels: usize,
    pub filter: Filter,
    pub boundary: Boundary,
    pub bands: BTreeMap<BandKey, SparseBand>,
    pub reports: Vec<BandReport>,
    pub uniform_fallback: bool,
}

impl SparsePyramid {
    pub fn retained(&self) -> usize {
        self.bands.values().map(SparseBand::len).sum()
    }
}

fn check_channels(pyramids: &[WaveletPyramid]) -> Result<(), SparsifyError> {
    match pyramids {
        [first, rest @ ..] if rest.len() == 3 && rest.iter().all(|p| p.same_structure(first)) => {
            Ok(())
        }
        _ => Err(SparsifyError::StructureMismatch),
    }
}

pub fn band_stats(pyramids: &[WaveletPyramid], reference: Channel) -> Result<Vec<BandStats>, SparsifyError> {
    check_channels(pyramids)?;
    Ok(pyramids[reference.index()]
        .bands()
        .map(|(band, a)| BandStats {
            band: *band,
            energy: a.iter().map(|x| x * x).sum(),
            count: a.len(),
        })
        .collect())
}

/// Per-band budget from allocation scores. Fails with
/// [`SparsifyError::AllZeroEnergy`] when no band has a positive score; see
/// [`allocate_uniform`] for the fallback.
pub fn allocate_budget(
    stats: &[BandStats],
    config: &SparsifyConfig,
) -> Result<BTreeMap<BandKey, usize>, SparsifyError> {
    config.validate()?;
    let scores: Vec<f64> = stats.iter().map(|s| s.score(config)).collect();
    let total: f64 = scores.iter().sum();
    if !(total > 0.0) {
        return Err(SparsifyError::AllZeroEnergy);
    }
    let naive: Vec<usize> = scores
        .iter()
        .map(|s| ((config.k_total as f64 * s / total).floor() as usize).max(config.floor))
        .collect();
    Ok(trim(stats, &scores, naive, config.k_total))
}

/// Equal split of the budget, used when every band scores zero.
pub fn allocate_uniform(stats: &[BandStats], config: &SparsifyConfig) -> BTreeMap<BandKey, usize> {
    let share = if stats.is_empty() {
        0
    } else {
        (config.k_total / stats.len()).max(config.floor)
    };
    let scores = vec![0.0; stats.len()];
    trim(stats, &scores, vec![share; stats.len()], config.k_total)
}

/// Takes allocation away from the lowest-scoring bands until the budget holds.
/// Equal scores give up budget finest band first.
fn trim(stats: &[BandStats], scores: &[f64], mut k: Vec<usize>, budget: usize) -> BTreeMap<BandKey, usize> {
    let mut excess = k.iter().sum::<usize>().saturating_sub(budget);
    let mut order: Vec<usize> = (0..stats.len()).collect();
    order.sort_by(|&i, &j| scores[i].total_cmp(&scores[j]).then(stats[i].band.cmp(&stats[j].band)));
    for i in order {
        if excess == 0 {
            break;
        }
        let d = k[i].min(excess);
        k[i] -= d;
        excess -= d;
    }
    stats.iter().zip(k).map(|(s, k)| (s.band, k)).collect()
}

pub fn joint_magnitude(values: [f64; 4]) -> f64 {
    values.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let (_, &mut hi, _) = v.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

/// Robust noise scale: median absolute deviation over 0.6745.
pub fn mad_sigma(v: &[f64]) -> Result<f64, SparsifyError> {
    if v.is_empty() {
        return Err(SparsifyError::EmptySequence);
    }
    let mut buf = v.to_vec();
    let med = median_in_place(&mut buf);
    buf.iter_mut().for_each(|x| *x = (*x - med).abs());
    Ok(median_in_place(&mut buf) / MAD_NORMAL_CONSTANT)
}

/// Top-`k` of the candidates with `v >= threshold`, largest first, ties going
/// to the smaller index; returned in lexicographic index order. Zero
/// magnitudes are never selected, so an all-zero band stays empty whatever the
/// threshold.
pub fn select_from<I>(candidates: I, threshold: f64, k: usize) -> Vec<[usize; 3]>
where
    I: IntoIterator<Item = ([usize; 3], f64)>,
{
    let mut pool: Vec<([usize; 3], f64)> = candidates
        .into_iter()
        .filter(|&(_, v)| v >= threshold && v > 0.0)
        .collect();
    let rank = |a: &([usize; 3], f64), b: &([usize; 3], f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if k < pool.len() {
        if k == 0 {
            return Vec::new();
        }
        pool.select_nth_unstable_by(k - 1, rank);
        pool.truncate(k);
    }
    let mut out: Vec<[usize; 3]> = pool.into_iter().map(|(i, _)| i).collect();
    out.sort_unstable();
    out
}

pub fn select(v: &Array3<f64>, threshold: f64, k: usize) -> Vec<[usize; 3]> {
    select_from(v.indexed_iter().map(|((x, y, z), &m)| ([x, y, z], m)), threshold, k)
}

fn sparsify_band(
    pyramids: &[WaveletPyramid],
    band: BandKey,
    allocated: usize,
    mad_multiplier: f64,
) -> Result<(SparseBand, f64), SparsifyError> {
    let channels: Vec<&Array3<f64>> = pyramids.iter().map(|p| p.band(&band).unwrap()).collect();
    let at = |i: [usize; 3]| std::array::from_fn::<f64, 4, _>(|c| channels[c][i]);
    let v = Array3::from_shape_fn(channels[0].dim(), |(x, y, z)| joint_magnitude(at([x, y, z])));
    let threshold = mad_multiplier * mad_sigma(v.as_slice_memory_order().unwrap())?;
    let indices = select(&v, threshold, allocated);
    let values = indices.iter().map(|&i| at(i)).collect();
    Ok((SparseBand { band, indices, values }, threshold))
}

pub fn sparsify_pyramid(pyramids: &[WaveletPyramid], config: &SparsifyConfig) -> Result<SparsePyramid, SparsifyError> {
    config.validate()?;
    let stats = band_stats(pyramids, config.reference_channel)?;
    let (budget, uniform_fallback) = match allocate_budget(&stats, config) {
        Ok(b) => (b, false),
        Err(SparsifyError::AllZeroEnergy) => (allocate_uniform(&stats, config), true),
        Err(e) => return Err(e),
    };
    let results = stats
        .par_iter()
        .map(|s| sparsify_band(pyramids, s.band, budget[&s.band], config.mad_multiplier))
        .collect::<Result<Vec<_>, _>>()?;
    let reports = stats
        .iter()
        .zip(&results)
        .map(|(s, (sb, threshold))| BandReport {
            band: s.band,
            energy: s.energy,
            count: s.count,
            allocated: budget[&s.band],
            threshold: *threshold,
            retained: sb.len(),
        })
        .collect();
    let first = &pyramids[0];
    Ok(SparsePyramid {
        source_dims: first.source_dims,
        levels: first.levels,
        filter: first.filter,
        boundary: first.boundary,
        bands: results.into_iter().map(|(sb, _)| (sb.band, sb)).collect(),
        reports,
        uniform_fallback,
    })
}

const MAGIC: &[u8; 8] = b"WSSPARS1";

#[derive(Serialize, Deserialize)]
struct SparseHeader {
    source_dims: [usize; 3],
    levels: usize,
    filter: Filter,
    boundary: Boundary,
    uniform_fallback: bool,
    bands: Vec<BandReport>,
}

/// Header plus, per band, `retained` records of three `u32` indices and four
/// `f32` channel values.
pub fn encode_sparse(sparse: &SparsePyramid) -> Vec<u8> {
    let header = SparseHeader {
        source_dims: sparse.source_dims,
        levels: sparse.levels,
        filter: sparse.filter,
        boundary: sparse.boundary,
        uniform_fallback: sparse.uniform_fallback,
        bands: sparse.reports.clone(),
    };
    let mut payload = Vec::with_capacity(sparse.retained() * 28);
    for r in &sparse.reports {
        let sb = &sparse.bands[&r.band];
        for (idx, val) in sb.indices.iter().zip(&sb.values) {
            idx.iter().for_each(|&i| payload.extend_from_slice(&(i as u32).to_le_bytes()));
            val.iter().for_each(|&v| payload.extend_from_slice(&(v as f32).to_le_bytes()));
        }
    }
    container::encode(MAGIC, &header, &payload)
}

pub fn decode_sparse(bytes: &[u8]) -> Result<SparsePyramid, SparsifyError> {
    let (header, payload): (SparseHeader, _) = container::decode(MAGIC, bytes)?;
    let mut rd = Reader::new(payload);
    let mut bands = BTreeMap::new();
    for r in &header.bands {
        let mut sb = SparseBand::empty(r.band);
        for _ in 0..r.retained {
            let mut idx = [0usize; 3];
            for i in &mut idx {
                *i = rd.u32()? as usize;
            }
            let mut val = [0.0; 4];
            for v in &mut val {
                *v = rd.f32()? as f64;
            }
            sb.indices.push(idx);
            sb.values.push(val);
        }
        bands.insert(r.band, sb);
    }
    rd.finish()?;
    Ok(SparsePyramid {
        source_dims: header.source_dims,
        levels: header.levels,
        filter: header.filter,
        boundary: header.boundary,
        bands,
        reports: header.bands,
        uniform_fallback: header.uniform_fallback,
    })
}

pub fn write_sparse(path: &Path, sparse: &SparsePyramid) -> Result<(), SparsifyError> {
    Ok(container::write_file(path, &encode_sparse(sparse))?)
}

pub fn read_sparse(path: &Path) -> Result<SparsePyramid, SparsifyError> {
    decode_sparse(&container::read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::dwt3;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn key(level: usize, o: &str) -> BandKey {
        format!("{level}:{o}").parse().unwrap()
    }

    fn stats(scores: &[f64]) -> Vec<BandStats> {
        // with a_E = 1, b_N = 0 the score equals the energy
        crate::wavelet::band_list(1)
            .into_iter()
            .zip(scores)
            .map(|(band, &e)| BandStats { band, energy: e, count: 8 })
            .collect()
    }

    fn linear_config(k_total: usize) -> SparsifyConfig {
        SparsifyConfig {
            k_total,
            energy_exp: 1.0,
            count_exp: 0.0,
            ..Default::default()
        }
    }

    fn random_pyramids(dims: [usize; 3], levels: usize, seed: u64) -> Vec<WaveletPyramid> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..4)
            .map(|_| {
                let f = Array3::from_shape_fn(dims, |_| rng.gen_range(-1.0..1.0));
                dwt3(&f, levels, Filter::Haar, Boundary::Periodic).unwrap()
            })
            .collect()
    }

    #[test]
    fn band_energy_uses_reference_channel() {
        let mut pyr: Vec<WaveletPyramid> = (0..4)
            .map(|_| WaveletPyramid::zeros([8, 8, 4], 1, Filter::Haar, Boundary::Periodic).unwrap())
            .collect();
        let b = key(1, "HLL");
        {
            let a = pyr[3].band_mut(&b).unwrap();
            a[[0, 0, 0]] = 1.0;
            a[[1, 0, 0]] = -2.0;
            a[[2, 1, 0]] = 2.0;
        }
        pyr[0].band_mut(&b).unwrap()[[0, 0, 0]] = 100.0;
        let st = band_stats(&pyr, Channel::A).unwrap();
        let s = st.iter().find(|s| s.band == b).unwrap();
        assert_eq!(s.energy, 9.0);
        assert_eq!(s.count, 32);
        assert!(st.iter().filter(|s| s.band != b).all(|s| s.energy == 0.0));
        assert!(matches!(band_stats(&pyr[..3], Channel::A), Err(SparsifyError::StructureMismatch)));
    }

    #[test]
    fn allocation_examples() {
        let single = vec![BandStats { band: key(1, "LLL"), energy: 2.0, count: 8 }];
        let k = allocate_budget(&single, &SparsifyConfig::with_budget(100)).unwrap();
        assert_eq!(k[&key(1, "LLL")], 100);

        let two = stats(&[1.0, 3.0]);
        let k = allocate_budget(&two, &linear_config(100)).unwrap();
        assert_eq!((k[&two[0].band], k[&two[1].band]), (25, 75));

        let k = allocate_budget(&two, &linear_config(4)).unwrap();
        assert_eq!((k[&two[0].band], k[&two[1].band]), (0, 4));

        assert!(matches!(
            allocate_budget(&stats(&[0.0, 0.0]), &linear_config(4)),
            Err(SparsifyError::AllZeroEnergy)
        ));
        let u = allocate_uniform(&stats(&[0.0, 0.0, 0.0]), &linear_config(60));
        assert!(u.values().all(|&k| k == 20));
    }

    #[test]
    fn trim_is_not_house_monotone() {
        // The floor lifts the weakest band above its proportional share; one
        // more unit of budget can raise the other bands' shares by two, so the
        // trim takes more from the weakest band than before.
        let st = stats(&[4.0, 16.0, 15.0]);
        let a = allocate_budget(&st, &linear_config(30)).unwrap();
        let b = allocate_budget(&st, &linear_config(31)).unwrap();
        let ks = |m: &BTreeMap<BandKey, usize>| st.iter().map(|s| m[&s.band]).collect::<Vec<_>>();
        assert_eq!(ks(&a), vec![5, 13, 12]);
        assert_eq!(ks(&b), vec![4, 14, 13]);
    }

    #[test]
    fn joint_magnitude_examples() {
        assert_eq!(joint_magnitude([3.0, 4.0, 0.0, 0.0]), 5.0);
        assert_eq!(joint_magnitude([0.0; 4]), 0.0);
        assert_eq!(joint_magnitude([-1.0, 1.0, -1.0, 1.0]), 2.0);
    }

    #[test]
    fn mad_examples() {
        let s = mad_sigma(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert!((s - 1.0 / 0.6745).abs() < 1e-12);
        assert_eq!(mad_sigma(&[7.0; 9]).unwrap(), 0.0);
        // even length: median 2.5, deviations {1.5,0.5,0.5,1.5} -> 1.0
        assert!((mad_sigma(&[1.0, 2.0, 3.0, 4.0]).unwrap() - 1.0 / 0.6745).abs() < 1e-12);
        assert!(matches!(mad_sigma(&[]), Err(SparsifyError::EmptySequence)));
    }

    #[test]
    fn mad_is_consistent_for_normal_noise() {
        use rand_distr_free::std_normal;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..100_000).map(|_| std_normal(&mut rng)).collect();
        let s = mad_sigma(&v).unwrap();
        assert!((0.97..=1.03).contains(&s), "{s}");
    }

    /// Box-Muller, to avoid a distribution crate for one test.
    mod rand_distr_free {
        use rand::Rng;
        pub fn std_normal<R: Rng>(rng: &mut R) -> f64 {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        }
    }

    #[test]
    fn select_examples() {
        let v = array![[[5.0]], [[4.0]], [[3.0]], [[2.0]], [[1.0]]];
        assert_eq!(select(&v, 2.5, 2), vec![[0, 0, 0], [1, 0, 0]]);
        assert!(select(&v, 10.0, 3).is_empty());
        let t = array![[[3.0, 3.0, 3.0]]];
        assert_eq!(select(&t, 0.0, 2), vec![[0, 0, 0], [0, 0, 1]]);
        assert!(select(&t, 0.0, 0).is_empty());
        assert_eq!(select(&t, 0.0, 9).len(), 3);
    }

    #[test]
    fn zero_pyramids_give_empty_bands() {
        let pyr: Vec<WaveletPyramid> = (0..4)
            .map(|_| WaveletPyramid::zeros([8, 8, 8], 2, Filter::Bior44, Boundary::Symmetric).unwrap())
            .collect();
        let sp = sparsify_pyramid(&pyr, &SparsifyConfig::with_budget(50)).unwrap();
        assert!(sp.uniform_fallback);
        assert_eq!(sp.bands.len(), 15);
        assert!(sp.bands.values().all(SparseBand::is_empty));
    }

    /// Brute force: sort every location of every band and read off the answer.
    fn reference_selection(pyr: &[WaveletPyramid], config: &SparsifyConfig) -> BTreeMap<BandKey, Vec<[usize; 3]>> {
        let budget = allocate_budget(&band_stats(pyr, config.reference_channel).unwrap(), config).unwrap();
        let mut out = BTreeMap::new();
        for (band, a) in pyr[0].bands() {
            let mut all: Vec<([usize; 3], f64)> = Vec::new();
            for ((x, y, z), _) in a.indexed_iter() {
                let m = pyr.iter().map(|p| p.band(band).unwrap()[[x, y, z]].powi(2)).sum::<f64>().sqrt();
                all.push(([x, y, z], m));
            }
            let mut mags: Vec<f64> = all.iter().map(|p| p.1).collect();
            mags.sort_by(f64::total_cmp);
            let med = |s: &[f64]| {
                let n = s.len();
                if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
            };
            let m = med(&mags);
            let mut dev: Vec<f64> = mags.iter().map(|x| (x - m).abs()).collect();
            dev.sort_by(f64::total_cmp);
            let t = config.mad_multiplier * med(&dev) / 0.6745;
            all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut keep: Vec<[usize; 3]> = all
                .into_iter()
                .filter(|p| p.1 >= t && p.1 > 0.0)
                .take(budget[band])
                .map(|p| p.0)
                .collect();
            keep.sort();
            out.insert(*band, keep);
        }
        out
    }

    #[test]
    fn sparsify_matches_brute_force() {
        let pyr = random_pyramids([16, 16, 16], 2, 5);
        for (k_total, lambda) in [(300, 0.5), (1000, 1.0), (4000, 0.1)] {
            let config = SparsifyConfig {
                k_total,
                mad_multiplier: lambda,
                ..Default::default()
            };
            let sp = sparsify_pyramid(&pyr, &config).unwrap();
            let reference = reference_selection(&pyr, &config);
            assert!(sp.retained() <= k_total);
            for (band, sb) in &sp.bands {
                assert_eq!(sb.indices, reference[band], "band {band}");
                let r = sp.reports.iter().find(|r| r.band == *band).unwrap();
                assert!(sb.len() <= r.allocated);
                for (i, v) in sb.indices.iter().zip(&sb.values) {
                    for c in 0..4 {
                        assert_eq!(v[c], pyr[c].band(band).unwrap()[*i]);
                    }
                }
            }
        }
    }

    #[test]
    fn sparse_file_round_trip() {
        let pyr = random_pyramids([8, 6, 10], 2, 9);
        let sp = sparsify_pyramid(&pyr, &SparsifyConfig::with_budget(120)).unwrap();
        let back = decode_sparse(&encode_sparse(&sp)).unwrap();
        assert_eq!(back.reports, sp.reports);
        for (band, sb) in &sp.bands {
            let b = &back.bands[band];
            assert_eq!(b.indices, sb.indices);
            for (x, y) in b.values.iter().zip(&sb.values) {
                for c in 0..4 {
                    assert_eq!(x[c], y[c] as f32 as f64);
                }
            }
        }
        assert_eq!(encode_sparse(&back), encode_sparse(&sp));
        let mut bytes = encode_sparse(&sp);
        bytes.pop();
        assert!(decode_sparse(&bytes).is_err());
    }

    #[test]
    fn channel_names() {
        assert_eq!("alpha".parse::<Channel>().unwrap(), Channel::A);
        assert_eq!(Channel::default().index(), 3);
        assert!("x".parse::<Channel>().is_err());
    }
}
