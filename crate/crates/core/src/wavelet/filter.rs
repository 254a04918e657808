//! Two-channel filter banks and the 1D analysis/synthesis kernels.
//!
//! Taps are stored relative to the output sample's phase:
//! `lo[m] = Σ a_lo[k]·x[2m + k]`, `hi[m] = Σ a_hi[k]·x[2m + 1 + k]`, and
//! synthesis convolves the upsampled bands, `x[i] = Σ s_lo[d]·U_lo[i - d] +
//! s_hi[d]·U_hi[i - d]` with lowpass samples on even and highpass samples on
//! odd positions. Signals are extended either periodically or by whole-sample
//! symmetric reflection; odd lengths are first padded to even length by
//! repeating the last sample.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::WaveletError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Filter {
    /// CDF 9/7 biorthogonal pair (`bior4.4`).
    #[serde(rename = "bior4.4")]
    Bior44,
    #[serde(rename = "haar")]
    Haar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    #[serde(rename = "symmetric")]
    Symmetric,
    #[serde(rename = "periodic")]
    Periodic,
}

impl fmt::Display for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Filter::Bior44 => "bior4.4",
            Filter::Haar => "haar",
        })
    }
}

impl FromStr for Filter {
    type Err = WaveletError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bior4.4" | "bior44" | "cdf97" => Ok(Filter::Bior44),
            "haar" => Ok(Filter::Haar),
            other => Err(WaveletError::UnsupportedFilter(other.to_string())),
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boundary::Symmetric => "symmetric",
            Boundary::Periodic => "periodic",
        })
    }
}

impl FromStr for Boundary {
    type Err = WaveletError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "symmetric" => Ok(Boundary::Symmetric),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(WaveletError::UnsupportedBoundary(other.to_string())),
        }
    }
}

/// FIR taps starting at `first` offset.
#[derive(Clone, Copy, Debug)]
pub struct Taps {
    pub first: i32,
    pub coeffs: &'static [f64],
}

impl Taps {
    pub fn iter(&self) -> impl Iterator<Item = (i32, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, &c)| (self.first + i as i32, c))
    }

    pub fn last(&self) -> i32 {
        self.first + self.coeffs.len() as i32 - 1
    }
}

pub struct FilterBank {
    pub analysis_lo: Taps,
    pub analysis_hi: Taps,
    pub synthesis_lo: Taps,
    pub synthesis_hi: Taps,
}

const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

// CDF 9/7 ("bior4.4") with DC gain sqrt(2) on the lowpass pair.
const BIOR44_ANALYSIS_LO: [f64; 9] = [
    0.037_828_455_506_995_461,
    -0.023_849_465_019_380_002,
    -0.110_624_404_418_423_41,
    0.377_402_855_612_653_76,
    0.852_698_679_009_403_42,
    0.377_402_855_612_653_76,
    -0.110_624_404_418_423_41,
    -0.023_849_465_019_380_002,
    0.037_828_455_506_995_461,
];
const BIOR44_ANALYSIS_HI: [f64; 7] = [
    -0.064_538_882_628_938_439,
    0.040_689_417_609_558_437,
    0.418_092_273_222_212_2,
    -0.788_485_616_405_664_4,
    0.418_092_273_222_212_2,
    0.040_689_417_609_558_437,
    -0.064_538_882_628_938_439,
];
const BIOR44_SYNTHESIS_LO: [f64; 7] = [
    -0.064_538_882_628_938_439,
    -0.040_689_417_609_558_437,
    0.418_092_273_222_212_2,
    0.788_485_616_405_664_4,
    0.418_092_273_222_212_2,
    -0.040_689_417_609_558_437,
    -0.064_538_882_628_938_439,
];
const BIOR44_SYNTHESIS_HI: [f64; 9] = [
    -0.037_828_455_506_995_461,
    -0.023_849_465_019_380_002,
    0.110_624_404_418_423_41,
    0.377_402_855_612_653_76,
    -0.852_698_679_009_403_42,
    0.377_402_855_612_653_76,
    0.110_624_404_418_423_41,
    -0.023_849_465_019_380_002,
    -0.037_828_455_506_995_461,
];

static BIOR44: FilterBank = FilterBank {
    analysis_lo: Taps { first: -4, coeffs: &BIOR44_ANALYSIS_LO },
    analysis_hi: Taps { first: -3, coeffs: &BIOR44_ANALYSIS_HI },
    synthesis_lo: Taps { first: -3, coeffs: &BIOR44_SYNTHESIS_LO },
    synthesis_hi: Taps { first: -4, coeffs: &BIOR44_SYNTHESIS_HI },
};

static HAAR: FilterBank = FilterBank {
    analysis_lo: Taps { first: 0, coeffs: &[H, H] },
    analysis_hi: Taps { first: -1, coeffs: &[H, -H] },
    synthesis_lo: Taps { first: 0, coeffs: &[H, H] },
    synthesis_hi: Taps { first: -1, coeffs: &[H, -H] },
};

impl Filter {
    pub fn bank(self) -> &'static FilterBank {
        match self {
            Filter::Bior44 => &BIOR44,
            Filter::Haar => &HAAR,
        }
    }

    /// Longest analysis filter length in taps.
    pub fn support(self) -> usize {
        let b = self.bank();
        b.analysis_lo.coeffs.len().max(b.analysis_hi.coeffs.len())
    }
}

/// Maps an index of the infinite extension onto `[0, len)`.
pub(crate) fn extend_index(i: i64, len: usize, boundary: Boundary) -> usize {
    let n = len as i64;
    match boundary {
        Boundary::Periodic => i.rem_euclid(n) as usize,
        Boundary::Symmetric => {
            if n == 1 {
                return 0;
            }
            let period = 2 * (n - 1);
            let r = i.rem_euclid(period);
            (if r < n { r } else { period - r }) as usize
        }
    }
}

/// Length after padding odd signals to even length.
pub(crate) fn padded_len(n: usize) -> usize {
    n + (n & 1)
}

const MARGIN: usize = 8;

/// Single-level analysis of `x` into `lo` and `hi` (each `ceil(len/2)` long).
pub(crate) fn analyze(
    x: &[f64],
    lo: &mut [f64],
    hi: &mut [f64],
    filter: Filter,
    boundary: Boundary,
    scratch: &mut Vec<f64>,
) {
    let n = x.len();
    let m = padded_len(n);
    let half = m / 2;
    debug_assert!(lo.len() == half && hi.len() == half);
    // extended copy: scratch[i + MARGIN] = x_ext[i]
    scratch.clear();
    scratch.extend((-(MARGIN as i64)..(m + MARGIN) as i64).map(|i| {
        let j = extend_index(i, m, boundary);
        x[j.min(n - 1)]
    }));
    let bank = filter.bank();
    for k in 0..half {
        let base = (2 * k + MARGIN) as i64;
        lo[k] = bank
            .analysis_lo
            .iter()
            .map(|(off, c)| c * scratch[(base + off as i64) as usize])
            .sum();
        hi[k] = bank
            .analysis_hi
            .iter()
            .map(|(off, c)| c * scratch[(base + 1 + off as i64) as usize])
            .sum();
    }
}

/// Single-level synthesis into `out`; the padded result is cropped to `out.len()`.
pub(crate) fn synthesize(
    lo: &[f64],
    hi: &[f64],
    out: &mut [f64],
    filter: Filter,
    boundary: Boundary,
    scratch: &mut Vec<f64>,
) {
    let half = lo.len();
    let m = 2 * half;
    debug_assert!(hi.len() == half && padded_len(out.len()) == m);
    // extended upsampled signal; even positions carry lowpass, odd highpass
    scratch.clear();
    scratch.extend((-(MARGIN as i64)..(m + MARGIN) as i64).map(|p| {
        let q = extend_index(p, m, boundary);
        if q % 2 == 0 {
            lo[q / 2]
        } else {
            hi[q / 2]
        }
    }));
    let bank = filter.bank();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (d, c) in bank.synthesis_lo.iter() {
            let p = i as i64 - d as i64;
            if p.rem_euclid(2) == 0 {
                acc += c * scratch[(p + MARGIN as i64) as usize];
            }
        }
        for (d, c) in bank.synthesis_hi.iter() {
            let p = i as i64 - d as i64;
            if p.rem_euclid(2) == 1 {
                acc += c * scratch[(p + MARGIN as i64) as usize];
            }
        }
        *o = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round_trip(x: &[f64], filter: Filter, boundary: Boundary) -> Vec<f64> {
        let half = padded_len(x.len()) / 2;
        let (mut lo, mut hi) = (vec![0.0; half], vec![0.0; half]);
        let mut s = Vec::new();
        analyze(x, &mut lo, &mut hi, filter, boundary, &mut s);
        let mut out = vec![0.0; x.len()];
        synthesize(&lo, &hi, &mut out, filter, boundary, &mut s);
        out
    }

    #[test]
    fn haar_constant_kills_highpass() {
        let x = [3.0; 8];
        let (mut lo, mut hi) = (vec![0.0; 4], vec![0.0; 4]);
        analyze(&x, &mut lo, &mut hi, Filter::Haar, Boundary::Symmetric, &mut Vec::new());
        for v in lo {
            assert!((v - 3.0 * 2f64.sqrt()).abs() < 1e-14);
        }
        assert!(hi.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn bior_dc_gain_and_vanishing_moments() {
        let b = Filter::Bior44.bank();
        let s: f64 = b.analysis_lo.coeffs.iter().sum();
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
        // highpass annihilates constants and linear ramps
        for p in 0..2 {
            let m: f64 = b.analysis_hi.iter().map(|(k, c)| c * (k as f64).powi(p)).sum();
            assert!(m.abs() < 1e-12, "moment {p} = {m}");
        }
    }

    #[test]
    fn one_d_perfect_reconstruction() {
        for n in [2usize, 3, 4, 5, 7, 8, 13, 16, 31] {
            let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64 / 17.0 - 2.0).collect();
            for filter in [Filter::Haar, Filter::Bior44] {
                for boundary in [Boundary::Symmetric, Boundary::Periodic] {
                    let y = round_trip(&x, filter, boundary);
                    let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    assert!(err < 1e-10, "n={n} {filter} {boundary}: {err}");
                }
            }
        }
    }

    #[test]
    fn extension_indices() {
        let sym: Vec<usize> = (-3..8).map(|i| extend_index(i, 4, Boundary::Symmetric)).collect();
        assert_eq!(sym, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0, 1]);
        let per: Vec<usize> = (-3..8).map(|i| extend_index(i, 4, Boundary::Periodic)).collect();
        assert_eq!(per, vec![1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3]);
    }

    #[test]
    fn filter_names_round_trip() {
        for f in [Filter::Haar, Filter::Bior44] {
            assert_eq!(f.to_string().parse::<Filter>().unwrap(), f);
        }
        assert!(matches!("db4".parse::<Filter>(), Err(WaveletError::UnsupportedFilter(_))));
    }
}
