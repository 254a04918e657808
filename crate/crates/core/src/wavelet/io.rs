//! Pyramid container files: JSON header plus little-endian `f32` band
//! payloads, channel by channel, bands in canonical order, x fastest.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{band_list, level_dims, BandKey, Boundary, Filter, WaveletPyramid};
use crate::container::{self, ContainerError, Reader};

const MAGIC: &[u8; 8] = b"WSPYRAM1";

#[derive(Serialize, Deserialize)]
struct BandEntry {
    band: BandKey,
    extent: [usize; 3],
}

#[derive(Serialize, Deserialize)]
struct Header {
    source_dims: [usize; 3],
    levels: usize,
    filter: Filter,
    boundary: Boundary,
    channels: usize,
    bands: Vec<BandEntry>,
}

pub(crate) fn push_xfast(out: &mut Vec<u8>, arr: &Array3<f64>) {
    let [nx, ny, nz] = [arr.shape()[0], arr.shape()[1], arr.shape()[2]];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                out.extend_from_slice(&(arr[[x, y, z]] as f32).to_le_bytes());
            }
        }
    }
}

/// Serializes one or more channels that share a structure.
pub fn encode_pyramids(channels: &[WaveletPyramid]) -> Vec<u8> {
    let first = &channels[0];
    assert!(channels.iter().all(|p| p.same_structure(first)));
    let header = Header {
        source_dims: first.source_dims,
        levels: first.levels,
        filter: first.filter,
        boundary: first.boundary,
        channels: channels.len(),
        bands: first
            .bands()
            .map(|(b, a)| BandEntry {
                band: *b,
                extent: [a.shape()[0], a.shape()[1], a.shape()[2]],
            })
            .collect(),
    };
    let mut payload = Vec::new();
    for p in channels {
        for (_, arr) in p.bands() {
            push_xfast(&mut payload, arr);
        }
    }
    container::encode(MAGIC, &header, &payload)
}

pub fn decode_pyramids(bytes: &[u8]) -> Result<Vec<WaveletPyramid>, ContainerError> {
    let (h, payload): (Header, _) = container::decode(MAGIC, bytes)?;
    let expected = band_list(h.levels);
    if h.bands.iter().map(|e| e.band).collect::<Vec<_>>() != expected {
        return Err(ContainerError::Payload("band table is not in canonical order".into()));
    }
    let mut reader = Reader::new(payload);
    let mut out = Vec::with_capacity(h.channels);
    for _ in 0..h.channels {
        let mut bands = BTreeMap::new();
        for e in &h.bands {
            if e.extent != level_dims(h.source_dims, e.band.level) {
                return Err(ContainerError::Payload(format!("band {} extent", e.band)));
            }
            let [nx, ny, nz] = e.extent;
            let mut arr = Array3::zeros(e.extent);
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        arr[[x, y, z]] = reader.f32()? as f64;
                    }
                }
            }
            bands.insert(e.band, arr);
        }
        let p = WaveletPyramid::from_bands(h.source_dims, h.levels, h.filter, h.boundary, bands)
            .map_err(|e| ContainerError::Payload(e.to_string()))?;
        out.push(p);
    }
    reader.finish()?;
    Ok(out)
}

pub fn write_pyramids(path: &Path, channels: &[WaveletPyramid]) -> Result<(), ContainerError> {
    container::write_file(path, &encode_pyramids(channels))
}

pub fn read_pyramids(path: &Path) -> Result<Vec<WaveletPyramid>, ContainerError> {
    decode_pyramids(&container::read_file(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::dwt3;

    #[test]
    fn pyramid_file_round_trip() {
        let x = Array3::from_shape_fn((9, 8, 6), |(i, j, k)| (i as f64 * 0.1).sin() + j as f64 - 0.3 * k as f64);
        let p = dwt3(&x, 2, Filter::Bior44, Boundary::Symmetric).unwrap();
        let q = dwt3(&x.mapv(|v| -v), 2, Filter::Bior44, Boundary::Symmetric).unwrap();
        let back = decode_pyramids(&encode_pyramids(&[p.clone(), q])).unwrap();
        assert_eq!(back.len(), 2);
        for ((b, a), (b2, a2)) in p.bands().zip(back[0].bands()) {
            assert_eq!(b, b2);
            for (u, v) in a.iter().zip(a2.iter()) {
                assert_eq!(*u as f32, *v as f32);
            }
        }
        let mut bytes = encode_pyramids(&back[..1]);
        bytes.truncate(bytes.len() - 4);
        assert!(decode_pyramids(&bytes).is_err());
    }
}
