//! Binary container shared by the pyramid, bank and sparse-coefficient files.
//!
//! Layout: 8-byte magic, u32 little-endian header length, UTF-8 JSON header,
//! then a little-endian binary payload whose layout the header describes.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ContainerError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: String },
    #[error("container truncated: {0}")]
    Truncated(&'static str),
    #[error("header JSON: {0}")]
    Header(#[from] serde_json::Error),
    #[error("payload inconsistent with header: {0}")]
    Payload(String),
}

pub fn encode<H: Serialize>(magic: &[u8; 8], header: &H, payload: &[u8]) -> Vec<u8> {
    let head = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + head.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(head.len() as u32).to_le_bytes());
    out.extend_from_slice(&head);
    out.extend_from_slice(payload);
    out
}

pub fn decode<'a, H: DeserializeOwned>(
    magic: &[u8; 8],
    bytes: &'a [u8],
) -> Result<(H, &'a [u8]), ContainerError> {
    if bytes.len() < 12 {
        return Err(ContainerError::Truncated("missing preamble"));
    }
    if &bytes[..8] != magic {
        return Err(ContainerError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
        });
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let rest = &bytes[12..];
    if rest.len() < len {
        return Err(ContainerError::Truncated("header"));
    }
    let header = serde_json::from_slice(&rest[..len])?;
    Ok((header, &rest[len..]))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ContainerError> {
    fs::write(path, bytes).map_err(|source| ContainerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, ContainerError> {
    fs::read(path).map_err(|source| ContainerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Little-endian cursor over a payload slice.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], ContainerError> {
        if self.buf.len() < N {
            return Err(ContainerError::Truncated("payload"));
        }
        let (head, tail) = self.buf.split_at(N);
        self.buf = tail;
        Ok(head.try_into().unwrap())
    }

    pub fn f32(&mut self) -> Result<f32, ContainerError> {
        self.take::<4>().map(f32::from_le_bytes)
    }

    pub fn f64(&mut self) -> Result<f64, ContainerError> {
        self.take::<8>().map(f64::from_le_bytes)
    }

    pub fn u32(&mut self) -> Result<u32, ContainerError> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    pub fn finish(self) -> Result<(), ContainerError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(ContainerError::Payload(format!(
                "{} trailing bytes",
                self.buf.len()
            )))
        }
    }
}
