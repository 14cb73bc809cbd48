//! `PRWT` weights archives.
//!
//! `PRWT\0\0\0\1`, a little-endian `u64` header length, a UTF-8 JSON header
//! `{version, arch: [{name, shape, activation}], extras: {lambda}}`, then the
//! float32 little-endian tensors concatenated in header order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cnn::expected_arch;
use crate::error::{Error, Result};
use crate::formats::{decode_container, encode_container, read_file, write_file};

pub const PRWT_MAGIC: &[u8; 8] = b"PRWT\0\0\0\x01";
pub const PRWT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub activation: String,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Extras {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsHeader {
    pub version: u32,
    pub arch: Vec<TensorSpec>,
    #[serde(default)]
    pub extras: Extras,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsArchive {
    pub header: WeightsHeader,
    pub tensors: Vec<Vec<f32>>,
}

impl WeightsArchive {
    /// The all-zero network; its denoiser is the identity.
    pub fn zeros(lambda: Option<Vec<f64>>) -> Self {
        let arch = expected_arch();
        let tensors = arch.iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            header: WeightsHeader {
                version: PRWT_VERSION,
                arch,
                extras: Extras { lambda },
            },
            tensors,
        }
    }

    /// Builds an archive for the fixed architecture from a per-tensor generator.
    pub fn from_fn(lambda: Option<Vec<f64>>, mut f: impl FnMut(&TensorSpec, usize) -> f32) -> Self {
        let mut archive = Self::zeros(lambda);
        for (spec, data) in archive.header.arch.iter().zip(archive.tensors.iter_mut()) {
            for (k, v) in data.iter_mut().enumerate() {
                *v = f(spec, k);
            }
        }
        archive
    }

    pub fn lambda(&self) -> Option<&[f64]> {
        self.header.extras.lambda.as_deref()
    }

    pub fn tensor(&self, name: &str) -> Option<&[f32]> {
        self.header
            .arch
            .iter()
            .position(|t| t.name == name)
            .map(|k| self.tensors[k].as_slice())
    }

    /// Checks the header against the fixed residual-CNN architecture.
    pub fn validate(&self) -> Result<()> {
        if self.header.version != PRWT_VERSION {
            return Err(Error::UnsupportedVersion(self.header.version));
        }
        let expected = expected_arch();
        if self.header.arch.len() != expected.len() {
            return Err(Error::Header(format!(
                "expected {} tensors, header declares {}",
                expected.len(),
                self.header.arch.len()
            )));
        }
        for (got, want) in self.header.arch.iter().zip(&expected) {
            if got.name != want.name {
                return Err(Error::Header(format!(
                    "expected tensor `{}`, found `{}`",
                    want.name, got.name
                )));
            }
            if got.shape != want.shape {
                return Err(Error::ShapeMismatch {
                    name: got.name.clone(),
                    expected: want.shape.clone(),
                    actual: got.shape.clone(),
                });
            }
            if got.activation != want.activation {
                return Err(Error::Header(format!(
                    "tensor `{}` activation `{}`, expected `{}`",
                    got.name, got.activation, want.activation
                )));
            }
        }
        for (spec, data) in self.header.arch.iter().zip(&self.tensors) {
            if data.len() != spec.numel() {
                return Err(Error::ShapeMismatch {
                    name: spec.name.clone(),
                    expected: spec.shape.clone(),
                    actual: vec![data.len()],
                });
            }
        }
        if let Some(lambda) = &self.header.extras.lambda {
            if lambda.is_empty() || lambda.iter().any(|&l| !(l > 0.0 && l <= 1.0)) {
                return Err(Error::Header("lambda entries must lie in (0, 1]".into()));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let json = serde_json::to_string(&self.header).expect("header serializes");
        let mut payload = Vec::with_capacity(4 * self.tensors.iter().map(Vec::len).sum::<usize>());
        for v in self.tensors.iter().flatten() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        encode_container(PRWT_MAGIC, &json, &payload)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (json, payload) = decode_container(PRWT_MAGIC, bytes)?;
        let header: WeightsHeader = serde_json::from_str(json).map_err(|e| Error::Header(e.to_string()))?;
        if header.version != PRWT_VERSION {
            return Err(Error::UnsupportedVersion(header.version));
        }
        let needed: usize = header.arch.iter().map(|t| 4 * t.numel()).sum();
        if payload.len() < needed {
            return Err(Error::Truncated {
                needed,
                available: payload.len(),
            });
        }
        if payload.len() > needed {
            return Err(Error::Header(format!(
                "{} trailing bytes after declared tensors",
                payload.len() - needed
            )));
        }
        let mut offset = 0;
        let tensors = header
            .arch
            .iter()
            .map(|spec| {
                let n = 4 * spec.numel();
                let t = payload[offset..offset + n]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect();
                offset += n;
                t
            })
            .collect();
        let archive = Self { header, tensors };
        archive.validate()?;
        Ok(archive)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }
}

/// Reads and shape-validates a `PRWT` file.
pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightsArchive> {
    WeightsArchive::from_bytes(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WeightsArchive {
        WeightsArchive::from_fn(Some(vec![1.0, 0.5, 0.1]), |spec, k| {
            ((k as f32 * 0.37 + spec.name.len() as f32).sin()) * 0.1
        })
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.prwt");
        let a = sample();
        a.save(&path).unwrap();
        let b = load_weights(&path).unwrap();
        assert_eq!(a, b);
        assert_eq!(std::fs::read(&path).unwrap(), b.to_bytes());
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..8], b"PRWT\0\0\0\x01");
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let v: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["arch"][0]["name"], "conv0.weight");
        assert_eq!(v["arch"][0]["shape"], serde_json::json!([32, 2, 3, 3]));
        assert_eq!(v["arch"][0]["activation"], "relu");
        assert_eq!(v["extras"]["lambda"][1], 0.5);
    }

    #[test]
    fn distinct_errors() {
        let bytes = sample().to_bytes();

        let mut bad_magic = bytes.clone();
        bad_magic[3] = b'X';
        assert!(matches!(
            WeightsArchive::from_bytes(&bad_magic),
            Err(Error::BadMagic { .. })
        ));

        assert!(matches!(
            WeightsArchive::from_bytes(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));

        let mut a = sample();
        a.header.version = 2;
        let mut b = a.to_bytes();
        b[7] = 1;
        assert!(matches!(
            WeightsArchive::from_bytes(&b),
            Err(Error::UnsupportedVersion(2))
        ));

        let mut c = sample();
        c.header.arch[2].shape = vec![32, 32, 3, 2];
        c.tensors[2].truncate(32 * 32 * 6);
        assert!(matches!(
            WeightsArchive::from_bytes(&c.to_bytes()),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn lambda_entries_validated() {
        let mut a = sample();
        a.header.extras.lambda = Some(vec![1.0, 0.0]);
        assert!(WeightsArchive::from_bytes(&a.to_bytes()).is_err());
        assert!(WeightsArchive::zeros(None).validate().is_ok());
    }
}
