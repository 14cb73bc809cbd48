//! Binary containers shared by the measurement (`PRM1`) and weights (`PRWT`) files.
//!
//! Layout: 8 magic bytes, a little-endian `u64` header length, that many bytes
//! of UTF-8 JSON, then a raw little-endian payload.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Measurement;

pub const PRM1_MAGIC: &[u8; 8] = b"PRM1\0\0\0\0";

pub(crate) fn encode_container(magic: &[u8; 8], header: &str, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(payload);
    out
}

/// Splits a container into its JSON header and payload.
pub(crate) fn decode_container<'a>(magic: &'static [u8; 8], bytes: &'a [u8]) -> Result<(&'a str, &'a [u8])> {
    if bytes.len() < 8 {
        return Err(Error::Truncated {
            needed: 8,
            available: bytes.len(),
        });
    }
    if &bytes[..8] != magic {
        return Err(Error::BadMagic { expected: magic });
    }
    if bytes.len() < 16 {
        return Err(Error::Truncated {
            needed: 16,
            available: bytes.len(),
        });
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let end = 16usize
        .checked_add(len)
        .ok_or_else(|| Error::Header("header length overflows".into()))?;
    if bytes.len() < end {
        return Err(Error::Truncated {
            needed: end,
            available: bytes.len(),
        });
    }
    let header = std::str::from_utf8(&bytes[16..end]).map_err(|e| Error::Header(e.to_string()))?;
    Ok((header, &bytes[end..]))
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct MeasurementHeader {
    h: usize,
    w: usize,
    alpha: f64,
    seed: Option<u64>,
    fields: Vec<String>,
}

const FIELD_INTENSITIES: &str = "intensities";
const FIELD_MAGNITUDES: &str = "magnitudes";

pub fn encode_measurement(meas: &Measurement) -> Vec<u8> {
    let (h, w) = meas.dims();
    let header = MeasurementHeader {
        h,
        w,
        alpha: meas.alpha(),
        seed: meas.seed(),
        fields: vec![FIELD_INTENSITIES.into(), FIELD_MAGNITUDES.into()],
    };
    let json = serde_json::to_string(&header).expect("header serializes");
    let mut payload = Vec::with_capacity(16 * meas.intensities().len());
    for v in meas.intensities().iter().chain(meas.magnitudes()) {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    encode_container(PRM1_MAGIC, &json, &payload)
}

pub fn decode_measurement(bytes: &[u8]) -> Result<Measurement> {
    let (json, payload) = decode_container(PRM1_MAGIC, bytes)?;
    let header: MeasurementHeader = serde_json::from_str(json).map_err(|e| Error::Header(e.to_string()))?;
    let n = 4 * header.h * header.w;
    let needed = header.fields.len() * n * 8;
    if payload.len() < needed {
        return Err(Error::Truncated {
            needed,
            available: payload.len(),
        });
    }
    if payload.len() > needed {
        return Err(Error::Header(format!(
            "{} trailing bytes after declared arrays",
            payload.len() - needed
        )));
    }
    let mut intensities = None;
    let mut magnitudes = None;
    for (k, name) in header.fields.iter().enumerate() {
        let values: Vec<f64> = payload[k * n * 8..(k + 1) * n * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        match name.as_str() {
            FIELD_INTENSITIES => intensities = Some(values),
            FIELD_MAGNITUDES => magnitudes = Some(values),
            other => return Err(Error::Header(format!("unknown field `{other}`"))),
        }
    }
    let intensities = intensities.ok_or_else(|| Error::Header("missing `intensities` field".into()))?;
    match magnitudes {
        Some(m) => Measurement::from_parts(header.h, header.w, header.alpha, header.seed, intensities, m),
        None => Measurement::from_intensities(header.h, header.w, header.alpha, header.seed, intensities),
    }
}

pub fn save_measurement(meas: &Measurement, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_measurement(meas))
}

pub fn load_measurement(path: impl AsRef<Path>) -> Result<Measurement> {
    decode_measurement(&read_file(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::{simulate_seeded, FourierOp};
    use crate::image::Image;

    fn sample() -> Measurement {
        let op = FourierOp::new(3, 2).unwrap();
        let img = Image::from_fn(3, 2, |i, j| (i * 40 + j * 17) as f64);
        simulate_seeded(&op, &img, 3.0, 12).unwrap()
    }

    #[test]
    fn layout_is_magic_length_json_payload() {
        let meas = sample();
        let bytes = encode_measurement(&meas);
        assert_eq!(&bytes[..8], b"PRM1\0\0\0\0");
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let header: serde_json::Value = serde_json::from_slice(&bytes[16..16 + len]).unwrap();
        assert_eq!(header["h"], 3);
        assert_eq!(header["w"], 2);
        assert_eq!(header["seed"], 12);
        assert_eq!(header["fields"][0], "intensities");
        assert_eq!(bytes.len(), 16 + len + 2 * 24 * 8);
        let first = f64::from_le_bytes(bytes[16 + len..24 + len].try_into().unwrap());
        assert_eq!(first, meas.intensities()[0]);
    }

    #[test]
    fn round_trip() {
        let meas = sample();
        assert_eq!(decode_measurement(&encode_measurement(&meas)).unwrap(), meas);
    }

    #[test]
    fn errors_are_distinct() {
        let bytes = encode_measurement(&sample());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_measurement(&bad), Err(Error::BadMagic { .. })));
        assert!(matches!(
            decode_measurement(&bytes[..bytes.len() - 1]),
            Err(Error::Truncated { .. })
        ));
        assert!(matches!(decode_measurement(&bytes[..12]), Err(Error::Truncated { .. })));
    }
}
