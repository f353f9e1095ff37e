//! Portable binary weight files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   4 bytes  "SNTL"
//! version u16
//! layers  u16
//! per layer:
//!   out_dim u32
//!   in_dim  u32
//!   weights out_dim * in_dim f64, row-major
//!   bias    out_dim f64
//! crc32   u32  (IEEE, over every preceding byte)
//! ```
//!
//! Round trips are bit-exact; the CRC guards against truncation and
//! corruption.

use super::{LayerParams, NetError, NetworkParams};
use ndarray::{Array1, Array2};
use std::io::Write;
use std::path::Path;

pub const WEIGHT_MAGIC: [u8; 4] = *b"SNTL";
pub const WEIGHT_FORMAT_VERSION: u16 = 1;

/// Guard against absurd dimensions in corrupted files.
const MAX_DIM: u32 = 1 << 20;

#[derive(Debug)]
pub enum WeightsError {
    Io(std::io::Error),
    BadMagic([u8; 4]),
    UnsupportedVersion(u16),
    Truncated,
    CrcMismatch { stored: u32, computed: u32 },
    Malformed(String),
    ArchitectureMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

impl std::fmt::Display for WeightsError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Io(e) => write!(f, "weight file I/O error: {e}"),
            Self::BadMagic(m) => write!(f, "not a weight file (magic {m:?})"),
            Self::UnsupportedVersion(v) => write!(f, "unsupported weight format version {v}"),
            Self::Truncated => write!(f, "weight file is truncated"),
            Self::CrcMismatch { stored, computed } => write!(
                f,
                "weight file checksum mismatch (stored {stored:08x}, computed {computed:08x})"
            ),
            Self::Malformed(msg) => write!(f, "malformed weight file: {msg}"),
            Self::ArchitectureMismatch { expected, found } => write!(
                f,
                "weight file architecture {found:?} does not match expected {expected:?}"
            ),
        }
    }
}

impl std::error::Error for WeightsError {}

impl From<std::io::Error> for WeightsError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

/// Serializes parameters to the weight format.
pub fn save_weights(params: &NetworkParams, path: &Path) -> Result<(), WeightsError> {
    let mut payload = Vec::with_capacity(64);
    payload.extend_from_slice(&WEIGHT_MAGIC);
    payload.extend_from_slice(&WEIGHT_FORMAT_VERSION.to_le_bytes());
    let n_layers = u16::try_from(params.layers().len())
        .map_err(|_| WeightsError::Malformed("too many layers".into()))?;
    payload.extend_from_slice(&n_layers.to_le_bytes());
    for layer in params.layers() {
        payload.extend_from_slice(&(layer.out_dim() as u32).to_le_bytes());
        payload.extend_from_slice(&(layer.in_dim() as u32).to_le_bytes());
        for &w in layer.weight.iter() {
            payload.extend_from_slice(&w.to_le_bytes());
        }
        for &b in layer.bias.iter() {
            payload.extend_from_slice(&b.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&payload);
    payload.extend_from_slice(&crc.to_le_bytes());

    let mut file = std::fs::File::create(path)?;
    file.write_all(&payload)?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightsError> {
        if self.pos + n > self.bytes.len() {
            return Err(WeightsError::Truncated);
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("len 2")))
    }

    fn u32(&mut self) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("len 4")))
    }

    fn f64_block(&mut self, count: usize) -> Result<Vec<f64>, WeightsError> {
        let raw = self.take(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("len 8")))
            .collect())
    }
}

/// Loads parameters, verifying magic, version, structure, and checksum.
pub fn load_weights(path: &Path) -> Result<NetworkParams, WeightsError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 4 + 2 + 2 + 4 {
        return Err(WeightsError::Truncated);
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().expect("len 4"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WeightsError::CrcMismatch { stored, computed });
    }

    let mut r = Reader { bytes: body, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().expect("len 4");
    if magic != WEIGHT_MAGIC {
        return Err(WeightsError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != WEIGHT_FORMAT_VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let n_layers = r.u16()? as usize;
    if n_layers == 0 {
        return Err(WeightsError::Malformed("zero layers".into()));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let out_dim = r.u32()?;
        let in_dim = r.u32()?;
        if out_dim == 0 || in_dim == 0 || out_dim > MAX_DIM || in_dim > MAX_DIM {
            return Err(WeightsError::Malformed(format!(
                "bad layer dims {out_dim}x{in_dim}"
            )));
        }
        let (out_dim, in_dim) = (out_dim as usize, in_dim as usize);
        let w = r.f64_block(out_dim * in_dim)?;
        let b = r.f64_block(out_dim)?;
        layers.push(LayerParams {
            weight: Array2::from_shape_vec((out_dim, in_dim), w).expect("shape matches"),
            bias: Array1::from_vec(b),
        });
    }
    if r.pos != body.len() {
        return Err(WeightsError::Malformed("trailing bytes".into()));
    }
    NetworkParams::from_layers(layers).map_err(|e| match e {
        NetError::DimensionMismatch { expected, got } => WeightsError::Malformed(format!(
            "layer chain broken: expected in_dim {expected}, got {got}"
        )),
        other => WeightsError::Malformed(other.to_string()),
    })
}

/// Loads and additionally checks the `[input, hidden..., output]` dimensions.
pub fn load_weights_expecting(
    path: &Path,
    expected: &[usize],
) -> Result<NetworkParams, WeightsError> {
    let params = load_weights(path)?;
    let found = params.architecture();
    if found != expected {
        return Err(WeightsError::ArchitectureMismatch {
            expected: expected.to_vec(),
            found,
        });
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomState;

    fn tmp(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("sntl-weights-{name}-{}", std::process::id()));
        p
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let params =
            NetworkParams::he_init(&[139, 100, 1], &mut RandomState::from_seed(1));
        let path = tmp("roundtrip");
        save_weights(&params, &path).unwrap();
        let loaded = load_weights(&path).unwrap();
        assert_eq!(params, loaded);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn truncated_file_is_rejected() {
        let params = NetworkParams::he_init(&[8, 4, 1], &mut RandomState::from_seed(2));
        let path = tmp("truncated");
        save_weights(&params, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        let err = load_weights(&path).unwrap_err();
        assert!(
            matches!(err, WeightsError::CrcMismatch { .. } | WeightsError::Truncated),
            "got {err:?}"
        );
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn bad_magic_is_rejected() {
        let path = tmp("magic");
        std::fs::write(&path, b"NOPE00000000000000000000").unwrap();
        let err = load_weights(&path).unwrap_err();
        // crc is checked first on the raw bytes, magic right after; either
        // failure identifies a non-weight file
        assert!(
            matches!(err, WeightsError::BadMagic(_) | WeightsError::CrcMismatch { .. }),
            "got {err:?}"
        );
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn architecture_mismatch_is_explicit() {
        let params = NetworkParams::he_init(&[139, 50, 1], &mut RandomState::from_seed(3));
        let path = tmp("arch");
        save_weights(&params, &path).unwrap();
        let expected = crate::net::default_architecture(139);
        let err = load_weights_expecting(&path, &expected).unwrap_err();
        match err {
            WeightsError::ArchitectureMismatch { expected: e, found } => {
                assert_eq!(e, expected);
                assert_eq!(found, vec![139, 50, 1]);
            }
            other => panic!("expected ArchitectureMismatch, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn corrupted_payload_fails_the_checksum() {
        let params = NetworkParams::he_init(&[8, 4, 1], &mut RandomState::from_seed(4));
        let path = tmp("crc");
        save_weights(&params, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_weights(&path),
            Err(WeightsError::CrcMismatch { .. })
        ));
        std::fs::remove_file(&path).ok();
    }
}
