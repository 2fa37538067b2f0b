//! Checkpoint container: `"DCKP"`, a little-endian `u32` preamble length, a
//! JSON preamble (`arch`, `arch_hash`, `tensors`), then one raw `DFLD` array
//! per weight/bias tensor. Parameters are stored as `f32`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::{DenoiserArch, TinyDenoiser};
use crate::error::{Error, Result};
use crate::field::io::{decode_raw, encode_raw};
use crate::field::{ImageField, Shape};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DCKP";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Preamble {
    format: String,
    version: u32,
    arch: DenoiserArch,
    arch_hash: String,
    tensors: usize,
}

const FORMAT_NAME: &str = "dolph-denoiser";

pub fn encode_checkpoint<T: Scalar>(model: &TinyDenoiser<T>) -> Vec<u8> {
    let arch = model.arch().clone();
    let shapes = arch.tensor_shapes();
    let preamble = Preamble {
        format: FORMAT_NAME.into(),
        version: 1,
        arch_hash: arch.hash(),
        tensors: shapes.len(),
        arch,
    };
    let json = serde_json::to_vec(&preamble).expect("preamble serializes");
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    let mut offset = 0;
    for (rows, cols) in shapes {
        let len = rows * cols;
        let tensor = ImageField::from_vec(
            Shape::new(rows, cols, 1),
            model.params()[offset..offset + len].to_vec(),
        )
        .expect("tensor shape matches layout");
        out.extend_from_slice(&encode_raw(&tensor));
        offset += len;
    }
    out
}

/// Decodes a checkpoint. When `expected` is given, the stored architecture
/// hash must match it.
pub fn decode_checkpoint<T: Scalar>(
    bytes: &[u8],
    expected: Option<&DenoiserArch>,
) -> Result<TinyDenoiser<T>> {
    if bytes.len() < 8 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("missing DCKP header".into()));
    }
    let json_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let json = bytes
        .get(8..8 + json_len)
        .ok_or_else(|| Error::Checkpoint("preamble truncated".into()))?;
    let preamble: Preamble = serde_json::from_slice(json)
        .map_err(|e| Error::Checkpoint(format!("bad preamble: {e}")))?;
    if preamble.format != FORMAT_NAME || preamble.version != 1 {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint {} v{}",
            preamble.format, preamble.version
        )));
    }
    if preamble.arch.hash() != preamble.arch_hash {
        return Err(Error::Checkpoint(
            "stored architecture does not match its hash".into(),
        ));
    }
    if let Some(want) = expected {
        if want.hash() != preamble.arch_hash {
            return Err(Error::Checkpoint(format!(
                "architecture hash mismatch: checkpoint {}, config {}",
                preamble.arch_hash,
                want.hash()
            )));
        }
    }
    let shapes = preamble.arch.tensor_shapes();
    if shapes.len() != preamble.tensors {
        return Err(Error::Checkpoint(format!(
            "preamble lists {} tensors, architecture has {}",
            preamble.tensors,
            shapes.len()
        )));
    }
    let mut params = Vec::with_capacity(preamble.arch.param_count());
    let mut pos = 8 + json_len;
    for (rows, cols) in shapes {
        let (tensor, used) = decode_raw::<T>(&bytes[pos..])
            .map_err(|e| Error::Checkpoint(format!("tensor data: {e}")))?;
        if tensor.shape() != Shape::new(rows, cols, 1) {
            return Err(Error::Checkpoint(format!(
                "tensor shape {} does not match {rows}x{cols}",
                tensor.shape()
            )));
        }
        params.extend(tensor.into_vec());
        pos += used;
    }
    if pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after tensors".into()));
    }
    TinyDenoiser::from_params(preamble.arch, params)
}

pub fn save_checkpoint<T: Scalar>(model: &TinyDenoiser<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    expected: Option<&DenoiserArch>,
) -> Result<TinyDenoiser<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::network::Activation;
    use crate::field::SeededRng;

    fn model() -> TinyDenoiser<f32> {
        TinyDenoiser::init(DenoiserArch::default(), &mut SeededRng::new(3)).unwrap()
    }

    #[test]
    fn roundtrip_is_exact_for_f32() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let m = model();
        save_checkpoint(&m, &p).unwrap();
        let back: TinyDenoiser<f32> = load_checkpoint(&p, Some(m.arch())).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_checkpoint(&back), fs::read(&p).unwrap());
    }

    #[test]
    fn wrong_architecture_is_an_error() {
        let bytes = encode_checkpoint(&model());
        let other = DenoiserArch {
            channels: 1,
            hidden: vec![8],
            kernel: 3,
            activation: Activation::Tanh,
        };
        let err = decode_checkpoint::<f32>(&bytes, Some(&other)).unwrap_err();
        assert!(err.to_string().contains("hash mismatch"), "{err}");
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode_checkpoint(&model());
        assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 3], None).is_err());
        assert!(decode_checkpoint::<f32>(b"XXXX\0\0\0\0", None).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint::<f32>(&extra, None).is_err());
        // Tamper with the preamble: hash no longer matches the stored arch.
        let text = String::from_utf8_lossy(&bytes[8..]).into_owned();
        let idx = text.find("\"kernel\":3").unwrap();
        let mut tampered = bytes.clone();
        tampered[8 + idx + 9] = b'5';
        assert!(decode_checkpoint::<f32>(&tampered, None).is_err());
    }

    #[test]
    fn empty_path_is_io_error() {
        assert!(matches!(
            load_checkpoint::<f32>("", None),
            Err(Error::Io { .. })
        ));
        assert!(matches!(
            save_checkpoint(&model(), ""),
            Err(Error::Io { .. })
        ));
    }
}
