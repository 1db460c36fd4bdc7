//! Binary model checkpoints.
//!
//! Layout, all integers and reals little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `KNOB` |
//! | 4     | format version (`u32`, currently 1) |
//! | 4     | input resolution (`u32`) |
//! | 16    | label min, label max (`f64`) |
//! | 4     | layer count (`u32`) |
//! | ...   | per layer: kind byte (0 conv, 1 relu, 2 pool, 3 dense, 4 silu) then `u32` fields: conv `in out kernel stride pad`, dense `in out` |
//! | 8     | parameter value count (`u64`) |
//! | 8 n   | parameter values (`f64`), tensors in descriptor order |
//! | 4     | CRC32 (IEEE, reflected polynomial `0xEDB88320`) of all preceding bytes |

use std::path::Path;

use super::PersistError;
use crate::autodiff::Tensor;
use crate::regressor::{LayerSpec, RegressorModel};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"KNOB";
pub const CHECKPOINT_VERSION: u32 = 1;

const KIND_CONV: u8 = 0;
const KIND_RELU: u8 = 1;
const KIND_POOL: u8 = 2;
const KIND_DENSE: u8 = 3;
const KIND_SILU: u8 = 4;
const MIN_LEN: usize = 4 + 4 + 4;

pub fn encode_model(model: &RegressorModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + 8 * model.param_count());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.resolution() as u32).to_le_bytes());
    let (lo, hi) = model.label_range();
    out.extend_from_slice(&lo.to_le_bytes());
    out.extend_from_slice(&hi.to_le_bytes());
    out.extend_from_slice(&(model.layers().len() as u32).to_le_bytes());
    let put = |out: &mut Vec<u8>, fields: &[usize]| {
        for &f in fields {
            out.extend_from_slice(&(f as u32).to_le_bytes());
        }
    };
    for layer in model.layers() {
        match *layer {
            LayerSpec::Conv2d {
                in_channels,
                out_channels,
                kernel,
                stride,
                pad,
            } => {
                out.push(KIND_CONV);
                put(&mut out, &[in_channels, out_channels, kernel, stride, pad]);
            }
            LayerSpec::Relu => out.push(KIND_RELU),
            LayerSpec::Silu => out.push(KIND_SILU),
            LayerSpec::GlobalAvgPool => out.push(KIND_POOL),
            LayerSpec::Dense { inputs, outputs } => {
                out.push(KIND_DENSE);
                put(&mut out, &[inputs, outputs]);
            }
        }
    }
    out.extend_from_slice(&(model.param_count() as u64).to_le_bytes());
    for p in model.params() {
        for v in p.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PersistError> {
        let end = self.pos.checked_add(n).ok_or(PersistError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(PersistError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, PersistError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, PersistError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, PersistError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<RegressorModel, PersistError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() {
        return Err(PersistError::Truncated);
    }
    if bytes[..4] != CHECKPOINT_MAGIC {
        return Err(PersistError::BadMagic);
    }
    if bytes.len() < MIN_LEN {
        return Err(PersistError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(PersistError::CrcMismatch { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(PersistError::UnsupportedVersion(version));
    }
    let resolution = r.u32()? as usize;
    let label_range = (r.f64()?, r.f64()?);
    let n_layers = r.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        let layer = match r.u8()? {
            KIND_CONV => LayerSpec::Conv2d {
                in_channels: r.u32()? as usize,
                out_channels: r.u32()? as usize,
                kernel: r.u32()? as usize,
                stride: r.u32()? as usize,
                pad: r.u32()? as usize,
            },
            KIND_RELU => LayerSpec::Relu,
            KIND_SILU => LayerSpec::Silu,
            KIND_POOL => LayerSpec::GlobalAvgPool,
            KIND_DENSE => LayerSpec::Dense {
                inputs: r.u32()? as usize,
                outputs: r.u32()? as usize,
            },
            other => return Err(PersistError::Malformed(format!("unknown layer kind {other}"))),
        };
        layers.push(layer);
    }
    let count = r.u64()? as usize;
    let shapes: Vec<Vec<usize>> = layers.iter().flat_map(|l| l.param_shapes()).collect();
    let expected: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if count != expected {
        return Err(PersistError::Malformed(format!(
            "descriptor needs {expected} parameters, block holds {count}"
        )));
    }
    let mut params = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let n = shape.iter().product();
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        params.push(Tensor::new(shape, data).map_err(|e| PersistError::Malformed(e.to_string()))?);
    }
    if r.pos != body.len() {
        return Err(PersistError::Malformed(format!("{} trailing bytes", body.len() - r.pos)));
    }
    RegressorModel::from_parts(layers, params, resolution, label_range)
        .map_err(|e| PersistError::Malformed(e.to_string()))
}

pub fn save_model(model: &RegressorModel, path: &Path) -> Result<(), PersistError> {
    std::fs::write(path, encode_model(model)).map_err(|e| PersistError::io(path, e))
}

pub fn load_model(path: &Path) -> Result<RegressorModel, PersistError> {
    let bytes = std::fs::read(path).map_err(|e| PersistError::io(path, e))?;
    decode_model(&bytes)
}
