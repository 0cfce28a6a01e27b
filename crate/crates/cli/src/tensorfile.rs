//! "PSTF" binary tensor format.
//!
//! Layout: magic `PSTF`, version u8 = 1, dtype u8 (0 = float32, 1 = float64),
//! ndim u8, reserved u8 = 0, then ndim little-endian u64 extents, then the
//! row-major little-endian payload. Round-trips are bit-exact for both dtypes.

use std::fs;
use std::io::Write;
use std::path::Path;

use proscale_core::numerics::{Dtype, Tensor};

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"PSTF";
pub const VERSION: u8 = 1;

fn dtype_code(dtype: Dtype) -> u8 {
    match dtype {
        Dtype::F32 => 0,
        Dtype::F64 => 1,
    }
}

pub fn encode(tensor: &Tensor) -> Result<Vec<u8>> {
    let shape = tensor.shape();
    if shape.len() > u8::MAX as usize {
        return Err(CliError::Validation(format!("rank {} exceeds format limit", shape.len())));
    }
    let mut out = Vec::with_capacity(8 + shape.len() * 8 + tensor.numel() * tensor.dtype().size_bytes());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(dtype_code(tensor.dtype()));
    out.push(shape.len() as u8);
    out.push(0);
    for &e in shape {
        out.extend_from_slice(&(e as u64).to_le_bytes());
    }
    match tensor.dtype() {
        Dtype::F32 => {
            for &v in tensor.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        Dtype::F64 => {
            for &v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let malformed = |what: &str| CliError::Io(format!("malformed tensor file: {}", what));
    if bytes.len() < 8 {
        return Err(malformed("truncated header"));
    }
    if bytes[0..4] != MAGIC {
        return Err(malformed("bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(malformed("unsupported version"));
    }
    let dtype = match bytes[5] {
        0 => Dtype::F32,
        1 => Dtype::F64,
        _ => return Err(malformed("unknown dtype code")),
    };
    if bytes[7] != 0 {
        return Err(malformed("nonzero reserved byte"));
    }
    let ndim = bytes[6] as usize;
    let header_len = 8 + ndim * 8;
    if bytes.len() < header_len {
        return Err(malformed("truncated extents"));
    }
    let mut shape = Vec::with_capacity(ndim);
    for d in 0..ndim {
        let mut ext = [0u8; 8];
        ext.copy_from_slice(&bytes[8 + d * 8..16 + d * 8]);
        shape.push(u64::from_le_bytes(ext) as usize);
    }
    let numel: usize = shape.iter().product();
    let payload = &bytes[header_len..];
    if payload.len() != numel * dtype.size_bytes() {
        return Err(malformed("payload length disagrees with extents"));
    }
    let data: Vec<f64> = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Tensor::new(shape, data, dtype).map_err(|e| malformed(&e.to_string()))
}

/// Atomic write: temp file beside the target, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let tmp = path.with_extension("tmp-write");
    {
        if let Some(d) = dir {
            fs::create_dir_all(d)?;
        }
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write(path: &Path, tensor: &Tensor) -> Result<()> {
    write_atomic(path, &encode(tensor)?)
}

pub fn read(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path)?;
    decode(&bytes)
}
