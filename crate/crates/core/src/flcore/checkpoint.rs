//! `FLWT` model checkpoints: magic, `u32` layer count, one `u64` per layer
//! width, then the parameters as `f64`. All little-endian.

use super::{FlError, ModelWeights, Shape};
use crate::Scalar;

const MAGIC: &[u8; 4] = b"FLWT";

pub fn to_bytes<T: Scalar>(w: &ModelWeights<T>) -> Vec<u8> {
    let dims = w.shape.dims();
    let mut out = Vec::with_capacity(8 + 8 * dims.len() + 8 * w.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in &w.values {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    out
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<ModelWeights<T>, FlError> {
    let bad = |m: &str| FlError::Checkpoint(m.to_string());
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| bad("missing FLWT magic"))?;
    let (n, rest) = rest.split_first_chunk::<4>().ok_or_else(|| bad("truncated header"))?;
    let n = u32::from_le_bytes(*n) as usize;
    if n < 2 || rest.len() < n * 8 {
        return Err(bad("truncated shape descriptor"));
    }
    let (dims_raw, values_raw) = rest.split_at(n * 8);
    let dims: Vec<usize> = dims_raw
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let shape = Shape::from_dims(&dims)?;
    if values_raw.len() != shape.param_count() * 8 {
        return Err(bad("parameter block does not match shape"));
    }
    let values = values_raw
        .chunks_exact(8)
        .map(|c| T::of_f64(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    ModelWeights::new(values, shape)
}
