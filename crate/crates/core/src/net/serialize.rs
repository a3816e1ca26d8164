//! Versioned flat-binary parameter files.
//!
//! Layout: magic `ZSNP`, version u32, the six dims as u32, the seed as
//! u64, the value count as u64, then every parameter as a little-endian
//! 64-bit float in block order.

use super::{NetDims, NetError, NetParams};

const MAGIC: &[u8; 4] = b"ZSNP";
const VERSION: u32 = 1;

pub fn write_params(params: &NetParams) -> Vec<u8> {
    let d = params.dims;
    let mut out = Vec::with_capacity(4 + 4 + 6 * 4 + 8 + 8 + params.values.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [d.input, d.hidden, d.latent, d.heads, d.head_width, d.n_clusters] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&params.seed.to_le_bytes());
    out.extend_from_slice(&(params.values.len() as u64).to_le_bytes());
    for value in &params.values {
        out.extend_from_slice(&value.to_le_bytes());
    }
    out
}

pub fn read_params(bytes: &[u8]) -> Result<NetParams, NetError> {
    let corrupt = |msg: &str| NetError::CorruptParams(msg.to_string());
    if bytes.len() < 4 + 4 + 24 + 8 + 8 {
        return Err(corrupt("file too short"));
    }
    if &bytes[..4] != MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut cursor = 4;
    let mut read_u32 = |bytes: &[u8]| -> u32 {
        let value = u32::from_le_bytes(bytes[cursor..cursor + 4].try_into().expect("4 bytes"));
        cursor += 4;
        value
    };
    let version = read_u32(bytes);
    if version != VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let dims = NetDims {
        input: read_u32(bytes) as usize,
        hidden: read_u32(bytes) as usize,
        latent: read_u32(bytes) as usize,
        heads: read_u32(bytes) as usize,
        head_width: read_u32(bytes) as usize,
        n_clusters: read_u32(bytes) as usize,
    };
    let seed = u64::from_le_bytes(
        bytes[cursor..cursor + 8].try_into().map_err(|_| corrupt("truncated seed"))?,
    );
    let count = u64::from_le_bytes(
        bytes[cursor + 8..cursor + 16].try_into().map_err(|_| corrupt("truncated count"))?,
    ) as usize;
    let payload = &bytes[cursor + 16..];

    if count != dims.total_len() {
        return Err(corrupt(&format!(
            "value count {count} does not match dims ({})",
            dims.total_len()
        )));
    }
    if payload.len() != count * 8 {
        return Err(corrupt("truncated values"));
    }
    let values = payload
        .chunks_exact(8)
        .map(|chunk| f64::from_le_bytes(chunk.try_into().expect("8 bytes")))
        .collect::<Vec<f64>>();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(corrupt("non-finite parameter"));
    }
    Ok(NetParams { dims, seed, values })
}
