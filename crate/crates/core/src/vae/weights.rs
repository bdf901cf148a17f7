//! Weight-file container: magic, JSON header (dims, tensor names, shapes,
//! byte offsets), then raw little-endian f64 payloads in row-major order.
//! Round-trips are bit-exact.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::VaeParams;

const MAGIC: &[u8; 4] = b"QVAE";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload section.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    f: usize,
    l: usize,
    h: usize,
    tensors: Vec<TensorEntry>,
}

fn tensor_names() -> [&'static str; 10] {
    [
        "encoder.w1",
        "encoder.b1",
        "encoder.w_mu",
        "encoder.b_mu",
        "encoder.w_lv",
        "encoder.b_lv",
        "decoder.v1",
        "decoder.c1",
        "decoder.v_lv",
        "decoder.c_lv",
    ]
}

/// Expected shape of each named tensor given the declared dimensions.
fn expected_shapes(f: usize, l: usize, h: usize) -> [Vec<usize>; 10] {
    [
        vec![h, f],
        vec![h],
        vec![l, h],
        vec![l],
        vec![l, h],
        vec![l],
        vec![h, l],
        vec![h],
        vec![f, h],
        vec![f],
    ]
}

pub fn save_weights(p: &VaeParams, path: impl AsRef<Path>) -> Result<()> {
    p.validate()?;
    let (f, l, h) = (p.n_freqs(), p.latent_dim(), p.hidden_dim());
    let slices = p.tensors();
    let names = tensor_names();
    let shapes = expected_shapes(f, l, h);

    let mut tensors = Vec::with_capacity(10);
    let mut offset = 0usize;
    for i in 0..10 {
        tensors.push(TensorEntry {
            name: names[i].to_string(),
            shape: shapes[i].clone(),
            offset,
        });
        offset += slices[i].len() * 8;
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        f,
        l,
        h,
        tensors,
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| Error::format(format!("header encode: {e}")))?;

    let mut out = Vec::with_capacity(12 + header_bytes.len() + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for s in slices {
        for &x in s {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_tensor(payload: &[u8], entry: &TensorEntry) -> Result<Vec<f64>> {
    let count: usize = entry.shape.iter().product();
    let end = entry
        .offset
        .checked_add(count * 8)
        .ok_or_else(|| Error::format("tensor offset overflow"))?;
    if end > payload.len() {
        return Err(Error::format(format!(
            "truncated payload: tensor {} needs bytes {}..{} of {}",
            entry.name,
            entry.offset,
            end,
            payload.len()
        )));
    }
    Ok(payload[entry.offset..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<VaeParams> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(Error::format("not a weight file (bad magic)"));
    }
    let header_len = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    if 12 + header_len > bytes.len() {
        return Err(Error::format("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[12..12 + header_len])
        .map_err(|e| Error::format(format!("header decode: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported format version {}",
            header.format_version
        )));
    }
    let payload = &bytes[12 + header_len..];

    let names = tensor_names();
    let shapes = expected_shapes(header.f, header.l, header.h);
    let mut data: Vec<Vec<f64>> = Vec::with_capacity(10);
    for i in 0..10 {
        let entry = header
            .tensors
            .iter()
            .find(|t| t.name == names[i])
            .ok_or_else(|| Error::format(format!("missing tensor {}", names[i])))?;
        if entry.shape != shapes[i] {
            return Err(Error::format(format!(
                "tensor {} has shape {:?}, dims (F={}, L={}, H={}) imply {:?}",
                names[i], entry.shape, header.f, header.l, header.h, shapes[i]
            )));
        }
        data.push(read_tensor(payload, entry)?);
    }
    if header.tensors.len() != 10 {
        return Err(Error::format(format!(
            "expected 10 tensors, header lists {}",
            header.tensors.len()
        )));
    }

    let (f, l, h) = (header.f, header.l, header.h);
    let arr2 = |v: Vec<f64>, r: usize, c: usize| {
        Array2::from_shape_vec((r, c), v).expect("shape checked against header")
    };
    let params = VaeParams {
        w1: arr2(data[0].clone(), h, f),
        b1: Array1::from_vec(data[1].clone()),
        w_mu: arr2(data[2].clone(), l, h),
        b_mu: Array1::from_vec(data[3].clone()),
        w_lv: arr2(data[4].clone(), l, h),
        b_lv: Array1::from_vec(data[5].clone()),
        v1: arr2(data[6].clone(), h, l),
        c1: Array1::from_vec(data[7].clone()),
        v_lv: arr2(data[8].clone(), f, h),
        c_lv: Array1::from_vec(data[9].clone()),
    };
    params.validate()?;
    Ok(params)
}
