//! Self-describing binary container for model persistence: an 8-byte magic
//! tag, a JSON header (architecture/config), then raw shape-prefixed f64
//! tensors. `load(save(x)) == x` bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::tensor::Tensor;

pub fn save_container(
    path: impl AsRef<Path>,
    magic: &[u8; 8],
    header_json: &str,
    tensors: &[&Tensor],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    out.write_all(magic)?;
    let header = header_json.as_bytes();
    out.write_all(&(header.len() as u32).to_le_bytes())?;
    out.write_all(header)?;
    out.write_all(&(tensors.len() as u32).to_le_bytes())?;
    for t in tensors {
        out.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &d in &t.shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &t.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_container(path: impl AsRef<Path>, magic: &[u8; 8]) -> Result<(String, Vec<Tensor>)> {
    let mut r = BufReader::new(File::open(path.as_ref())?);
    let mut tag = [0u8; 8];
    r.read_exact(&mut tag)?;
    if &tag != magic {
        return Err(Error::Format(format!(
            "container magic {:?} does not match expected {:?}",
            String::from_utf8_lossy(&tag),
            String::from_utf8_lossy(magic)
        )));
    }
    let header_len = read_u32(&mut r)? as usize;
    let mut header = vec![0u8; header_len];
    r.read_exact(&mut header)?;
    let header = String::from_utf8(header).map_err(|_| Error::Format("header not UTF-8".into()))?;
    let count = read_u32(&mut r)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut b = [0u8; 8];
        for _ in 0..numel {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        tensors.push(Tensor::new(shape, data)?);
    }
    Ok((header, tensors))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
