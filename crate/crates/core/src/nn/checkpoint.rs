//! Binary model checkpoints.
//!
//! Layout (little-endian): the 8-byte magic `AFCKPT01`, a `u64` length and
//! that many bytes of JSON [`NetworkSpec`], a `u32` parameter count, then per
//! parameter a `u32` rank, `rank` `u64` dimensions and the `f32` values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::model::Model;
use super::spec::NetworkSpec;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

const MAGIC: &[u8; 8] = b"AFCKPT01";

pub fn write_checkpoint<W: Write>(model: &Model<f32>, mut out: W) -> std::io::Result<()> {
    let spec = serde_json::to_vec(model.spec()).map_err(std::io::Error::other)?;
    out.write_all(MAGIC)?;
    out.write_all(&(spec.len() as u64).to_le_bytes())?;
    out.write_all(&spec)?;
    out.write_all(&(model.params().len() as u32).to_le_bytes())?;
    for p in model.params() {
        out.write_all(&(p.shape().len() as u32).to_le_bytes())?;
        for &d in p.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in p.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Model<f32>> {
    let bad = |m: &str| Error::Format(format!("checkpoint: {m}"));
    let mut buf = Vec::new();
    input
        .read_to_end(&mut buf)
        .map_err(|e| Error::Format(format!("checkpoint: {e}")))?;
    let mut cur = &buf[..];
    let mut take = |n: usize| -> Result<&[u8]> {
        if cur.len() < n {
            return Err(bad("truncated"));
        }
        let (head, rest) = cur.split_at(n);
        cur = rest;
        Ok(head)
    };
    if take(8)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let spec_len = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let spec: NetworkSpec = serde_json::from_slice(take(spec_len)?)?;
    let mut model = Model::<f32>::new(spec, &mut rng_from_seed(0))?;
    let count = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    if count != model.params().len() {
        return Err(bad("parameter count does not match the network"));
    }
    for i in 0..count {
        let rank = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize);
        }
        if shape != model.params()[i].shape() {
            return Err(bad(&format!("parameter {i} has shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        let data = take(4 * n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        model.params_mut()[i] = Tensor::new(shape, data)?;
    }
    if !cur.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model<f32>, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    write_checkpoint(model, &mut bytes).map_err(|e| Error::io(path, e))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
