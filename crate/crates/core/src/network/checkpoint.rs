//! Binary checkpoints.
//!
//! Layout: 8-byte magic, 1 version byte, `u32` record count, then per record
//! a `u32`-length-prefixed UTF-8 name, a `u32` rank, `u64` dims and the
//! values as little-endian `f64`. All integers are little-endian.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Parameterized;
use crate::scalar::Scalar;

pub const MAGIC: [u8; 8] = *b"RESPROP\0";
pub const VERSION: u8 = 1;

/// Serializes every tensor of `model`, running statistics included.
pub fn write_checkpoint<T: Scalar>(model: &impl Parameterized<T>, out: &mut impl Write) -> Result<()> {
    let mut records: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
    model.visit(&mut |name, _, t| {
        records.push((name.to_string(), t.shape().to_vec(), t.data().iter().map(|v| v.as_f64()).collect()));
    });
    out.write_all(&MAGIC)?;
    out.write_all(&[VERSION])?;
    out.write_all(&len_u32(records.len())?.to_le_bytes())?;
    for (name, shape, data) in records {
        out.write_all(&len_u32(name.len())?.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&len_u32(shape.len())?.to_le_bytes())?;
        for d in shape {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        for v in data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Checkpoint(format!("length {n} exceeds u32")))
}

type Record = (Vec<usize>, Vec<f64>);

fn read_records(input: &mut impl Read) -> Result<Vec<(String, Record)>> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let mut version = [0u8; 1];
    input.read_exact(&mut version)?;
    if version[0] != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", version[0])));
    }
    let count = read_u32(input)?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = read_u32(input)? as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))?;
        let rank = read_u32(input)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            input.read_exact(&mut b).map_err(truncated)?;
            shape.push(usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Checkpoint("dimension overflow".into()))?);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflow")))?;
        let mut bytes = vec![0u8; numel.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?];
        input.read_exact(&mut bytes).map_err(truncated)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        out.push((name, (shape, data)));
    }
    Ok(out)
}

fn truncated(_: std::io::Error) -> Error {
    Error::Checkpoint("truncated record".into())
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

/// Overwrites every tensor of `model` from a checkpoint. Names and shapes
/// must match exactly, with no missing or extra records.
pub fn read_checkpoint<T: Scalar>(model: &mut impl Parameterized<T>, input: &mut impl Read) -> Result<()> {
    let mut records: HashMap<String, Record> = HashMap::new();
    for (name, rec) in read_records(input)? {
        if records.insert(name.clone(), rec).is_some() {
            return Err(Error::Checkpoint(format!("duplicate record {name}")));
        }
    }
    let mut problem: Option<String> = None;
    model.visit_mut(&mut |name, _, t| {
        if problem.is_some() {
            return;
        }
        match records.remove(name) {
            None => problem = Some(format!("missing record {name}")),
            Some((shape, _)) if shape != t.shape() => {
                problem = Some(format!("{name}: checkpoint shape {shape:?}, model shape {:?}", t.shape()));
            }
            Some((_, data)) => {
                for (dst, src) in t.data_mut().iter_mut().zip(data) {
                    *dst = T::from_f64_lossy(src);
                }
            }
        }
    });
    if let Some(p) = problem {
        return Err(Error::Checkpoint(p));
    }
    if let Some(extra) = records.keys().min() {
        return Err(Error::Checkpoint(format!("unexpected record {extra}")));
    }
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(model: &impl Parameterized<T>, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(model, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(model: &mut impl Parameterized<T>, path: &Path) -> Result<()> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(model, &mut file)
}
