//! Checkpoint files.
//!
//! Layout: the 8-byte magic `MELCKPT1`, a little-endian `u64` header length,
//! a JSON header `{"meta": .., "params": [{"name", "shape", "offset"}]}`, then
//! every parameter as raw little-endian `f32` in header order. `offset` counts
//! floats from the start of the data section.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::params::ParamSet;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"MELCKPT1";

#[derive(Serialize, Deserialize)]
struct Record {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    params: Vec<Record>,
}

pub fn write_to<W: Write>(mut w: W, params: &ParamSet, meta: &serde_json::Value) -> Result<()> {
    let mut offset = 0;
    let mut records = Vec::with_capacity(params.len());
    for (name, t) in params.iter() {
        records.push(Record { name: name.to_string(), shape: t.shape().to_vec(), offset });
        offset += t.len();
    }
    let header = serde_json::to_vec(&Header { meta: meta.clone(), params: records })?;
    w.write_all(MAGIC)?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    for (_, t) in params.iter() {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_from<R: Read>(mut r: R) -> Result<(ParamSet, serde_json::Value)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 28 {
        return Err(NnError::Checkpoint(format!("header length {len} is implausible")));
    }
    let mut header = vec![0u8; len];
    r.read_exact(&mut header)?;
    let header: Header = serde_json::from_slice(&header)?;
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() % 4 != 0 {
        return Err(NnError::Checkpoint("data section is not a whole number of floats".into()));
    }
    let floats: Vec<f32> =
        data.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let mut params = ParamSet::new();
    for rec in header.params {
        let n: usize = rec.shape.iter().product();
        let end = rec.offset.checked_add(n).filter(|&e| e <= floats.len()).ok_or_else(|| {
            NnError::Checkpoint(format!("record {} runs past the data section", rec.name))
        })?;
        if params.find(&rec.name).is_some() {
            return Err(NnError::Checkpoint(format!("duplicate record {}", rec.name)));
        }
        let t = Tensor::from_vec(&rec.shape, floats[rec.offset..end].to_vec())?;
        params.add(rec.name, t);
    }
    Ok((params, header.meta))
}

pub fn save(path: impl AsRef<Path>, params: &ParamSet, meta: &serde_json::Value) -> Result<()> {
    write_to(BufWriter::new(File::create(path)?), params, meta)
}

pub fn load(path: impl AsRef<Path>) -> Result<(ParamSet, serde_json::Value)> {
    read_from(BufReader::new(File::open(path)?))
}

/// Loads values into `target`, requiring identical names and shapes.
pub fn load_into(path: impl AsRef<Path>, target: &mut ParamSet) -> Result<serde_json::Value> {
    let (loaded, meta) = load(path)?;
    target.copy_from(&loaded)?;
    Ok(meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("a.weight", Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-8, -0.0]).unwrap());
        ps.add("a.bias", Tensor::from_vec(&[3], vec![f32::MAX, f32::MIN_POSITIVE, 7.0]).unwrap());
        ps
    }

    #[test]
    fn round_trip_is_exact() {
        let ps = sample();
        let meta = serde_json::json!({"depth": 2});
        let mut buf = Vec::new();
        write_to(&mut buf, &ps, &meta).unwrap();
        let (back, m) = read_from(&buf[..]).unwrap();
        assert_eq!(back, ps);
        assert_eq!(m, meta);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let mut buf = Vec::new();
        write_to(&mut buf, &sample(), &serde_json::Value::Null).unwrap();
        assert!(read_from(&buf[..buf.len() - 4]).is_err());
        buf[0] = b'X';
        assert!(read_from(&buf[..]).is_err());
    }

    #[test]
    fn load_into_validates_shapes() {
        let dir = std::env::temp_dir().join(format!("melclean-ckpt-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("x.ckpt");
        save(&path, &sample(), &serde_json::Value::Null).unwrap();
        let mut other = ParamSet::new();
        other.add("a.weight", Tensor::zeros(&[3, 2]));
        other.add("a.bias", Tensor::zeros(&[3]));
        assert!(load_into(&path, &mut other).is_err());
        let mut same = sample();
        same.get_mut(same.find("a.bias").unwrap()).data_mut().fill(0.0);
        load_into(&path, &mut same).unwrap();
        assert_eq!(same, sample());
        std::fs::remove_dir_all(dir).ok();
    }
}
