//! Weights container.
//!
//! Layout, little-endian:
//! ```text
//! magic   "DTCW"
//! version u32
//! count   u32
//! count x { name_len u32, name utf-8, dtype u8 (1 = f32, 2 = f64),
//!           ndim u32, dims u64 x ndim, data row-major }
//! ```
//! Parameters are written as f64 so a save/load round trip is bit-exact;
//! f32 entries are accepted on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::network::{NetShape, PolicyParams};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"DTCW";
pub const WEIGHTS_VERSION: u32 = 1;

const DTYPE_F32: u8 = 1;
const DTYPE_F64: u8 = 2;

fn werr(e: std::io::Error) -> Error {
    Error::io("<weights>", e)
}

pub fn write_weights<W: Write>(params: &PolicyParams, mut w: W) -> Result<()> {
    let tensors = params.shape().tensors();
    w.write_all(WEIGHTS_MAGIC).map_err(werr)?;
    w.write_all(&WEIGHTS_VERSION.to_le_bytes()).map_err(werr)?;
    w.write_all(&(tensors.len() as u32).to_le_bytes()).map_err(werr)?;
    for (k, (name, r, c)) in tensors.iter().enumerate() {
        w.write_all(&(name.len() as u32).to_le_bytes()).map_err(werr)?;
        w.write_all(name.as_bytes()).map_err(werr)?;
        w.write_all(&[DTYPE_F64]).map_err(werr)?;
        w.write_all(&2u32.to_le_bytes()).map_err(werr)?;
        w.write_all(&(*r as u64).to_le_bytes()).map_err(werr)?;
        w.write_all(&(*c as u64).to_le_bytes()).map_err(werr)?;
        for x in params.slice(k) {
            w.write_all(&x.to_le_bytes()).map_err(werr)?;
        }
    }
    w.flush().map_err(werr)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("weights truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_weights<R: Read>(mut r: R) -> Result<PolicyParams> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(werr)?;
    let mut cur = Cursor { buf: &buf, pos: 0 };
    if cur.take(4)? != WEIGHTS_MAGIC {
        return Err(Error::Checkpoint("not a weights file".into()));
    }
    let version = cur.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::Checkpoint(format!(
            "weights format version {version}, expected {WEIGHTS_VERSION}"
        )));
    }
    let count = cur.u32()? as usize;
    let mut entries: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let nlen = cur.u32()? as usize;
        let name = String::from_utf8(cur.take(nlen)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
        let dtype = cur.take(1)?[0];
        let ndim = cur.u32()? as usize;
        if ndim > 8 {
            return Err(Error::Checkpoint(format!("tensor {name} has {ndim} dimensions")));
        }
        let dims: Vec<usize> = (0..ndim).map(|_| cur.u64().map(|d| d as usize)).collect::<Result<_>>()?;
        let n: usize = dims.iter().product();
        let data = match dtype {
            DTYPE_F64 => cur
                .take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect(),
            DTYPE_F32 => cur
                .take(n.checked_mul(4).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect(),
            other => return Err(Error::Checkpoint(format!("unknown dtype {other} for {name}"))),
        };
        entries.push((name, dims, data));
    }
    if cur.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes after weights".into()));
    }
    let find = |name: &str| entries.iter().find(|e| e.0 == name);
    let (Some(e1), Some(act)) = (find("embed1.weight"), find("actor.weight")) else {
        return Err(Error::Checkpoint("weights lack embed1/actor tensors".into()));
    };
    if e1.1.len() != 2 || act.1.len() != 2 {
        return Err(Error::Checkpoint("weight tensors must be 2-D".into()));
    }
    let shape = NetShape {
        input: e1.1[0],
        hidden: e1.1[1],
        actions: act.1[1],
    };
    let mut params = PolicyParams::zeros(shape);
    for (k, (name, r, c)) in shape.tensors().into_iter().enumerate() {
        let e = find(name).ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        let n: usize = e.1.iter().product();
        if n != r * c || (e.1.len() == 2 && (e.1[0], e.1[1]) != (r, c)) {
            return Err(Error::Checkpoint(format!("tensor {name} has shape {:?}, expected [{r}, {c}]", e.1)));
        }
        params.slice_mut(k).copy_from_slice(&e.2);
    }
    Ok(params)
}

pub fn save_weights(params: &PolicyParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_weights(params, BufWriter::new(f))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<PolicyParams> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_weights(BufReader::new(f))
}
