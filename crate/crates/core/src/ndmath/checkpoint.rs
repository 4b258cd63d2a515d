//! Flat binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "NDRL" | version: u32
//! repeated until EOF:
//!   name_len: u16 | name: utf-8 bytes | rank: u8 | dims: u32 * rank | payload: f64 * prod(dims)
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NDRL";
pub const VERSION: u32 = 1;

pub fn write_checkpoint<T: Scalar, W: Write>(
    mut w: W,
    tensors: &[(String, Tensor<T>)],
) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    for (name, t) in tensors {
        let bytes = name.as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| Error::Checkpoint(format!("tensor name too long: {name}")))?;
        let rank = u8::try_from(t.rank())
            .map_err(|_| Error::Checkpoint(format!("rank too large for `{name}`")))?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(bytes)?;
        w.write_all(&[rank])?;
        for &d in t.shape() {
            let d = u32::try_from(d)
                .map_err(|_| Error::Checkpoint(format!("dimension too large in `{name}`")))?;
            w.write_all(&d.to_le_bytes())?;
        }
        for &x in t.data() {
            w.write_all(&x.as_f64().to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or_eof<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            if filled == 0 {
                return Ok(false);
            }
            return Err(Error::Checkpoint("truncated record".into()));
        }
        filled += n;
    }
    Ok(true)
}

fn read_bytes<R: Read>(r: &mut R, n: usize) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("truncated record".into()))?;
    Ok(buf)
}

pub fn read_checkpoint<T: Scalar, R: Read>(mut r: R) -> Result<Vec<(String, Tensor<T>)>> {
    let header = read_bytes(&mut r, 8)
        .map_err(|_| Error::Checkpoint("file shorter than header".into()))?;
    if &header[..4] != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    loop {
        let mut len = [0u8; 2];
        if !read_exact_or_eof(&mut r, &mut len)? {
            break;
        }
        let name = String::from_utf8(read_bytes(&mut r, u16::from_le_bytes(len) as usize)?)
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?;
        let rank = read_bytes(&mut r, 1)?[0] as usize;
        let dims = read_bytes(&mut r, 4 * rank)?
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect::<Vec<_>>();
        let n: usize = dims.iter().product();
        let data = read_bytes(&mut r, 8 * n)?
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        out.push((name, Tensor::new(dims, data)?));
    }
    Ok(out)
}

pub fn save<T: Scalar>(path: &Path, tensors: &[(String, Tensor<T>)]) -> Result<()> {
    let f = std::fs::File::create(path)?;
    write_checkpoint(std::io::BufWriter::new(f), tensors)
}

pub fn load<T: Scalar>(path: &Path) -> Result<Vec<(String, Tensor<T>)>> {
    let f = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(f))
}

pub fn into_map<T>(tensors: Vec<(String, Tensor<T>)>) -> HashMap<String, Tensor<T>> {
    tensors.into_iter().collect()
}
