//! Flat binary persistence for named arrays.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   b"STDD"
//! version u32            (currently 1)
//! count   u32            number of named arrays
//! per array:
//!   name_len u32, name UTF-8 bytes
//!   rank     u32
//!   extents  rank x u64
//!   payload  row-major f32, product(extents) values
//! ```
//!
//! Payloads are always 32-bit floats on disk; values are widened or
//! narrowed to [`Real`] in memory. Insertion order is preserved.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use indexmap::IndexMap;

use super::{Array, Real};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"STDD";
const VERSION: u32 = 1;

pub fn save_arrays(path: &Path, arrays: &IndexMap<String, Array>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(arrays.len() as u32).to_le_bytes())?;
    for (name, arr) in arrays {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(arr.shape().len() as u32).to_le_bytes())?;
        for &e in arr.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in arr.data() {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn load_arrays(path: &Path) -> Result<IndexMap<String, Array>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::parse(format!(
            "{}: bad magic {magic:?}",
            path.display()
        )));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::parse(format!(
            "{}: unsupported format version {version}",
            path.display()
        )));
    }
    let count = read_u32(&mut r)?;
    let mut out = IndexMap::new();
    for _ in 0..count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_bytes = vec![0u8; name_len];
        r.read_exact(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|e| Error::parse(format!("{}: array name: {e}", path.display())))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut b = [0u8; 4];
        for _ in 0..numel {
            r.read_exact(&mut b)?;
            data.push(f32::from_le_bytes(b) as Real);
        }
        if out.insert(name.clone(), Array::new(shape, data)?).is_some() {
            return Err(Error::parse(format!(
                "{}: duplicate array name {name:?}",
                path.display()
            )));
        }
    }
    Ok(out)
}
