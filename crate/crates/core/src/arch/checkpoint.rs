//! Binary checkpoint format.
//!
//! ```text
//! "CRNK"            magic
//! u32               format version (1)
//! u32               canonical entry count
//! per entry:
//!   u16 + bytes     UTF-8 name
//!   u8              dtype code (0 = f32)
//!   u8              rank
//!   u32 * rank      dims
//!   f32 * numel     payload
//! u32               alias count
//! per alias:
//!   u16 + bytes     alias name
//!   u16 + bytes     canonical name
//! ```
//!
//! All integers and floats are little-endian. Trailing unit dimensions are
//! dropped on write (a bias `(C, 1, 1, 1)` is stored with rank 1) and
//! restored on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::ParamStore;
use super::spec::{NetworkSpec, UnitKind, Variant, SUPPORTED_SCALES};
use crate::tensor::{Real, Shape, Tensor};
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CRNK";
pub const VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;

fn write_name<W: Write>(w: &mut W, name: &str) -> Result<()> {
    let len = u16::try_from(name.len())
        .map_err(|_| Error::Checkpoint(format!("name too long: {name}")))?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    Ok(())
}

pub fn write<T: Real, W: Write>(store: &ParamStore<T>, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(store.len() as u32).to_le_bytes())?;
    for (name, t) in store.iter() {
        write_name(&mut w, name)?;
        w.write_all(&[DTYPE_F32])?;
        let dims = t.shape().dims();
        let mut rank = 4;
        while rank > 1 && dims[rank - 1] == 1 {
            rank -= 1;
        }
        w.write_all(&[rank as u8])?;
        for d in &dims[..rank] {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(t.numel() * 4);
        for v in t.data() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    let aliases: Vec<_> = store.aliases().collect();
    w.write_all(&(aliases.len() as u32).to_le_bytes())?;
    for (alias, canonical) in aliases {
        write_name(&mut w, alias)?;
        write_name(&mut w, canonical)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_name<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u16(r)? as usize;
    let mut b = vec![0u8; len];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| Error::Checkpoint("name is not UTF-8".into()))
}

pub fn read<T: Real, R: Read>(mut r: R) -> Result<ParamStore<T>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name = read_name(&mut r)?;
        let dtype = read_u8(&mut r)?;
        if dtype != DTYPE_F32 {
            return Err(Error::Checkpoint(format!(
                "`{name}`: unknown dtype code {dtype}"
            )));
        }
        let rank = read_u8(&mut r)? as usize;
        if !(1..=4).contains(&rank) {
            return Err(Error::Checkpoint(format!(
                "`{name}`: unsupported rank {rank}"
            )));
        }
        let mut dims = [1usize; 4];
        for d in dims.iter_mut().take(rank) {
            *d = read_u32(&mut r)? as usize;
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let mut buf = vec![0u8; shape.numel() * 4];
        r.read_exact(&mut buf)?;
        let data = buf
            .chunks_exact(4)
            .map(|b| T::from_f64(f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64))
            .collect();
        store.insert(name, Tensor::from_vec(shape, data)?);
    }
    let n_alias = read_u32(&mut r)?;
    for _ in 0..n_alias {
        let alias = read_name(&mut r)?;
        let canonical = read_name(&mut r)?;
        store.alias(alias, canonical)?;
    }
    Ok(store)
}

pub fn save<T: Real>(store: &ParamStore<T>, path: impl AsRef<Path>) -> Result<()> {
    write(store, BufWriter::new(File::create(path)?))
}

pub fn load<T: Real>(path: impl AsRef<Path>) -> Result<ParamStore<T>> {
    read(BufReader::new(File::open(path)?))
}

/// Reconstructs the network spec a store was built for from its entry names,
/// shapes and aliases.
pub fn infer_spec<T: Real>(store: &ParamStore<T>) -> Result<NetworkSpec> {
    let bad = |msg: &str| Error::Checkpoint(msg.to_string());
    let entry = store
        .get("entry.weight")
        .ok_or_else(|| bad("no `entry.weight`"))?;
    let channels = entry.shape().n;

    let mut names: Vec<&str> = store.iter().map(|(n, _)| n).collect();
    names.extend(store.aliases().map(|(a, _)| a));
    let count = |prefix: &dyn Fn(usize) -> String| {
        (1..)
            .take_while(|&i| names.iter().any(|n| n.starts_with(&prefix(i))))
            .count()
    };
    let blocks = count(&|b| format!("body.b{b}."));
    let units = count(&|u| format!("body.b1.u{u}."));
    if blocks == 0 || units == 0 {
        return Err(bad("no cascading blocks found"));
    }
    let unit = if store.contains("body.b1.u1.pw.weight") {
        UnitKind::Efficient
    } else {
        UnitKind::Residual
    };
    let conv1 = store
        .get("body.b1.u1.conv1.weight")
        .ok_or_else(|| bad("no `body.b1.u1.conv1.weight`"))?;
    let per_group = conv1.shape().c;
    if per_group == 0 || channels % per_group != 0 {
        return Err(bad("inconsistent group layout"));
    }
    let scales: Vec<u32> = SUPPORTED_SCALES
        .into_iter()
        .filter(|s| store.contains(&format!("head.x{s}.s1.weight")))
        .collect();

    let mut spec = NetworkSpec {
        variant: Variant::Custom,
        blocks,
        units_per_block: units,
        channels,
        group_size: channels / per_group,
        unit,
        recursive: blocks > 1
            && store.resolve("body.b2.u1.conv1.weight") != "body.b2.u1.conv1.weight",
        scales,
        local_cascading: store.contains("body.b1.fuse1.weight"),
        global_cascading: store.contains("body.fuse1.weight"),
    };
    for v in Variant::ALL.into_iter().filter(|v| *v != Variant::Custom) {
        let mut candidate = spec.clone();
        candidate.variant = v;
        if candidate.validate().is_ok() {
            spec.variant = v;
            break;
        }
    }
    spec.validate()?;
    Ok(spec)
}
