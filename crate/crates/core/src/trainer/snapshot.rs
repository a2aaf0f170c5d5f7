//! Captured parameter vectors and their on-disk encoding.
//!
//! File layout, all integers and floats little-endian:
//!
//! | bytes | field |
//! |---|---|
//! | 8 | magic `SNAPCLS\0` |
//! | 4 | format version (`1`) |
//! | 4 | input width |
//! | 4 | layer count `n` |
//! | 8·n | per layer: output width (u32), activation tag (u32: 0 identity, 1 relu) |
//! | 4 | epoch |
//! | 8 | run seed |
//! | 8 | training loss at capture (f64) |
//! | 8 | parameter count `p` |
//! | 8·p | parameters (f64) |

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::model::{Activation, LayerShape, ModelShape};

pub const MAGIC: &[u8; 8] = b"SNAPCLS\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: u32,
    pub params: Vec<f64>,
    pub train_loss: f64,
}

/// A snapshot together with the metadata stored in its file header.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotFile {
    pub shape: ModelShape,
    pub seed: u64,
    pub snapshot: Snapshot,
}

pub fn encode(shape: &ModelShape, seed: u64, snap: &Snapshot) -> Result<Vec<u8>> {
    if snap.params.len() != shape.num_params() {
        return Err(Error::invalid(format!(
            "snapshot has {} parameters, shape needs {}",
            snap.params.len(),
            shape.num_params()
        )));
    }
    let u32_of = |v: usize| u32::try_from(v).map_err(|_| Error::invalid("dimension exceeds u32"));
    let mut out = Vec::with_capacity(48 + 8 * shape.layers.len() + 8 * snap.params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&u32_of(shape.inputs)?.to_le_bytes());
    out.extend_from_slice(&u32_of(shape.layers.len())?.to_le_bytes());
    for l in &shape.layers {
        out.extend_from_slice(&u32_of(l.outputs)?.to_le_bytes());
        out.extend_from_slice(&l.activation.tag().to_le_bytes());
    }
    out.extend_from_slice(&snap.epoch.to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    out.extend_from_slice(&snap.train_loss.to_le_bytes());
    out.extend_from_slice(&(snap.params.len() as u64).to_le_bytes());
    for p in &snap.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::invalid("snapshot file is truncated"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(buf: &[u8]) -> Result<SnapshotFile> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::invalid("not a snapshot file (bad magic)"));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::invalid(format!("unsupported snapshot version {version}")));
    }
    let inputs = r.u32()? as usize;
    let n_layers = r.u32()? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(Error::invalid(format!("implausible layer count {n_layers}")));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let outputs = r.u32()? as usize;
        let tag = r.u32()?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| Error::invalid(format!("unknown activation tag {tag}")))?;
        layers.push(LayerShape { outputs, activation });
    }
    let shape = ModelShape { inputs, layers };
    shape.validate()?;
    let epoch = r.u32()?;
    let seed = r.u64()?;
    let train_loss = r.f64()?;
    let count = r.u64()? as usize;
    if count != shape.num_params() {
        return Err(Error::invalid(format!(
            "header declares {count} parameters, shape needs {}",
            shape.num_params()
        )));
    }
    let params = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if r.pos != buf.len() {
        return Err(Error::invalid("trailing bytes after snapshot parameters"));
    }
    Ok(SnapshotFile {
        shape,
        seed,
        snapshot: Snapshot {
            epoch,
            params,
            train_loss,
        },
    })
}

pub fn write(path: impl AsRef<Path>, shape: &ModelShape, seed: u64, snap: &Snapshot) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(shape, seed, snap)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<SnapshotFile> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf).map_err(|e| match e {
        Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", path.display())),
        other => other,
    })
}
