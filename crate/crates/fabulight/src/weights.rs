//! Binary weight files.
//!
//! All integers little-endian:
//!
//! ```text
//! magic      b"FBLW"
//! version    u16 (1)
//! mode       u8  0 = fabulight, 1 = lightasd
//! body       u8  0 = none, 1 = whole, 2 = upper
//! face_size  u32
//! arch_hash  u64 FNV-1a of the architecture descriptor
//! count      u32
//! count × entry:
//!   name_len u16, name (UTF-8, dotted path such as face.blocks.0.path3.conv1.weight)
//!   dtype    u8  1 = f32
//!   kind     u8  0 = learnable, 1 = buffer (batch-norm running statistics)
//!   ndim     u8, dims u32 × ndim
//!   values   f32 × prod(dims)
//! ```
//!
//! Graph-convolution kernels produce `K · C` channels in r-major order, and
//! each body path stores its own `[K, V, V]` adjacency.

use std::path::Path;

use fabulight_core::loss::Mode;
use fabulight_core::model::{Architecture, Model};
use fabulight_core::params::ParamKind;
use fabulight_core::skeleton::BodyVariant;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FBLW";
pub const VERSION: u16 = 1;
const DTYPE_F32: u8 = 1;

fn body_code(body: Option<BodyVariant>) -> u8 {
    match body {
        None => 0,
        Some(BodyVariant::Whole) => 1,
        Some(BodyVariant::Upper) => 2,
    }
}

pub fn encode(model: &Model<f32>) -> Vec<u8> {
    let arch = &model.arch;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(match arch.mode() {
        Mode::FabuLight => 0,
        Mode::LightAsd => 1,
    });
    out.push(body_code(arch.body));
    out.extend_from_slice(&(arch.face_size as u32).to_le_bytes());
    out.extend_from_slice(&arch.hash().to_le_bytes());
    out.extend_from_slice(&(model.store.len() as u32).to_le_bytes());
    for (_, p) in model.store.iter() {
        out.extend_from_slice(&(p.name.len() as u16).to_le_bytes());
        out.extend_from_slice(p.name.as_bytes());
        out.push(DTYPE_F32);
        out.push(match p.kind {
            ParamKind::Learnable => 0,
            ParamKind::Buffer => 1,
        });
        out.push(p.tensor.shape().len() as u8);
        for &d in p.tensor.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in p.tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_weights(path: &Path, model: &Model<f32>) -> Result<()> {
    std::fs::write(path, encode(model)).map_err(Error::io(path))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(format!("truncated at byte {} (needed {n} more)", self.pos));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// The architecture a weight file was saved from, read from its header.
pub fn read_architecture(path: &Path) -> Result<Architecture> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    header(&bytes).map_err(|m| Error::weights(path, m))
}

fn header(bytes: &[u8]) -> std::result::Result<Architecture, String> {
    let mut c = Cursor { bytes, pos: 0 };
    parse_header(&mut c)
}

fn parse_header(c: &mut Cursor<'_>) -> std::result::Result<Architecture, String> {
    if c.take(4)? != MAGIC {
        return Err("bad magic bytes (not a weight file)".into());
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(format!("unknown format version {version}"));
    }
    let mode = c.u8()?;
    let body = match c.u8()? {
        0 => None,
        1 => Some(BodyVariant::Whole),
        2 => Some(BodyVariant::Upper),
        b => return Err(format!("unknown body code {b}")),
    };
    let arch = Architecture {
        face_size: c.u32()? as usize,
        body,
    };
    let expected_mode = match arch.mode() {
        Mode::FabuLight => 0,
        Mode::LightAsd => 1,
    };
    if mode != expected_mode {
        return Err(format!("mode byte {mode} contradicts the body code"));
    }
    let hash = c.u64()?;
    if hash != arch.hash() {
        return Err(format!(
            "architecture hash {hash:016x} does not match the header fields ({:016x})",
            arch.hash()
        ));
    }
    Ok(arch)
}

/// Loads a model, rejecting files saved from a different architecture
/// than `expected` when one is given.
pub fn load_weights(path: &Path, expected: Option<&Architecture>) -> Result<Model<f32>> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    decode(&bytes, expected).map_err(|m| Error::weights(path, m))
}

pub fn decode(bytes: &[u8], expected: Option<&Architecture>) -> std::result::Result<Model<f32>, String> {
    let mut c = Cursor { bytes, pos: 0 };
    let arch = parse_header(&mut c)?;
    if let Some(want) = expected {
        if want.hash() != arch.hash() {
            return Err(format!(
                "architecture hash mismatch: file holds {} but {} was requested",
                arch.descriptor(),
                want.descriptor()
            ));
        }
    }
    let mut model = Model::<f32>::new(arch, 0).map_err(|e| e.to_string())?;
    let count = c.u32()? as usize;
    if count != model.store.len() {
        return Err(format!("{count} entries, the architecture has {}", model.store.len()));
    }
    let mut seen = vec![false; count];
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(len)?).map_err(|e| format!("entry name: {e}"))?.to_string();
        let dtype = c.u8()?;
        if dtype != DTYPE_F32 {
            return Err(format!("{name}: unknown dtype {dtype}"));
        }
        let kind = match c.u8()? {
            0 => ParamKind::Learnable,
            1 => ParamKind::Buffer,
            k => return Err(format!("{name}: unknown kind {k}")),
        };
        let ndim = c.u8()? as usize;
        let shape = (0..ndim).map(|_| c.u32().map(|d| d as usize)).collect::<std::result::Result<Vec<_>, _>>()?;
        let Some(id) = model.store.id(&name) else {
            return Err(format!("unexpected entry {name}"));
        };
        if seen[id.0] {
            return Err(format!("duplicate entry {name}"));
        }
        seen[id.0] = true;
        let p = model.store.get(id);
        if p.tensor.shape() != shape.as_slice() || p.kind != kind {
            return Err(format!(
                "{name}: stored as {kind:?} {shape:?}, the architecture needs {:?} {:?}",
                p.kind,
                p.tensor.shape()
            ));
        }
        let n: usize = shape.iter().product();
        let raw = c.take(n.checked_mul(4).ok_or("entry size overflows")?)?;
        for (dst, src) in model.store.tensor_mut(id).data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *dst = f32::from_le_bytes(src.try_into().expect("4 bytes"));
        }
    }
    if c.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - c.pos));
    }
    Ok(model)
}
