//! Versioned checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "VOCK"  u32 version  u32 config_len  config (UTF-8 JSON)
//! u32 block_count
//! block_count x { u16 name_len  name  u8 dtype (0 = f32, 1 = f64)
//!                 u8 ndim  ndim x u64 dim  payload }
//! ```
//!
//! Blocks are written in name order, so identical state encodes to
//! identical bytes.

use std::collections::BTreeMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};

use super::params::ParamStore;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VOCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const MAX_NDIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum BlockData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl BlockData {
    fn len(&self) -> usize {
        match self {
            BlockData::F32(v) => v.len(),
            BlockData::F64(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub dims: Vec<usize>,
    pub data: BlockData,
}

impl Block {
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let flat = t.flatten_all()?;
        let data = match t.dtype() {
            DType::F64 => BlockData::F64(flat.to_vec1()?),
            _ => BlockData::F32(flat.to_dtype(DType::F32)?.to_vec1()?),
        };
        Ok(Self {
            dims: t.dims().to_vec(),
            data,
        })
    }

    pub fn to_tensor(&self, dtype: DType, device: &Device) -> Result<Tensor> {
        let t = match &self.data {
            BlockData::F32(v) => Tensor::from_slice(v, self.dims.as_slice(), device)?,
            BlockData::F64(v) => Tensor::from_slice(v, self.dims.as_slice(), device)?,
        };
        Ok(t.to_dtype(dtype)?)
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            dims: vec![1],
            data: BlockData::F64(vec![value]),
        }
    }

    pub fn as_scalar(&self) -> Option<f64> {
        match &self.data {
            BlockData::F64(v) if v.len() == 1 => Some(v[0]),
            BlockData::F32(v) if v.len() == 1 => Some(v[0] as f64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    /// JSON echo of the configuration that produced the checkpoint.
    pub config: String,
    pub blocks: BTreeMap<String, Block>,
}

impl Checkpoint {
    pub fn new(config: String) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config,
            blocks: BTreeMap::new(),
        }
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&ck.version.to_le_bytes());
    out.extend_from_slice(&(ck.config.len() as u32).to_le_bytes());
    out.extend_from_slice(ck.config.as_bytes());
    out.extend_from_slice(&(ck.blocks.len() as u32).to_le_bytes());
    for (name, block) in &ck.blocks {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(match block.data {
            BlockData::F32(_) => 0,
            BlockData::F64(_) => 1,
        });
        out.push(block.dims.len() as u8);
        for d in &block.dims {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        match &block.data {
            BlockData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            BlockData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    source: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::parse(
                self.source,
                field,
                None,
                format!("needs {n} bytes at offset {}, file has {}", self.pos, self.bytes.len()),
            )),
        }
    }

    fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().expect("8 bytes")))
    }

    fn err(&self, field: &str, msg: impl Into<String>) -> Error {
        Error::parse(self.source, field, None, msg)
    }
}

pub fn decode_checkpoint(bytes: &[u8], source: &str) -> Result<Checkpoint> {
    let mut r = Reader {
        bytes,
        pos: 0,
        source,
    };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(r.err("magic", "not a checkpoint (expected \"VOCK\")"));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(r.err(
            "version",
            format!("unsupported format version {version} (supported: {CHECKPOINT_VERSION})"),
        ));
    }
    let config_len = r.u32("config_len")? as usize;
    let config = std::str::from_utf8(r.take(config_len, "config")?)
        .map_err(|e| r.err("config", e.to_string()))?
        .to_string();
    let count = r.u32("block_count")?;
    let mut blocks = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u16("block_name")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "block_name")?)
            .map_err(|e| r.err("block_name", e.to_string()))?
            .to_string();
        let dtype = r.u8("dtype")?;
        let ndim = r.u8("ndim")? as usize;
        if ndim > MAX_NDIM {
            return Err(r.err("ndim", format!("block {name} has {ndim} dimensions")));
        }
        let mut dims = Vec::with_capacity(ndim);
        let mut count: usize = 1;
        for _ in 0..ndim {
            let d = usize::try_from(r.u64("dims")?)
                .map_err(|_| r.err("dims", format!("block {name} dimension overflows")))?;
            count = count
                .checked_mul(d)
                .ok_or_else(|| r.err("dims", format!("block {name} size overflows")))?;
            dims.push(d);
        }
        let width = match dtype {
            0 => 4,
            1 => 8,
            other => return Err(r.err("dtype", format!("block {name} has unknown dtype {other}"))),
        };
        let len = count
            .checked_mul(width)
            .ok_or_else(|| r.err("dims", format!("block {name} size overflows")))?;
        let payload = r.take(len, "payload")?;
        let data = if width == 4 {
            BlockData::F32(
                payload
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            )
        } else {
            BlockData::F64(
                payload
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            )
        };
        if blocks.insert(name.clone(), Block { dims, data }).is_some() {
            return Err(r.err("block_name", format!("duplicate block {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(r.err("trailer", format!("{} unexpected trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        version,
        config,
        blocks,
    })
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    // Write-then-rename so an interrupted save never clobbers a good file.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode_checkpoint(ck)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, &path.display().to_string())
}

impl ParamStore {
    /// Parameters as `param/<name>` and buffers as `buffer/<name>`.
    pub fn export_blocks(&self) -> Result<BTreeMap<String, Block>> {
        let mut out = BTreeMap::new();
        for (name, var) in self.vars() {
            out.insert(format!("param/{name}"), Block::from_tensor(var.as_tensor())?);
        }
        for (name, var) in self.buffers() {
            out.insert(format!("buffer/{name}"), Block::from_tensor(var.as_tensor())?);
        }
        Ok(out)
    }

    /// Loads every parameter and buffer from `blocks`, which must hold
    /// exactly this store's tensors with matching shapes.
    pub fn import_blocks(&self, blocks: &BTreeMap<String, Block>) -> Result<()> {
        let entries = self
            .vars()
            .iter()
            .map(|(n, v)| (format!("param/{n}"), v))
            .chain(self.buffers().iter().map(|(n, v)| (format!("buffer/{n}"), v)));
        let mut expected = 0;
        for (key, var) in entries {
            expected += 1;
            let block = blocks
                .get(&key)
                .ok_or_else(|| Error::Config(format!("checkpoint is missing {key}")))?;
            if block.dims != var.dims() || block.data.len() != var.as_tensor().elem_count() {
                return Err(Error::Shape(format!(
                    "{key}: checkpoint shape {:?}, model shape {:?}",
                    block.dims,
                    var.dims()
                )));
            }
            var.set(&block.to_tensor(self.dtype(), self.device())?)?;
        }
        let present = blocks
            .keys()
            .filter(|k| k.starts_with("param/") || k.starts_with("buffer/"))
            .count();
        if present != expected {
            return Err(Error::Config(format!(
                "checkpoint holds {present} model tensors, architecture defines {expected}"
            )));
        }
        Ok(())
    }
}
