//! The `VXGN` binary container shared by checkpoints and `.vxg` grid files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "VXGN" | version: u16 | metadata length: u32 | metadata (UTF-8 `key = value` lines)
//! block*: name length: u16 | name | dtype: u8 | rank: u8 | extents: u32 × rank | data
//! crc32 of every preceding byte: u32
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{numel, Tensor};

pub const MAGIC: &[u8; 4] = b"VXGN";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F64 = 1,
    F32 = 2,
}

impl DType {
    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(DType::F64),
            2 => Ok(DType::F32),
            t => Err(Error::Format(format!("unknown dtype tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub dtype: DType,
    pub tensor: Tensor,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Container {
    pub metadata: String,
    pub blocks: Vec<Block>,
}

impl Container {
    pub fn new(metadata: String) -> Self {
        Container {
            metadata,
            blocks: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.blocks.push(Block {
            name: name.into(),
            dtype: DType::F64,
            tensor,
        });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.blocks.iter().find(|b| b.name == name).map(|b| &b.tensor)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Format(format!("missing tensor block `{name}`")))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let meta = self.metadata.as_bytes();
        out.extend_from_slice(&u32::try_from(meta.len()).map_err(|_| Error::Format("metadata too long".into()))?.to_le_bytes());
        out.extend_from_slice(meta);
        for b in &self.blocks {
            let name = b.name.as_bytes();
            let len = u16::try_from(name.len()).map_err(|_| Error::Format(format!("block name too long: {}", b.name)))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(name);
            out.push(b.dtype as u8);
            let shape = b.tensor.shape();
            out.push(u8::try_from(shape.len()).map_err(|_| Error::Format("rank too large".into()))?);
            for &d in shape {
                let d = u32::try_from(d).map_err(|_| Error::Format("extent too large".into()))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            match b.dtype {
                DType::F64 => b.tensor.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
                DType::F32 => b
                    .tensor
                    .data()
                    .iter()
                    .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Container> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic: not a VXGN container".into()));
        }
        if bytes.len() < 4 + 2 + 4 + 4 {
            return Err(Error::Format("truncated container".into()));
        }
        let body_len = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
        let mut r = Reader {
            bytes: &bytes[..body_len],
            pos: 4,
        };
        let version = r.u16()?;
        if version != VERSION {
            return Err(Error::Version {
                found: version,
                expected: VERSION,
            });
        }
        if crc32fast::hash(&bytes[..body_len]) != stored {
            return Err(Error::Integrity("CRC32 mismatch".into()));
        }
        let meta_len = r.u32()? as usize;
        let metadata = String::from_utf8(r.take(meta_len)?.to_vec())
            .map_err(|_| Error::Format("metadata is not UTF-8".into()))?;
        let mut blocks = Vec::new();
        while r.pos < r.bytes.len() {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::Format("block name is not UTF-8".into()))?;
            let dtype = DType::from_tag(r.u8()?)?;
            let rank = r.u8()? as usize;
            let shape: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let n = numel(&shape);
            let data: Vec<f64> = match dtype {
                DType::F64 => r
                    .take(n * 8)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
                DType::F32 => r
                    .take(n * 4)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
            };
            let tensor = Tensor::new(shape, data).map_err(|e| Error::Format(format!("block `{name}`: {e}")))?;
            blocks.push(Block { name, dtype, tensor });
        }
        Ok(Container { metadata, blocks })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Container> {
        Container::decode(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("truncated container".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
