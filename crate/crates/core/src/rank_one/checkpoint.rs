//! Flat little-endian checkpoint container.
//!
//! ```text
//! magic      [u8; 4]      "R1MQ" (critic) or "R1PI" (policy)
//! version    u32
//! n_dims     u32
//! dims       u32 × n_dims
//! members    u32
//! params     f64 × rest   layer by layer: W row-major, v₁…v_K, s₁…s_K, b₁…b_K
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

use super::network::{init_network, MimoQNetwork};

pub const CRITIC_MAGIC: [u8; 4] = *b"R1MQ";
pub const POLICY_MAGIC: [u8; 4] = *b"R1PI";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    pub dims: Vec<usize>,
    pub members: usize,
    pub params: Vec<f64>,
}

impl Container {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.dims.len() + 8 * self.params.len());
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(self.members as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], expected_magic: [u8; 4]) -> Result<Self> {
        let mut cursor = Cursor { bytes, pos: 0 };
        let magic: [u8; 4] = cursor.take(4)?.try_into().expect("4 bytes");
        if magic != expected_magic {
            return Err(Error::Checkpoint(format!(
                "magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                String::from_utf8_lossy(&expected_magic)
            )));
        }
        let version = cursor.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let n_dims = cursor.u32()? as usize;
        let dims = (0..n_dims)
            .map(|_| cursor.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let members = cursor.u32()? as usize;
        let rest = &bytes[cursor.pos..];
        if !rest.len().is_multiple_of(8) {
            return Err(Error::Checkpoint(format!(
                "parameter section of {} bytes is not a whole number of f64s",
                rest.len()
            )));
        }
        let params = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(Container {
            magic,
            dims,
            members,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected_magic: [u8; 4]) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Container::decode(&bytes, expected_magic)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated header at byte {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl MimoQNetwork {
    pub fn to_container(&self) -> Container {
        Container {
            magic: CRITIC_MAGIC,
            dims: self.layer_dims(),
            members: self.ensemble_size(),
            params: self.flat_params(),
        }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.magic != CRITIC_MAGIC {
            return Err(Error::Checkpoint("not a critic checkpoint".into()));
        }
        // Shapes come from the header; initial values are overwritten below.
        let mut net = init_network(&c.dims, c.members, &mut RngStream::new(0))
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.params.len() != net.num_params() {
            return Err(Error::Checkpoint(format!(
                "{} parameters stored, header implies {}",
                c.params.len(),
                net.num_params()
            )));
        }
        net.set_flat_params(&c.params)?;
        Ok(net)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.to_container().encode()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::from_container(&Container::decode(bytes, CRITIC_MAGIC)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path, CRITIC_MAGIC)?)
    }
}
