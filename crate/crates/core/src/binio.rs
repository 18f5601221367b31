//! Little-endian binary encoding helpers for versioned workdir artifacts.
//!
//! Every artifact starts with an 8-byte magic, a u32 format version and the
//! 32-byte config hash it was produced under, so stages can refuse stale
//! inputs and reloads are bit-exact.

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const HASH_LEN: usize = 32;

pub struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    pub fn new(mut inner: W, magic: &[u8; 8], version: u32, config_hash: &[u8; HASH_LEN]) -> Result<Self> {
        inner.write_all(magic)?;
        inner.write_all(&version.to_le_bytes())?;
        inner.write_all(config_hash)?;
        Ok(Self { inner })
    }

    pub fn u32(&mut self, v: u32) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn u64(&mut self, v: u64) -> Result<()> {
        self.inner.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    pub fn f64(&mut self, v: f64) -> Result<()> {
        self.inner.write_all(&v.to_bits().to_le_bytes())?;
        Ok(())
    }

    pub fn str(&mut self, s: &str) -> Result<()> {
        self.u32(s.len() as u32)?;
        self.inner.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn u32_slice(&mut self, vs: &[u32]) -> Result<()> {
        self.u32(vs.len() as u32)?;
        for &v in vs {
            self.u32(v)?;
        }
        Ok(())
    }

    pub fn u64_slice(&mut self, vs: &[u64]) -> Result<()> {
        self.u32(vs.len() as u32)?;
        for &v in vs {
            self.u64(v)?;
        }
        Ok(())
    }

    pub fn f64_slice(&mut self, vs: &[f64]) -> Result<()> {
        self.u32(vs.len() as u32)?;
        for &v in vs {
            self.f64(v)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub struct Reader<R: Read> {
    inner: R,
    path: String,
    pub config_hash: [u8; HASH_LEN],
}

impl<R: Read> Reader<R> {
    /// Opens an artifact stream, checking magic and version. `path` is only
    /// used in error messages.
    pub fn new(mut inner: R, magic: &[u8; 8], version: u32, path: &str) -> Result<Self> {
        let mut got_magic = [0u8; 8];
        inner
            .read_exact(&mut got_magic)
            .map_err(|_| bad(path, "truncated header"))?;
        if &got_magic != magic {
            return Err(bad(path, "wrong magic (not this artifact type)"));
        }
        let mut got_version = [0u8; 4];
        inner
            .read_exact(&mut got_version)
            .map_err(|_| bad(path, "truncated header"))?;
        let got_version = u32::from_le_bytes(got_version);
        if got_version != version {
            return Err(bad(
                path,
                &format!("format version {got_version}, expected {version}"),
            ));
        }
        let mut config_hash = [0u8; HASH_LEN];
        inner
            .read_exact(&mut config_hash)
            .map_err(|_| bad(path, "truncated header"))?;
        Ok(Self {
            inner,
            path: path.to_string(),
            config_hash,
        })
    }

    fn bad(&self, msg: &str) -> Error {
        bad(&self.path, msg)
    }

    pub fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| self.bad("truncated"))?;
        Ok(u32::from_le_bytes(b))
    }

    pub fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| self.bad("truncated"))?;
        Ok(u64::from_le_bytes(b))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn str(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let mut b = vec![0u8; len];
        self.inner
            .read_exact(&mut b)
            .map_err(|_| self.bad("truncated"))?;
        String::from_utf8(b).map_err(|_| self.bad("invalid UTF-8 string"))
    }

    pub fn u32_vec(&mut self) -> Result<Vec<u32>> {
        let len = self.u32()? as usize;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.u32()?);
        }
        Ok(out)
    }

    pub fn u64_vec(&mut self) -> Result<Vec<u64>> {
        let len = self.u32()? as usize;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.u64()?);
        }
        Ok(out)
    }

    pub fn f64_vec(&mut self) -> Result<Vec<f64>> {
        let len = self.u32()? as usize;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(self.f64()?);
        }
        Ok(out)
    }
}

fn bad(path: &str, msg: &str) -> Error {
    Error::Artifact {
        path: path.to_string(),
        msg: msg.to_string(),
    }
}
