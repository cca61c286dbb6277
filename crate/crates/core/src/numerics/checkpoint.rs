//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "RSAGECKP"
//! version  u32      = 1
//! header   u32 length + UTF-8 JSON (CheckpointHeader)
//! adam     u64 step, f64 lr, f64 beta1, f64 beta2, f64 eps
//! params   u32 count, then per parameter in name order:
//!            name (u32 length + UTF-8), u32 rank, u64 dims..., f64 values...,
//!            u8 has_moments, [f64 m..., f64 v...]
//! consts   u32 count, then name, rank, dims, f64 values (no moments)
//! ```

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, ModelParams, Moments, Tensor};

pub const MAGIC: &[u8; 8] = b"RSAGECKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// What the checkpoint holds, e.g. `"rdm"` or `"verifier"`.
    pub kind: String,
    pub seed: u64,
    /// Nonlinearity used in graph aggregation and update.
    pub activation: String,
    pub config_fingerprint: String,
    /// Full run configuration as TOML.
    pub config: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: ModelParams,
    pub adam: AdamState,
    /// Non-trainable tensors stored alongside (frozen embeddings).
    pub constants: BTreeMap<String, Tensor>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_str(out, name);
    put_u32(out, t.shape().len() as u32);
    for &d in t.shape() {
        put_u64(out, d as u64);
    }
    put_f64s(out, t.data());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        let header = serde_json::to_string(&self.header)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        put_str(&mut out, &header);

        put_u64(&mut out, self.adam.step);
        let c = self.adam.config;
        put_f64s(&mut out, &[c.lr, c.beta1, c.beta2, c.eps]);

        put_u32(&mut out, self.params.len() as u32);
        for (name, p) in self.params.iter() {
            put_tensor(&mut out, name, &p.value);
            match self.adam.moments.get(name) {
                Some(m) => {
                    out.push(1);
                    put_f64s(&mut out, m.m.data());
                    put_f64s(&mut out, m.v.data());
                }
                None => out.push(0),
            }
        }

        put_u32(&mut out, self.constants.len() as u32);
        for (name, t) in &self.constants {
            put_tensor(&mut out, name, t);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let header: CheckpointHeader =
            serde_json::from_str(&r.string()?).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let step = r.u64()?;
        let config = AdamConfig {
            lr: r.f64()?,
            beta1: r.f64()?,
            beta2: r.f64()?,
            eps: r.f64()?,
        };
        let mut adam = AdamState::new(config);
        adam.step = step;

        let mut params = ModelParams::new();
        for _ in 0..r.u32()? {
            let (name, value) = r.tensor()?;
            if r.take(1)?[0] == 1 {
                let m = Tensor::new(value.shape().to_vec(), r.f64s(value.len())?)?;
                let v = Tensor::new(value.shape().to_vec(), r.f64s(value.len())?)?;
                adam.moments.insert(name.clone(), Moments { m, v });
            }
            params.insert(name, value);
        }

        let mut constants = BTreeMap::new();
        for _ in 0..r.u32()? {
            let (name, t) = r.tensor()?;
            constants.insert(name, t);
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            header,
            params,
            adam,
            constants,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'b> {
    bytes: &'b [u8],
    pos: usize,
}

impl<'b> Reader<'b> {
    fn take(&mut self, n: usize) -> Result<&'b [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn tensor(&mut self) -> Result<(String, Tensor)> {
        let name = self.string()?;
        let rank = self.u32()? as usize;
        let shape = (0..rank)
            .map(|_| self.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape.iter().product();
        let t = Tensor::new(shape, self.f64s(n)?)?;
        Ok((name, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ModelParams::new();
        params.insert("a", Tensor::matrix(2, 2, vec![1.0, -2.0, 0.5, 1e-300]).unwrap());
        params.insert("b", Tensor::row(vec![3.0]));
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step = 3;
        adam.moments.insert(
            "a".into(),
            Moments {
                m: Tensor::full(&[2, 2], 0.1),
                v: Tensor::full(&[2, 2], 0.2),
            },
        );
        let mut constants = BTreeMap::new();
        constants.insert("embedding".into(), Tensor::zeros(&[3, 2]));
        Checkpoint {
            header: CheckpointHeader {
                kind: "rdm".into(),
                seed: 7,
                activation: "relu".into(),
                config_fingerprint: "abc".into(),
                config: "seed = 7\n".into(),
            },
            params,
            adam,
            constants,
        }
    }

    #[test]
    fn bytes_roundtrip() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
