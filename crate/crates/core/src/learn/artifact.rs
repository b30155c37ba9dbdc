//! On-disk policy format.
//!
//! Layout, all integers little-endian:
//! `b"RTPOLICY"`, `u32` version, `u32` metadata length, metadata JSON, `u32` tensor
//! count, then per tensor `u16` name length, name, `u32` rank, `u32` dims, `f32` data;
//! finally a SHA-256 digest of every preceding byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::policy::Policy;
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::vecsim::RegimeConfig;

const MAGIC: &[u8; 8] = b"RTPOLICY";
pub const FORMAT_VERSION: u32 = 1;

/// Provenance stored next to the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub ppo: PpoConfig,
    pub regime: RegimeConfig,
    pub seed: u64,
    /// Environment steps consumed when the artifact was written.
    pub global_step: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyArtifact {
    pub meta: ArtifactMeta,
    pub tensors: Vec<Tensor>,
}

impl PolicyArtifact {
    pub fn from_policy(policy: &Policy<f32>, meta: ArtifactMeta) -> Self {
        let mut tensors = Vec::new();
        let mut push = |prefix: &str, list: Vec<(String, usize, Vec<usize>)>| {
            for (name, at, shape) in list {
                let n: usize = shape.iter().product();
                tensors.push(Tensor {
                    name: format!("{prefix}.{name}"),
                    data: policy.params[at..at + n].to_vec(),
                    shape,
                });
            }
        };
        push("actor", policy.actor.tensors());
        push(
            "actor",
            vec![("log_std".into(), policy.log_std_at, vec![crate::ACT_DIM])],
        );
        push("critic", policy.critic.tensors());
        Self { meta, tensors }
    }

    /// Rebuilds the policy, checking every expected tensor is present with its shape.
    pub fn to_policy(&self) -> Result<Policy<f32>> {
        let mut p = Policy::<f32>::zeros(&self.meta.ppo.hidden);
        let mut expected: Vec<(String, usize, Vec<usize>)> = Vec::new();
        expected.extend(p.actor.tensors().into_iter().map(|(n, a, s)| (format!("actor.{n}"), a, s)));
        expected.push(("actor.log_std".into(), p.log_std_at, vec![crate::ACT_DIM]));
        expected.extend(p.critic.tensors().into_iter().map(|(n, a, s)| (format!("critic.{n}"), a, s)));
        if expected.len() != self.tensors.len() {
            return Err(Error::usage(format!(
                "artifact has {} tensors, hidden sizes {:?} need {}",
                self.tensors.len(),
                self.meta.ppo.hidden,
                expected.len()
            )));
        }
        for (name, at, shape) in expected {
            let t = self
                .tensors
                .iter()
                .find(|t| t.name == name)
                .ok_or_else(|| Error::usage(format!("artifact is missing tensor {name}")))?;
            if t.shape != shape {
                return Err(Error::usage(format!("tensor {name}: shape {:?}, expected {shape:?}", t.shape)));
            }
            p.params[at..at + t.data.len()].copy_from_slice(&t.data);
        }
        Ok(p)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let meta = serde_json::to_vec(&self.meta).expect("metadata serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u16).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::format(path, reason);
        if bytes.len() < MAGIC.len() + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("not a policy artifact"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader { buf: body, at: MAGIC.len() };
        let version = r.u32().ok_or_else(|| bad("truncated header"))?;
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let meta_len = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let meta_bytes = r.take(meta_len).ok_or_else(|| bad("truncated metadata"))?;
        let meta: ArtifactMeta =
            serde_json::from_slice(meta_bytes).map_err(|e| bad(&format!("metadata: {e}")))?;
        let count = r.u32().ok_or_else(|| bad("truncated tensor table"))?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let trunc = || bad("truncated tensor");
            let name_len = r.u16().ok_or_else(trunc)? as usize;
            let name = std::str::from_utf8(r.take(name_len).ok_or_else(trunc)?)
                .map_err(|_| bad("tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u32().ok_or_else(trunc)? as usize;
            if rank > 8 {
                return Err(bad("tensor rank too large"));
            }
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(trunc)?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| bad("tensor too large"))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(trunc)?).ok_or_else(trunc)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Tensor { name, shape, data });
        }
        if r.at != body.len() {
            return Err(bad("trailing bytes after tensors"));
        }
        Ok(Self { meta, tensors })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.at.checked_add(n)?;
        let s = self.buf.get(self.at..end)?;
        self.at = end;
        Some(s)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, Stream};

    fn sample() -> PolicyArtifact {
        let ppo = PpoConfig {
            hidden: vec![6, 5],
            ..PpoConfig::default()
        };
        let p = Policy::<f32>::new(&ppo.hidden, -0.7, &mut seeded(3, Stream::Init));
        let meta = ArtifactMeta {
            ppo,
            regime: RegimeConfig::default(),
            seed: 3,
            global_step: 123,
        };
        PolicyArtifact::from_policy(&p, meta)
    }

    #[test]
    fn round_trip_restores_parameters_bitwise() {
        let a = sample();
        let p = a.to_policy().unwrap();
        let b = PolicyArtifact::from_bytes(&a.to_bytes(), Path::new("mem")).unwrap();
        assert_eq!(a, b);
        let q = b.to_policy().unwrap();
        assert!(p.params.iter().zip(&q.params).all(|(x, y)| x.to_bits() == y.to_bits()));
        let names: Vec<&str> = a.tensors.iter().map(|t| t.name.as_str()).collect();
        assert!(names.contains(&"actor.l0.weight") && names.contains(&"actor.log_std") && names.contains(&"critic.l2.bias"));
    }

    #[test]
    fn any_flipped_byte_is_rejected() {
        let bytes = sample().to_bytes();
        for at in (0..bytes.len()).step_by(97) {
            let mut b = bytes.clone();
            b[at] ^= 0x10;
            assert!(matches!(PolicyArtifact::from_bytes(&b, Path::new("x")), Err(Error::Format { .. })));
        }
        assert!(PolicyArtifact::from_bytes(&bytes[..bytes.len() - 1], Path::new("x")).is_err());
    }
}
