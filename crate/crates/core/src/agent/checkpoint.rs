//! Binary checkpoint: magic `AFCPOL`, a `u16` version, then actor layers,
//! log-std, critic layers and normaliser state. Every tensor carries its
//! shape; all numbers are little-endian and floats are 64-bit.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Activation, AgentError, Layer, MlpParams, ObsNormalizer, Policy};

const MAGIC: &[u8; 6] = b"AFCPOL";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub policy: Policy<f64>,
    pub critic: MlpParams<f64>,
    pub normalizer: ObsNormalizer<f64>,
}

impl Checkpoint {
    /// Policy whose mean is identically zero, so every deterministic action is 0.
    pub fn zero_policy(obs_size: usize, act_size: usize, hidden: &[usize]) -> Self {
        let mut critic_sizes = vec![obs_size];
        critic_sizes.extend_from_slice(hidden);
        critic_sizes.push(1);
        Self {
            policy: Policy::zero(obs_size, act_size, hidden, 0.2f64.ln()),
            critic: MlpParams::zeros(&critic_sizes),
            normalizer: ObsNormalizer::new(obs_size),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_mlp(&mut out, &self.policy.actor);
        put_vec(&mut out, &self.policy.log_std);
        put_mlp(&mut out, &self.critic);
        out.extend_from_slice(&self.normalizer.count.to_le_bytes());
        put_vec(&mut out, &self.normalizer.mean);
        put_vec(&mut out, &self.normalizer.m2);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, AgentError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(AgentError::Checkpoint("not a policy checkpoint (bad magic)".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != CHECKPOINT_VERSION {
            return Err(AgentError::Checkpoint(format!("unsupported version {version}")));
        }
        let actor = r.mlp()?;
        let log_std = r.vec()?;
        let critic = r.mlp()?;
        let count = u64::from_le_bytes(r.array()?);
        let mean = r.vec()?;
        let m2 = r.vec()?;
        if r.pos != bytes.len() {
            return Err(AgentError::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        let ck = Self {
            policy: Policy { actor, log_std },
            critic,
            normalizer: ObsNormalizer { count, mean, m2 },
        };
        ck.validate()?;
        Ok(ck)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        self.policy.validate()?;
        self.critic.validate()?;
        let obs = self.policy.obs_size();
        for (what, n) in [
            ("critic input", self.critic.input_size()),
            ("normaliser mean", self.normalizer.mean.len()),
            ("normaliser variance", self.normalizer.m2.len()),
        ] {
            if n != obs {
                return Err(AgentError::Shape {
                    what: what.into(),
                    expected: obs,
                    actual: n,
                });
            }
        }
        Ok(())
    }
}

pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<(), AgentError> {
    fs::write(path, ck.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, AgentError> {
    Checkpoint::from_bytes(&fs::read(path)?)
}

fn put_u32(out: &mut Vec<u8>, n: usize) {
    out.extend_from_slice(&u32::try_from(n).expect("tensor dimension fits in u32").to_le_bytes());
}

fn put_vec(out: &mut Vec<u8>, v: &[f64]) {
    put_u32(out, v.len());
    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
}

fn put_mlp(out: &mut Vec<u8>, m: &MlpParams<f64>) {
    put_u32(out, m.layers.len());
    for l in &m.layers {
        out.push(l.act.tag());
        put_u32(out, l.w.nrows());
        put_u32(out, l.w.ncols());
        l.w.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        put_vec(out, l.b.as_slice().expect("contiguous bias"));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AgentError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| AgentError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], AgentError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn len(&mut self) -> Result<usize, AgentError> {
        Ok(u32::from_le_bytes(self.array()?) as usize)
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>, AgentError> {
        let raw = self.take(
            n.checked_mul(8)
                .ok_or_else(|| AgentError::Checkpoint("tensor size overflow".into()))?,
        )?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn vec(&mut self) -> Result<Vec<f64>, AgentError> {
        let n = self.len()?;
        self.floats(n)
    }

    fn mlp(&mut self) -> Result<MlpParams<f64>, AgentError> {
        let n = self.len()?;
        let mut layers = Vec::with_capacity(n.min(64));
        for k in 0..n {
            let tag = self.array::<1>()?[0];
            let act = Activation::from_tag(tag)
                .ok_or_else(|| AgentError::Checkpoint(format!("layer {k}: unknown activation tag {tag}")))?;
            let (rows, cols) = (self.len()?, self.len()?);
            let w = Array2::from_shape_vec((rows, cols), self.floats(rows * cols)?).expect("shape matches length");
            let b = Array1::from_vec(self.vec()?);
            layers.push(Layer { w, b, act });
        }
        Ok(MlpParams { layers })
    }
}
