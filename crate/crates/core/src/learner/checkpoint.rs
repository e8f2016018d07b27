use std::path::Path;

use super::{Adam, LearnerError, Mlp, Normalizer};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"QECKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training or run a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: String,
    pub iteration: u64,
    pub seed: u64,
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
    pub normalizer: Normalizer,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend(v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend(v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.f64(*x);
        }
    }
    fn sizes(&mut self, sizes: &[usize]) {
        self.u32(sizes.len() as u32);
        for s in sizes {
            self.u64(*s as u64);
        }
    }
    fn adam(&mut self, a: &Adam) {
        self.f64s(&a.m);
        self.f64s(&a.v);
        self.u64(a.t);
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], LearnerError> {
        if self.0.len() < n {
            return Err(LearnerError::Format("truncated checkpoint".into()));
        }
        let (head, rest) = self.0.split_at(n);
        self.0 = rest;
        Ok(head)
    }
    fn u32(&mut self) -> Result<u32, LearnerError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, LearnerError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, LearnerError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self, expected: usize, what: &'static str) -> Result<usize, LearnerError> {
        let n = self.u64()? as usize;
        if n != expected {
            return Err(LearnerError::DimensionMismatch { what, got: n, expected });
        }
        Ok(n)
    }
    fn f64s(&mut self, expected: usize, what: &'static str) -> Result<Vec<f64>, LearnerError> {
        let n = self.len(expected, what)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn sizes(&mut self) -> Result<Vec<usize>, LearnerError> {
        let n = self.u32()? as usize;
        if n < 2 || n > 64 {
            return Err(LearnerError::Format(format!("implausible layer count {n}")));
        }
        (0..n).map(|_| Ok(self.u64()? as usize)).collect()
    }
    fn adam(&mut self, n: usize) -> Result<Adam, LearnerError> {
        let mut a = Adam::new(n);
        a.m = self.f64s(n, "optimizer moment")?;
        a.v = self.f64s(n, "optimizer moment")?;
        a.t = self.u64()?;
        Ok(a)
    }
}

pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    let mut w = Writer(CHECKPOINT_MAGIC.to_vec());
    w.u32(CHECKPOINT_VERSION);
    w.u32(c.config_hash.len() as u32);
    w.0.extend(c.config_hash.as_bytes());
    w.u64(c.iteration);
    w.u64(c.seed);
    w.sizes(&c.actor.sizes);
    w.sizes(&c.critic.sizes);
    w.f64s(&c.actor.params);
    w.f64s(&c.critic.params);
    w.adam(&c.actor_opt);
    w.adam(&c.critic_opt);
    w.f64(c.normalizer.count);
    w.f64s(&c.normalizer.mean);
    w.f64s(&c.normalizer.m2);
    w.0
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, LearnerError> {
    let mut r = Reader(bytes);
    if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(LearnerError::Format("missing QECKPT magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(LearnerError::Format(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let hash_len = r.u32()? as usize;
    let config_hash = String::from_utf8(r.take(hash_len)?.to_vec()).map_err(|_| LearnerError::Format("config hash is not UTF-8".into()))?;
    let iteration = r.u64()?;
    let seed = r.u64()?;
    let mut actor = Mlp::zeros(&r.sizes()?);
    let mut critic = Mlp::zeros(&r.sizes()?);
    actor.params = r.f64s(actor.params.len(), "actor parameters")?;
    critic.params = r.f64s(critic.params.len(), "critic parameters")?;
    let actor_opt = r.adam(actor.params.len())?;
    let critic_opt = r.adam(critic.params.len())?;
    let obs = actor.input_len();
    let count = r.f64()?;
    let mean = r.f64s(obs, "normalizer")?;
    let m2 = r.f64s(obs, "normalizer")?;
    if !r.0.is_empty() {
        return Err(LearnerError::Format(format!("{} trailing bytes", r.0.len())));
    }
    Ok(Checkpoint {
        config_hash,
        iteration,
        seed,
        actor,
        critic,
        actor_opt,
        critic_opt,
        normalizer: Normalizer { count, mean, m2 },
    })
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<(), LearnerError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode_checkpoint(c))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Loads a checkpoint and checks that it was written under `expected_hash`.
pub fn load_checkpoint(path: &Path, expected_hash: &str) -> Result<Checkpoint, LearnerError> {
    let c = decode_checkpoint(&std::fs::read(path)?)?;
    if c.config_hash != expected_hash {
        return Err(LearnerError::ConfigMismatch {
            expected: expected_hash.to_string(),
            found: c.config_hash,
        });
    }
    Ok(c)
}
