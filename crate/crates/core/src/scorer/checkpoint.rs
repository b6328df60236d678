//! Binary checkpoint format.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "MURA" | version u16 | backend u8
//! lambda f64 | learning_rate f64 | epochs u32 | batch_size u32 | margin f64
//! seed u64 | hash_bits u32 | max_tokens_per_doc u32 | beta1 f64 | beta2 f64 | epsilon f64
//! step u64
//! n_ids u64 | n_ids × (len u32, utf-8 bytes)       latent table document ids
//! n_params u64 | params f64 × n | m f64 × n | v f64 × n
//! fnv1a-64 of everything above, u64
//! ```

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use super::{Backend, ScorerState, TrainingConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u16 = 1;
const MAGIC: &[u8; 4] = b"MURA";

fn backend_tag(b: Backend) -> u8 {
    match b {
        Backend::LatentTable => 0,
        Backend::HashedLinear => 1,
    }
}

fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Content digest of a checkpoint file, as recorded in selection manifests.
pub fn checkpoint_digest(bytes: &[u8]) -> String {
    format!("fnv1a64:{:016x}", checksum(bytes))
}

pub fn checkpoint_bytes(state: &ScorerState) -> Vec<u8> {
    let c = &state.config;
    let n = state.params.len();
    let mut out = Vec::with_capacity(128 + 24 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(backend_tag(state.backend));
    out.extend_from_slice(&c.lambda.to_le_bytes());
    out.extend_from_slice(&c.learning_rate.to_le_bytes());
    out.extend_from_slice(&c.epochs.to_le_bytes());
    out.extend_from_slice(&c.batch_size.to_le_bytes());
    out.extend_from_slice(&c.margin.to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());
    out.extend_from_slice(&c.hash_bits.to_le_bytes());
    out.extend_from_slice(&c.max_tokens_per_doc.to_le_bytes());
    out.extend_from_slice(&c.beta1.to_le_bytes());
    out.extend_from_slice(&c.beta2.to_le_bytes());
    out.extend_from_slice(&c.epsilon.to_le_bytes());
    out.extend_from_slice(&state.step.to_le_bytes());
    out.extend_from_slice(&(state.doc_ids.len() as u64).to_le_bytes());
    for id in &state.doc_ids {
        out.extend_from_slice(&(id.len() as u32).to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    out.extend_from_slice(&(n as u64).to_le_bytes());
    for vec in [&state.params, &state.m, &state.v] {
        for x in vec.iter() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

pub fn save_checkpoint(state: &ScorerState, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(state)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("sized slice"))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array(what)?))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array(what)?))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array(what)?))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("parameter count overflows".into()))?, what)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

pub fn state_from_bytes(bytes: &[u8]) -> Result<ScorerState> {
    if bytes.len() < MAGIC.len() + 2 + 8 || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (this build reads version {CHECKPOINT_VERSION})"
        )));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if stored != checksum(body) {
        return Err(Error::Checkpoint("checksum mismatch: file is truncated or corrupt".into()));
    }

    let mut r = Reader { buf: body, pos: 6 };
    let backend = match r.take(1, "backend tag")?[0] {
        0 => Backend::LatentTable,
        1 => Backend::HashedLinear,
        t => return Err(Error::Checkpoint(format!("unknown backend tag {t}"))),
    };
    let config = TrainingConfig {
        lambda: r.f64("lambda")?,
        learning_rate: r.f64("learning_rate")?,
        epochs: r.u32("epochs")?,
        batch_size: r.u32("batch_size")?,
        margin: r.f64("margin")?,
        seed: r.u64("seed")?,
        hash_bits: r.u32("hash_bits")?,
        max_tokens_per_doc: r.u32("max_tokens_per_doc")?,
        beta1: r.f64("beta1")?,
        beta2: r.f64("beta2")?,
        epsilon: r.f64("epsilon")?,
    };
    config
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid stored config: {e}")))?;
    let step = r.u64("step")?;
    let n_ids = r.u64("id count")? as usize;
    let mut ids = Vec::with_capacity(n_ids.min(body.len()));
    for _ in 0..n_ids {
        let len = r.u32("id length")? as usize;
        let raw = r.take(len, "document id")?;
        let id = std::str::from_utf8(raw).map_err(|_| Error::Checkpoint("document id is not utf-8".into()))?;
        ids.push(id.to_owned());
    }
    let n = r.u64("parameter count")? as usize;
    let params = r.f64s(n, "params")?;
    let m = r.f64s(n, "first moments")?;
    let v = r.f64s(n, "second moments")?;
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
    }

    let mut state = match backend {
        Backend::LatentTable => {
            if n != ids.len() {
                return Err(Error::Checkpoint(format!("latent table has {} ids but {n} params", ids.len())));
            }
            ScorerState::latent(ids, config).map_err(|e| Error::Checkpoint(e.to_string()))?
        }
        Backend::HashedLinear => {
            let want = (1usize << config.hash_bits) + 1;
            if n != want || !ids.is_empty() {
                return Err(Error::Checkpoint(format!(
                    "hashed model with {} bits needs {want} params, found {n}",
                    config.hash_bits
                )));
            }
            ScorerState::hashed(config)?
        }
    };
    state.params = params;
    state.m = m;
    state.v = v;
    state.step = step;
    Ok(state)
}

pub fn load_checkpoint(path: &Path) -> Result<ScorerState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    state_from_bytes(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Loads a checkpoint and refuses it when its feature width differs from `hash_bits`.
pub fn load_checkpoint_for(path: &Path, hash_bits: u32) -> Result<ScorerState> {
    let state = load_checkpoint(path)?;
    if state.backend == Backend::HashedLinear && state.config.hash_bits != hash_bits {
        return Err(Error::Checkpoint(format!(
            "{} was trained with hash_bits = {}, this session uses {hash_bits}",
            path.display(),
            state.config.hash_bits
        )));
    }
    Ok(state)
}
