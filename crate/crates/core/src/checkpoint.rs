//! Versioned single-file checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "UNFCKPT\0"
//! version  u32
//! hlen     u64      length of the JSON header
//! header   hlen bytes of UTF-8 JSON (CheckpointMeta plus a tensor index)
//! payload  f32 values of every tensor, in index order
//! ```
//!
//! Tensor names are `<module>/<var-store path>`, e.g.
//! `generator/encoder.level0.conv_a.weight` or `adam_gen/m/<var path>`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tch::{nn, Kind, Tensor};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::train::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UNFCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized state of the training RNG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// 128-bit word position as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> RngState {
        RngState {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bytes = hex::decode(&self.seed)
            .ok()
            .and_then(|b| <[u8; 32]>::try_from(b).ok())
            .ok_or_else(|| Error::Checkpoint("malformed rng seed".into()))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint("malformed rng word position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(bytes);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

/// Everything in a checkpoint except the tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub step: u64,
    /// Seed the networks were created from.
    pub seed: u64,
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub rng: Option<RngState>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<i64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta) -> Checkpoint {
        Checkpoint {
            meta,
            tensors: BTreeMap::new(),
        }
    }

    /// Copies every variable of `vs` under `prefix/`.
    pub fn insert_var_store(&mut self, prefix: &str, vs: &nn::VarStore) {
        for (name, t) in vs.variables() {
            self.insert(format!("{prefix}/{name}"), &t);
        }
    }

    pub fn insert(&mut self, name: String, t: &Tensor) {
        let copy = tch::no_grad(|| t.detach().to_kind(Kind::Float).copy());
        self.tensors.insert(name, copy);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Overwrites every variable of `vs` from `prefix/`. Missing or
    /// mis-shaped tensors are errors.
    pub fn load_var_store(&self, prefix: &str, vs: &mut nn::VarStore) -> Result<()> {
        for (name, mut var) in vs.variables() {
            let key = format!("{prefix}/{name}");
            let src = self
                .tensors
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("tensor `{key}` is missing")))?;
            if src.size() != var.size() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{key}` has shape {:?}, expected {:?}",
                    src.size(),
                    var.size()
                )));
            }
            tch::no_grad(|| var.copy_(src));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let index: Vec<TensorEntry> = self
            .tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.size(),
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors: index,
        })?;
        let payload: usize = self.tensors.values().map(|t| t.numel() * 4).sum();
        let mut out = Vec::with_capacity(20 + header.len() + payload);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.tensors.values() {
            let values = Vec::<f32>::try_from(t.flatten(0, -1))?;
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version} (this build reads version {CHECKPOINT_VERSION})"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[20..];
        if hlen > body.len() {
            return Err(Error::Checkpoint("truncated header".into()));
        }
        let header: Header = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::Checkpoint(format!("version {version} header is corrupt: {e}")))?;
        let mut payload = &body[hlen..];
        let mut tensors = BTreeMap::new();
        for entry in header.tensors {
            if entry.shape.iter().any(|d| *d < 0) {
                return Err(Error::Checkpoint(format!("tensor `{}` has a negative dimension", entry.name)));
            }
            let n: usize = entry.shape.iter().product::<i64>() as usize;
            let len = n * 4;
            if payload.len() < len {
                return Err(Error::Checkpoint(format!("payload truncated at tensor `{}`", entry.name)));
            }
            let values: Vec<f32> = payload[..len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            payload = &payload[len..];
            tensors.insert(entry.name, Tensor::from_slice(&values).view(entry.shape.as_slice()));
        }
        if !payload.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes after payload", payload.len())));
        }
        Ok(Checkpoint {
            meta: header.meta,
            tensors,
        })
    }

    /// Writes the checkpoint and returns the SHA-256 of the file contents.
    pub fn save(&self, path: &Path) -> Result<String> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("bin.partial");
        fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|e| match e {
            Error::Checkpoint(msg) => Error::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// SHA-256 over tensor names and values under `prefix/`, independent of
    /// the header.
    pub fn parameter_hash(&self, prefix: &str) -> String {
        let mut h = Sha256::new();
        let p = format!("{prefix}/");
        for (name, t) in self.tensors.iter().filter(|(n, _)| n.starts_with(&p)) {
            h.update(name.as_bytes());
            let values = Vec::<f32>::try_from(t.flatten(0, -1)).expect("float tensor");
            for v in values {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// `ckpt_<step>.bin` inside `dir`.
pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("ckpt_{step}.bin"))
}

/// The checkpoint with the highest step in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    let rd = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(dir, e)),
    };
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(step) = name
            .to_str()
            .and_then(|n| n.strip_prefix("ckpt_"))
            .and_then(|n| n.strip_suffix(".bin"))
            .and_then(|n| n.parse::<u64>().ok())
        else {
            continue;
        };
        if best.as_ref().map_or(true, |(s, _)| step > *s) {
            best = Some((step, entry.path()));
        }
    }
    Ok(best.map(|(_, p)| p))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 of a file's contents.
pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}
