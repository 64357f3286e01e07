//! Binary checkpoints: magic, format version, JSON header, then raw
//! little-endian f64 parameter arrays in header order.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg_store::{write_output, Vocab};
use crate::model::{ModelConfig, ModelState};

pub const MAGIC: &[u8; 8] = b"UNIBIKGC";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub config: ModelConfig,
    pub n_entities: usize,
    pub n_relations: usize,
    pub rng_seed: u64,
    pub vocab_fingerprint: String,
    pub epoch: Option<usize>,
    pub metrics: BTreeMap<String, f64>,
    pub arrays: Vec<ArrayInfo>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub state: ModelState,
}

impl Checkpoint {
    pub fn new(
        state: ModelState,
        vocab: &Vocab,
        epoch: Option<usize>,
        metrics: BTreeMap<String, f64>,
    ) -> Self {
        Self::with_fingerprint(state, vocab.fingerprint(), epoch, metrics)
    }

    /// Non-finite metrics are dropped since JSON cannot carry them.
    pub fn with_fingerprint(
        state: ModelState,
        vocab_fingerprint: String,
        epoch: Option<usize>,
        metrics: BTreeMap<String, f64>,
    ) -> Self {
        let arrays = state
            .param_groups()
            .into_iter()
            .map(|(name, a)| ArrayInfo {
                name: name.to_string(),
                len: a.len(),
            })
            .collect();
        let header = CheckpointHeader {
            config: *state.config(),
            n_entities: state.n_entities(),
            n_relations: state.n_relations(),
            rng_seed: state.rng_seed(),
            vocab_fingerprint,
            epoch,
            metrics: metrics.into_iter().filter(|(_, v)| v.is_finite()).collect(),
            arrays,
        };
        Self { header, state }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json =
            serde_json::to_vec(&self.header).map_err(|e| Error::BadCheckpoint(e.to_string()))?;
        let groups = self.state.param_groups();
        let total: usize = groups.iter().map(|(_, a)| a.len()).sum();
        let mut out = Vec::with_capacity(20 + json.len() + 8 * total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, a) in groups {
            for v in a {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::BadCheckpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("wrong magic"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported format version {version}")));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let body = &bytes[20..];
        let header_len = usize::try_from(header_len)
            .ok()
            .filter(|&n| n <= body.len())
            .ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(&body[..header_len])
            .map_err(|e| bad(&format!("header: {e}")))?;
        let mut data = &body[header_len..];
        let mut groups = Vec::with_capacity(header.arrays.len());
        for a in &header.arrays {
            let n_bytes = a
                .len
                .checked_mul(8)
                .filter(|&n| n <= data.len())
                .ok_or_else(|| bad(&format!("array '{}' truncated", a.name)))?;
            let (chunk, rest) = data.split_at(n_bytes);
            groups.push(
                chunk
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect::<Vec<_>>(),
            );
            data = rest;
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let state = ModelState::from_parts(
            header.config,
            header.n_entities,
            header.n_relations,
            header.rng_seed,
            groups,
        )
        .map_err(|e| bad(&e.to_string()))?;
        let names = state.param_groups().into_iter().map(|(n, _)| n);
        if !names.eq(header.arrays.iter().map(|a| a.name.as_str())) {
            return Err(bad("array names do not match the model layout"));
        }
        Ok(Self { header, state })
    }

    pub fn save(&self, path: &Path, force: bool) -> Result<()> {
        write_output(path, &self.to_bytes()?, force)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.context(path.display().to_string()))
    }

    /// Error unless the checkpoint was trained on `vocab`.
    pub fn check_vocab(&self, vocab: &Vocab) -> Result<()> {
        let fp = vocab.fingerprint();
        if fp != self.header.vocab_fingerprint {
            return Err(Error::CheckpointMismatch(format!(
                "vocabulary hash {} differs from checkpoint {}",
                &fp[..12],
                &self.header.vocab_fingerprint[..self.header.vocab_fingerprint.len().min(12)]
            )));
        }
        Ok(())
    }
}
