//! Experiment checkpoints as versioned JSON text.
//!
//! Weights are written as shortest round-trip decimals, so a saved and
//! reloaded state is bit-identical to the original.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lottery::{LotteryConfig, LotteryState};
use crate::nn::LayerSizes;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config_hash: String,
    pub arch: LayerSizes,
    /// Rows completed so far; also the index of the next round.
    pub round_index: usize,
    pub state: LotteryState,
}

impl Checkpoint {
    pub fn new(cfg: &LotteryConfig, state: &LotteryState) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            config_hash: cfg.hash(),
            arch: cfg.arch.clone(),
            round_index: state.next_round,
            state: state.clone(),
        }
    }

    /// A warning when the checkpoint was written for a different config.
    pub fn config_warning(&self, cfg: &LotteryConfig) -> Option<String> {
        let hash = cfg.hash();
        (hash != self.config_hash).then(|| {
            format!(
                "checkpoint config hash {} differs from current config {}",
                &self.config_hash[..12.min(self.config_hash.len())],
                &hash[..12]
            )
        })
    }
}

pub fn checkpoint_to_string(ckpt: &Checkpoint) -> Result<String> {
    serde_json::to_string(ckpt)
        .map_err(|e| Error::Numerical(format!("checkpoint not serializable: {e}")))
}

pub fn checkpoint_from_str(text: &str) -> Result<Checkpoint> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::Format(format!("corrupt checkpoint: {e}")))?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == CHECKPOINT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::Format(format!(
                "checkpoint format version {v} is not supported (expected {CHECKPOINT_VERSION})"
            )))
        }
        None => return Err(Error::Format("checkpoint has no format_version".into())),
    }
    let ckpt: Checkpoint = serde_json::from_value(value)
        .map_err(|e| Error::Format(format!("corrupt checkpoint: {e}")))?;
    if ckpt.state.initial.arch() != ckpt.arch || ckpt.round_index != ckpt.state.next_round {
        return Err(Error::Format("checkpoint header disagrees with its state".into()));
    }
    Ok(ckpt)
}

/// Writes through a temporary file and renames it into place.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = checkpoint_to_string(ckpt)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, text).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_str(&text)
}
