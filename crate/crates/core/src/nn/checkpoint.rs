//! JSON checkpoints of trained networks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::ErrorMapNetwork;
use crate::error::Result;

pub const CHECKPOINT_FORMAT: &str = "mlnn-checkpoint/1";

/// A network plus the seed and free-form training metadata it was produced with.
///
/// Parameters are written as shortest round-trip decimals, so `load(save(x)) == x` bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub seed: u64,
    pub metadata: serde_json::Value,
    pub network: ErrorMapNetwork,
}

impl Checkpoint {
    pub fn new(network: ErrorMapNetwork, seed: u64, metadata: serde_json::Value) -> Self {
        Self { format: CHECKPOINT_FORMAT.to_string(), seed, metadata, network }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
