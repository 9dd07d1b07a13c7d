//! Checkpoint files (JSON).

use std::path::Path;

use anyhow::{Context, Result};
use isl::nn::{MlpSpec, ParamVector};
use isl::timeseries::{CsvLayout, Standardization, TemporalCheckpoint};
use isl::NoiseSource;
use serde::{Deserialize, Serialize};

use crate::InputError;

pub const CHECKPOINT_FILE: &str = "checkpoint.json";

/// How series values were scaled before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    None,
    /// Each series z-scored with its own statistics (fitted on the
    /// conditioning window at forecast time).
    Series,
    /// One z-score fitted on all training values, reused at forecast time.
    Global(Standardization),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Checkpoint {
    Generator {
        spec: MlpSpec,
        params: ParamVector,
        noise: NoiseSource,
        target: Option<String>,
    },
    Temporal {
        model: TemporalCheckpoint,
        noise: NoiseSource,
        scaling: Scaling,
        layout: CsvLayout,
    },
}

impl Checkpoint {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| InputError(format!("cannot read checkpoint {}: {e}", path.display())))?;
        serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))
    }
}
