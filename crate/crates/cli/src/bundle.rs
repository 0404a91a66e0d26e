//! Model files: a trained codec plus everything needed to rebuild the
//! data it was trained on.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use scu_core::{ChannelConfig, Result, SemanticCodec};
use serde::{Deserialize, Serialize};

const FORMAT: &str = "scu-model";
const VERSION: u32 = 1;

/// How the training data was built and poisoned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Flat configuration echo, as read by `ExperimentConfig::from_pairs`.
    pub config: BTreeMap<String, String>,
    pub edr: f64,
    pub seed: u64,
    pub channel: ChannelConfig,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawBundle {
    format: String,
    version: u32,
    provenance: Provenance,
    /// Procedures applied so far, oldest first.
    history: Vec<String>,
    codec: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub provenance: Provenance,
    pub history: Vec<String>,
    pub codec: SemanticCodec,
}

impl ModelBundle {
    pub fn save(&self, path: &Path) -> Result<()> {
        let raw = RawBundle {
            format: FORMAT.into(),
            version: VERSION,
            provenance: self.provenance.clone(),
            history: self.history.clone(),
            codec: serde_json::from_str(&self.codec.to_json()?)?,
        };
        fs::write(path, serde_json::to_string_pretty(&raw)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw: RawBundle = serde_json::from_str(&fs::read_to_string(path)?)?;
        if raw.format != FORMAT || raw.version != VERSION {
            return Err(scu_core::Error::Format {
                offset: 0,
                message: format!(
                    "{} is not a version {VERSION} model file (found {:?} v{})",
                    path.display(),
                    raw.format,
                    raw.version
                ),
            });
        }
        Ok(ModelBundle {
            provenance: raw.provenance,
            history: raw.history,
            codec: SemanticCodec::from_json(&raw.codec.to_string())?,
        })
    }
}
