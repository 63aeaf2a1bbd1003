//! Versioned JSON model archives with a SHA-256 checksum of the payload.

use std::fs;
use std::path::Path;

use fnn_core::flm::FlmModel;
use fnn_core::network::{FnnModel, WeightSnapshot};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::ingest::IngestPlan;
use crate::output::write_atomic;

pub const FORMAT: &str = "fnn-model-archive";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArchivedModel {
    Fnn {
        model: FnnModel,
        /// Averaged functional weights per epoch, when they were recorded.
        #[serde(default)]
        snapshots: Option<Vec<WeightSnapshot>>,
        best_epoch: usize,
    },
    Flm {
        model: FlmModel,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelArchive {
    pub model: ArchivedModel,
    pub ingest: IngestPlan,
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct Envelope<'a> {
    format: String,
    version: u32,
    checksum: String,
    #[serde(borrow)]
    payload: &'a RawValue,
}

fn digest(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

impl ModelArchive {
    pub fn to_json(&self) -> String {
        let payload = serde_json::to_string(self).expect("archive serializes");
        let raw = RawValue::from_string(payload).expect("valid JSON");
        let env = Envelope {
            format: FORMAT.into(),
            version: VERSION,
            checksum: digest(raw.get()),
            payload: &raw,
        };
        let mut s = serde_json::to_string(&env).expect("envelope serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: Envelope = serde_json::from_str(text)
            .map_err(|e| CliError::data(format!("not a model archive: {e}")))?;
        if env.format != FORMAT {
            return Err(CliError::data(format!("unknown archive format '{}'", env.format)));
        }
        if env.version != VERSION {
            return Err(CliError::data(format!(
                "archive version {} is not supported (expected {VERSION})",
                env.version
            )));
        }
        if digest(env.payload.get()) != env.checksum {
            return Err(CliError::data("archive checksum mismatch"));
        }
        let archive: ModelArchive = serde_json::from_str(env.payload.get())
            .map_err(|e| CliError::data(format!("malformed archive payload: {e}")))?;
        archive.check()?;
        Ok(archive)
    }

    /// Re-validates shapes that deserialization alone does not enforce.
    fn check(&self) -> Result<()> {
        match &self.model {
            ArchivedModel::Fnn { model, .. } => {
                FnnModel::from_parts(
                    model.config().clone(),
                    model.structure().clone(),
                    model.layers().to_vec(),
                    model.scaling().clone(),
                )
                .map_err(|e| CliError::data(format!("inconsistent archived network: {e}")))?;
            }
            ArchivedModel::Flm { model } => {
                if model.beta_coefs.len() != model.weight_bases.len()
                    || model.beta_coefs.iter().zip(&model.weight_bases).any(|(c, b)| c.len() != b.size())
                    || model.scalar_coefs.len() != model.structure.n_scalar
                {
                    return Err(CliError::data("inconsistent archived linear model"));
                }
            }
        }
        if self.ingest.covariates.len() != self.structure_len() {
            return Err(CliError::data("archive ingestion plan does not match the model"));
        }
        Ok(())
    }

    fn structure_len(&self) -> usize {
        match &self.model {
            ArchivedModel::Fnn { model, .. } => model.structure().functional_domains.len(),
            ArchivedModel::Flm { model } => model.structure.functional_domains.len(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read archive {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
