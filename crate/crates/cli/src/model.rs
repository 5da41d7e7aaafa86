//! Model directories.
//!
//! Flat:
//! ```text
//! manifest.json  hierarchy.tsv  features/  linear/
//! ```
//! Hierarchical:
//! ```text
//! manifest.json  hierarchy.tsv  hier.json  nodes/<node>/{features,linear}/
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use hmtc_core::fsutil::{create_dir, read_json, write_json};
use hmtc_core::{
    FeatureEnsemble, FeatureModuleSpec, HierModel, LabelTree, LinearModel, ScoreMatrix,
    ThresholdPolicy,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::Mode;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MODEL_FORMAT: &str = "hmtc-model/1";
const TREE_FILE: &str = "hierarchy.tsv";

/// Label statistics of the training set, kept for later calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub n_samples: usize,
    pub cardinality: f64,
    pub label_rates: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub mode: Mode,
    /// SHA-256 of the training-relevant configuration.
    pub config_hash: String,
    /// SHA-256 of the hierarchy and training documents.
    pub data_hash: String,
    pub seed: u64,
    pub c: f64,
    pub level: Option<usize>,
    pub profile: Vec<FeatureModuleSpec>,
    /// Labels the model can emit, in tree order.
    pub labels: Vec<String>,
    pub train: TrainSummary,
    /// `None` until a policy is stored by `train` (fixed) or `calibrate`.
    pub policy: Option<ThresholdPolicy>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Flat {
        tree: LabelTree,
        ensemble: FeatureEnsemble,
        linear: LinearModel,
    },
    Hierarchical(HierModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDir {
    pub manifest: Manifest,
    pub model: Model,
}

impl ModelDir {
    pub fn tree(&self) -> &LabelTree {
        match &self.model {
            Model::Flat { tree, .. } => tree,
            Model::Hierarchical(h) => h.tree(),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        match &self.model {
            Model::Flat {
                tree,
                ensemble,
                linear,
            } => {
                let p = dir.join(TREE_FILE);
                fs::write(&p, tree.to_tsv()).map_err(|e| CliError::io(&p, e))?;
                ensemble.save(&dir.join("features"))?;
                linear.save(&dir.join("linear"))?;
            }
            Model::Hierarchical(h) => h.save(dir)?,
        }
        self.save_manifest(dir)
    }

    pub fn save_manifest(&self, dir: &Path) -> Result<()> {
        Ok(write_json(&dir.join(MANIFEST_FILE), &self.manifest)?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.format != MODEL_FORMAT {
            return Err(CliError::in_file(
                dir.join(MANIFEST_FILE),
                hmtc_core::Error::ModelFormat(format!("unsupported format {:?}", manifest.format)),
            ));
        }
        let model = match manifest.mode {
            Mode::Flat => {
                let p = dir.join(TREE_FILE);
                let text = fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
                let tree = LabelTree::parse(text.lines()).map_err(|e| CliError::in_file(&p, e))?;
                let ensemble = FeatureEnsemble::load(&dir.join("features"))?;
                let linear = LinearModel::load(&dir.join("linear"))?;
                if linear.labels() != manifest.labels.as_slice() || linear.width() != ensemble.width() {
                    return Err(CliError::in_file(
                        dir,
                        hmtc_core::Error::ModelFormat("manifest, features and weights disagree".into()),
                    ));
                }
                Model::Flat {
                    tree,
                    ensemble,
                    linear,
                }
            }
            Mode::Hierarchical => Model::Hierarchical(HierModel::load(dir)?),
        };
        Ok(ModelDir { manifest, model })
    }

    /// Raw decision scores of a flat model.
    pub fn flat_scores<S: AsRef<str> + Sync>(&self, texts: &[S]) -> Result<ScoreMatrix> {
        match &self.model {
            Model::Flat {
                ensemble, linear, ..
            } => Ok(linear.decision_scores(&ensemble.transform_all(texts))?),
            Model::Hierarchical(_) => Err(CliError::config("not a flat model")),
        }
    }
}

/// Hex SHA-256 over a sequence of byte chunks, each length-prefixed.
pub fn sha256_hex<'a>(chunks: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for c in chunks {
        h.update((c.len() as u64).to_le_bytes());
        h.update(c);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_framed() {
        let a = sha256_hex([b"ab".as_slice(), b"c"]);
        assert_eq!(a, sha256_hex([b"ab".as_slice(), b"c"]));
        assert_ne!(a, sha256_hex([b"a".as_slice(), b"bc"]));
        assert_eq!(a.len(), 64);
    }
}
