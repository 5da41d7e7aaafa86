//! Run configuration: a TOML file plus command-line overrides.
//!
//! ```toml
//! mode = "flat"            # or "hierarchical"
//! profile = "subtaskA"     # or an explicit [[modules]] list
//! c = 1.5
//! seed = 0
//! level = 1                # flat mode: only predict labels at this level
//! stopwords = "stop.txt"   # default: built-in German list
//!
//! [threshold]
//! policy = "fixed"         # fixed | lca | lca-labelwise
//! t = -0.25
//! normalize = false
//! fix_null = true
//!
//! [paths]
//! hierarchy = "hierarchy.tsv"
//! train = "train.jsonl"
//! dev = "dev.jsonl"
//! test = "test.jsonl"
//! model = "model"
//! out = "predictions.tsv"
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use hmtc_core::linclf::DEFAULT_C;
use hmtc_core::textfeat::{profile, PROFILE_NAMES};
use hmtc_core::{FeatureModuleSpec, Stopwords};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Flat,
    Hierarchical,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    #[default]
    Fixed,
    Lca,
    LcaLabelwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub policy: PolicyKind,
    pub t: f64,
    pub normalize: bool,
    pub fix_null: bool,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        ThresholdConfig {
            policy: PolicyKind::Fixed,
            t: 0.0,
            normalize: false,
            fix_null: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub hierarchy: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub profile: Option<String>,
    pub modules: Option<Vec<FeatureModuleSpec>>,
    pub c: f64,
    pub seed: u64,
    pub level: Option<usize>,
    pub stopwords: Option<PathBuf>,
    pub threshold: ThresholdConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Flat,
            profile: None,
            modules: None,
            c: DEFAULT_C,
            seed: 0,
            level: None,
            stopwords: None,
            threshold: ThresholdConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.stopwords);
        let Paths {
            hierarchy,
            train,
            dev,
            test,
            model,
            out,
        } = &mut self.paths;
        for p in [hierarchy, train, dev, test, model, out] {
            fix(p);
        }
    }

    /// Feature modules: the explicit list if given, else the named or mode-default profile.
    pub fn resolve_modules(&self) -> Result<Vec<FeatureModuleSpec>> {
        if let Some(m) = &self.modules {
            if self.profile.is_some() {
                return Err(CliError::config("set either `profile` or `modules`, not both"));
            }
            if m.is_empty() {
                return Err(CliError::config("`modules` is empty"));
            }
            for spec in m {
                spec.validate()?;
            }
            return Ok(m.clone());
        }
        let name = self.profile.as_deref().unwrap_or(match self.mode {
            Mode::Flat => "subtaskA",
            Mode::Hierarchical => "subtaskB-node",
        });
        profile(name).ok_or_else(|| {
            CliError::config(format!(
                "unknown profile {name:?}; known: {}",
                PROFILE_NAMES.join(", ")
            ))
        })
    }

    pub fn load_stopwords(&self) -> Result<Stopwords> {
        match &self.stopwords {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                Ok(Stopwords::parse(&text))
            }
            None => Ok(Stopwords::german()),
        }
    }
}

/// Returns the path or a config error naming what is missing.
pub fn require<'a>(path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| CliError::config(format!("missing {what} path (flag or [paths] entry)")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_full_file() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.resolve_modules().unwrap().len(), 5);

        let cfg = RunConfig::from_toml(
            r#"
            mode = "hierarchical"
            c = 0.5
            [threshold]
            policy = "lca-labelwise"
            normalize = true
            [paths]
            hierarchy = "h.tsv"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Hierarchical);
        assert_eq!(cfg.threshold.policy, PolicyKind::LcaLabelwise);
        assert_eq!(cfg.resolve_modules().unwrap().len(), 3);
    }

    #[test]
    fn explicit_modules() {
        let cfg = RunConfig::from_toml(
            r#"
            [[modules]]
            kind = "word"
            n_min = 1
            n_max = 2
            max_features = 10
            "#,
        )
        .unwrap();
        let m = cfg.resolve_modules().unwrap();
        assert_eq!(m, vec![FeatureModuleSpec::word(1, 2).with_max_features(10)]);
    }

    #[test]
    fn rejects_unknowns() {
        assert!(RunConfig::from_toml("colour = 1").is_err());
        let cfg = RunConfig::from_toml("profile = \"nope\"").unwrap();
        assert_eq!(cfg.resolve_modules().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn relative_paths_follow_the_file() {
        let mut cfg = RunConfig::from_toml("[paths]\ntrain = \"t.jsonl\"\nmodel = \"/abs\"").unwrap();
        cfg.resolve_relative(Path::new("/cfg"));
        assert_eq!(cfg.paths.train.unwrap(), PathBuf::from("/cfg/t.jsonl"));
        assert_eq!(cfg.paths.model.unwrap(), PathBuf::from("/abs"));
    }
}
