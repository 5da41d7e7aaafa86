//! `hmtc`: train, calibrate, apply and evaluate hierarchical multi-label text classifiers.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical or degenerate input (constant scores, degenerate labels,
//! too few sweep points).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hmtc_core::syncorpus::GeneratorSpec;

pub mod commands;
pub mod config;
pub mod error;
pub mod model;

pub use config::{Mode, PolicyKind, RunConfig};
pub use error::{CliError, Result};
pub use model::{Manifest, ModelDir};

#[derive(Debug, Parser)]
#[command(name = "hmtc", version, about = "Hierarchical multi-label text classification")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command; they override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<Mode>,
    /// Named feature profile (subtaskA, subtaskB-node).
    #[arg(long, global = true)]
    pub profile: Option<String>,
    /// Fixed threshold; at predict time it replaces the stored policy.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub threshold: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub policy: Option<PolicyKind>,
    /// Calibrate on min-max normalized scores.
    #[arg(long, global = true)]
    pub normalize: bool,
    /// Give rows without labels their best-scoring label.
    #[arg(long, global = true)]
    pub fix_null: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Regularization constant C.
    #[arg(long = "c", global = true)]
    pub c: Option<f64>,
    /// Flat mode: restrict labels to one tree level (roots are level 1).
    #[arg(long, global = true)]
    pub level: Option<usize>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub hierarchy: Option<PathBuf>,
    /// Model directory.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl GlobalArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(p) = &self.profile {
            cfg.profile = Some(p.clone());
            cfg.modules = None;
        }
        if let Some(t) = self.threshold {
            cfg.threshold.t = t;
        }
        if let Some(p) = self.policy {
            cfg.threshold.policy = p;
        }
        cfg.threshold.normalize |= self.normalize;
        cfg.threshold.fix_null |= self.fix_null;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(c) = self.c {
            cfg.c = c;
        }
        if let Some(l) = self.level {
            cfg.level = Some(l);
        }
        if let Some(h) = &self.hierarchy {
            cfg.paths.hierarchy = Some(h.clone());
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit features and classifiers; writes a model directory to --out.
    Train {
        /// Training documents (JSONL).
        #[arg(long)]
        train: Option<PathBuf>,
    },
    /// Compute a threshold policy on dev documents and store it in the model manifest.
    Calibrate {
        #[arg(long)]
        dev: Option<PathBuf>,
    },
    /// Write `doc_id<TAB>label…` predictions.
    Predict {
        #[arg(long)]
        docs: Option<PathBuf>,
        /// Also write raw scores as JSONL.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Score predictions against gold documents, or sum a confusion-count table.
    Evaluate {
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Confusion counts TSV instead of gold/pred.
        #[arg(long, conflicts_with_all = ["gold", "pred"])]
        counts: Option<PathBuf>,
    },
    /// Micro scores over a grid of fixed thresholds with a quadratic fit.
    Sweep {
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        t_min: f64,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        t_max: f64,
        #[arg(long, default_value_t = 21)]
        steps: usize,
    },
    /// Label cardinality and density of a document set.
    Stats {
        #[arg(long)]
        docs: Option<PathBuf>,
    },
    /// Generate a synthetic corpus into --out.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 3)]
    pub roots: usize,
    #[arg(long, default_value_t = 3)]
    pub branching: usize,
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    #[arg(long, default_value_t = 40)]
    pub docs_per_leaf: usize,
    #[arg(long, default_value_t = 20)]
    pub keywords_per_node: usize,
    #[arg(long, default_value_t = 4)]
    pub tokens_per_node: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.2)]
    pub multi_label_rate: f64,
    /// Also write train.jsonl / test.jsonl with this test fraction.
    #[arg(long)]
    pub holdout: Option<f64>,
}

impl GenArgs {
    pub fn spec(&self, seed: u64) -> GeneratorSpec {
        GeneratorSpec {
            roots: self.roots,
            branching: self.branching,
            depth: self.depth,
            docs_per_leaf: self.docs_per_leaf,
            keywords_per_node: self.keywords_per_node,
            tokens_per_node: self.tokens_per_node,
            noise_rate: self.noise,
            multi_label_rate: self.multi_label_rate,
            seed,
        }
    }
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match commands::execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
