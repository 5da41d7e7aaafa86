//! Hierarchical multi-label text classification.
//!
//! The pipeline is: parse a label tree and a document corpus ([`corpus`]),
//! extract TF-IDF n-gram feature ensembles ([`textfeat`]), train one-vs-rest
//! linear max-margin models ([`linclf`]) either flat or as a local classifier
//! per parent node ([`hier`]), then turn raw decision scores into label sets
//! with a threshold policy ([`threshold`]) and score them ([`evalkit`]).
//! [`syncorpus`] generates labelled tree corpora for testing.

pub mod corpus;
pub mod error;
pub mod evalkit;
pub mod fsutil;
pub mod hier;
pub mod linclf;
pub mod matrix;
pub mod sparse;
pub mod syncorpus;
pub mod textfeat;
pub mod threshold;

pub use corpus::{Corpus, DatasetStats, Document, LabelTree};
pub use error::{Error, Result};
pub use evalkit::{EvalReport, LabelConfusion, MicroScores, SweepResult};
pub use hier::{HierModel, ParentNode};
pub use linclf::{LinearModel, TrainParams};
pub use matrix::{AssignmentMatrix, ScoreMatrix};
pub use sparse::{FeatureMatrix, SparseVector};
pub use textfeat::{FeatureEnsemble, FeatureKind, FeatureModuleSpec, FittedFeatureModule, Stopwords};
pub use threshold::{ThresholdPolicy, ThresholdRule};
