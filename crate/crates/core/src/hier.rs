//! Local classifier per parent node.
//!
//! Every internal node of the label tree, plus the virtual root above the
//! root labels, owns its own feature ensemble and one-vs-rest model over its
//! children. A node is trained on the documents whose ancestor-closed gold
//! set contains it and that carry at least one of its children. Prediction
//! walks the tree top-down, descending only into assigned children, so every
//! prediction is ancestor-closed. Local scores are not rescaled between nodes.
//!
//! Children that cannot be trained (no positive or no negative local example)
//! get a fixed rule instead: always assign when at least 99% of the node's
//! documents carry them, never assign otherwise.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, LabelTree};
use crate::error::{Error, Result};
use crate::evalkit::micro_from_counts;
use crate::fsutil;
use crate::linclf::{train_ovr, LinearModel, TrainParams};
use crate::matrix::AssignmentMatrix;
use crate::textfeat::{FeatureEnsemble, FeatureModuleSpec, Stopwords};
use crate::threshold::ThresholdPolicy;

/// Positive rate at or above which an untrainable child is always assigned.
pub const ALWAYS_ASSIGN_RATE: f64 = 0.99;

const MANIFEST_FILE: &str = "hier.json";
const TREE_FILE: &str = "hierarchy.tsv";
const FORMAT_TAG: &str = "hmtc-hier/1";
const ROOT_DIR: &str = "_root";

/// A node that hosts a local classifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParentNode {
    VirtualRoot,
    Label(String),
}

impl ParentNode {
    pub fn label(name: impl Into<String>) -> Self {
        ParentNode::Label(name.into())
    }

    pub fn children<'t>(&self, tree: &'t LabelTree) -> &'t [String] {
        match self {
            ParentNode::VirtualRoot => tree.roots(),
            ParentNode::Label(l) => tree.children(l),
        }
    }

    /// File-system safe name: `_root`, or the label with every byte outside
    /// `[A-Za-z0-9-]` percent-encoded.
    pub fn dir_name(&self) -> String {
        match self {
            ParentNode::VirtualRoot => ROOT_DIR.to_string(),
            ParentNode::Label(l) => percent_encode(l),
        }
    }
}

impl std::fmt::Display for ParentNode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParentNode::VirtualRoot => f.write_str("<root>"),
            ParentNode::Label(l) => f.write_str(l),
        }
    }
}

fn percent_encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

/// Every node that needs a local model: the virtual root, then internal labels.
pub fn parent_nodes(tree: &LabelTree) -> Vec<ParentNode> {
    std::iter::once(ParentNode::VirtualRoot)
        .chain(tree.internal_labels().cloned().map(ParentNode::Label))
        .collect()
}

/// Training rows of one node: document indices and their child targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalDataset {
    pub docs: Vec<usize>,
    pub targets: Vec<BTreeSet<String>>,
}

impl LocalDataset {
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

pub fn build_local_dataset(node: &ParentNode, corpus: &Corpus, tree: &LabelTree) -> Result<LocalDataset> {
    let closed = corpus.closed_labels(tree)?;
    Ok(local_dataset_from_closed(node, &closed, tree))
}

/// Same as [`build_local_dataset`] over precomputed ancestor-closed gold sets.
pub fn local_dataset_from_closed(
    node: &ParentNode,
    closed: &[BTreeSet<String>],
    tree: &LabelTree,
) -> LocalDataset {
    let children = node.children(tree);
    let mut out = LocalDataset {
        docs: Vec::new(),
        targets: Vec::new(),
    };
    for (i, gold) in closed.iter().enumerate() {
        let targets: BTreeSet<String> = children.iter().filter(|c| gold.contains(*c)).cloned().collect();
        let keep = match node {
            ParentNode::VirtualRoot => true,
            ParentNode::Label(l) => gold.contains(l) && !targets.is_empty(),
        };
        if keep {
            out.docs.push(i);
            out.targets.push(targets);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FallbackRule {
    AlwaysAssign,
    NeverAssign,
}

impl FallbackRule {
    fn from_rate(rate: f64) -> Self {
        if rate >= ALWAYS_ASSIGN_RATE {
            FallbackRule::AlwaysAssign
        } else {
            FallbackRule::NeverAssign
        }
    }
}

/// What one parent node knows: a trained model over some children, fixed rules for the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeModel {
    pub local: Option<(FeatureEnsemble, LinearModel)>,
    pub skipped: BTreeMap<String, FallbackRule>,
}

impl NodeModel {
    /// Trained children in model column order.
    pub fn trained_children(&self) -> &[String] {
        self.local.as_ref().map_or(&[], |(_, m)| m.labels())
    }

    /// Raw local scores of the trained children for one text.
    pub fn scores(&self, text: &str) -> Vec<(String, f64)> {
        let Some((ens, model)) = &self.local else {
            return Vec::new();
        };
        let x = ens.transform(text);
        model
            .labels()
            .iter()
            .enumerate()
            .map(|(k, l)| (l.clone(), x.dot_dense(model.weights(k)) + model.bias(k)))
            .collect()
    }
}

/// Fits one node on its local texts and targets.
pub fn train_node<S: AsRef<str> + Sync>(
    children: &[String],
    texts: &[S],
    targets: &[BTreeSet<String>],
    profile: &[FeatureModuleSpec],
    stopwords: Option<&Stopwords>,
    params: &TrainParams,
) -> Result<NodeModel> {
    let n = texts.len();
    let rate = |c: &String| {
        if n == 0 {
            0.0
        } else {
            targets.iter().filter(|t| t.contains(c)).count() as f64 / n as f64
        }
    };
    let mut skipped = BTreeMap::new();
    let mut trainable = Vec::new();
    for c in children {
        let r = rate(c);
        if r == 0.0 || r == 1.0 {
            skipped.insert(c.clone(), FallbackRule::from_rate(r));
        } else {
            trainable.push(c.clone());
        }
    }
    if trainable.is_empty() {
        return Ok(NodeModel {
            local: None,
            skipped,
        });
    }
    let ensemble = match FeatureEnsemble::fit(texts, profile, stopwords) {
        Ok(e) => e,
        Err(Error::EmptyVocabulary) => {
            for c in trainable {
                let r = rate(&c);
                skipped.insert(c, FallbackRule::from_rate(r));
            }
            return Ok(NodeModel {
                local: None,
                skipped,
            });
        }
        Err(e) => return Err(e),
    };
    let x = ensemble.transform_all(texts);
    let y: Vec<BTreeSet<String>> = targets
        .iter()
        .map(|t| t.iter().filter(|l| trainable.contains(l)).cloned().collect())
        .collect();
    let model = train_ovr(&x, &y, &trainable, params)?;
    Ok(NodeModel {
        local: Some((ensemble, model)),
        skipped,
    })
}

/// The full set of local models over a label tree.
#[derive(Debug, Clone, PartialEq)]
pub struct HierModel {
    tree: LabelTree,
    nodes: BTreeMap<ParentNode, NodeModel>,
    profile: Vec<FeatureModuleSpec>,
    params: TrainParams,
}

/// One predicted label and its raw local score (`None` when a fixed rule assigned it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLabel {
    pub label: String,
    pub score: Option<f64>,
}

pub fn train_hier(
    corpus: &Corpus,
    tree: &LabelTree,
    profile: &[FeatureModuleSpec],
    stopwords: Option<&Stopwords>,
    params: &TrainParams,
) -> Result<HierModel> {
    if tree.is_empty() {
        return Err(Error::EmptyTree);
    }
    let closed = corpus.closed_labels(tree)?;
    let nodes = parent_nodes(tree);
    let trained = nodes
        .par_iter()
        .map(|node| {
            let data = local_dataset_from_closed(node, &closed, tree);
            let texts: Vec<&str> = data.docs.iter().map(|&i| corpus.docs()[i].text.as_str()).collect();
            let m = train_node(node.children(tree), &texts, &data.targets, profile, stopwords, params)?;
            Ok((node.clone(), m))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(HierModel {
        tree: tree.clone(),
        nodes: trained,
        profile: profile.to_vec(),
        params: *params,
    })
}

impl HierModel {
    pub fn tree(&self) -> &LabelTree {
        &self.tree
    }

    pub fn node(&self, node: &ParentNode) -> Option<&NodeModel> {
        self.nodes.get(node)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (&ParentNode, &NodeModel)> {
        self.nodes.iter()
    }

    pub fn profile(&self) -> &[FeatureModuleSpec] {
        &self.profile
    }

    pub fn params(&self) -> &TrainParams {
        &self.params
    }

    /// Number of nodes with a trained local model.
    pub fn n_local_models(&self) -> usize {
        self.nodes.values().filter(|n| n.local.is_some()).count()
    }

    /// Top-down prediction for one text.
    ///
    /// Only thresholds on the raw score scale are meaningful here; normalized
    /// calibrations are rejected. With `fix_null`, an empty result is replaced
    /// by the best-scoring root label alone.
    pub fn predict(&self, text: &str, policy: &ThresholdPolicy) -> Result<Vec<ScoredLabel>> {
        let mut out = Vec::new();
        let mut stack = vec![ParentNode::VirtualRoot];
        let mut root_scores = Vec::new();
        while let Some(node) = stack.pop() {
            let Some(nm) = self.nodes.get(&node) else {
                continue;
            };
            let scores = nm.scores(text);
            let mut assigned: Vec<ScoredLabel> = Vec::new();
            for (label, s) in &scores {
                let t = policy.raw_threshold(label).ok_or_else(|| {
                    Error::InvalidParameter(format!(
                        "threshold policy has no raw-scale threshold for {label:?}"
                    ))
                })?;
                if *s > t {
                    assigned.push(ScoredLabel {
                        label: label.clone(),
                        score: Some(*s),
                    });
                }
            }
            for (label, rule) in &nm.skipped {
                if *rule == FallbackRule::AlwaysAssign {
                    assigned.push(ScoredLabel {
                        label: label.clone(),
                        score: None,
                    });
                }
            }
            if node == ParentNode::VirtualRoot {
                root_scores = scores;
            }
            assigned.sort_by_key(|s| self.tree.position(&s.label));
            for s in assigned.iter().rev() {
                if !self.tree.children(&s.label).is_empty() {
                    stack.push(ParentNode::Label(s.label.clone()));
                }
            }
            out.extend(assigned);
        }
        out.sort_by_key(|s| self.tree.position(&s.label));
        if out.is_empty() && policy.fix_null {
            let best = root_scores
                .iter()
                .fold(None::<&(String, f64)>, |best, cur| match best {
                    Some(b) if b.1 >= cur.1 => best,
                    _ => Some(cur),
                });
            out.push(match best {
                Some((l, s)) => ScoredLabel {
                    label: l.clone(),
                    score: Some(*s),
                },
                None => ScoredLabel {
                    label: self.tree.roots()[0].clone(),
                    score: None,
                },
            });
        }
        Ok(out)
    }

    pub fn predict_all<S: AsRef<str> + Sync>(
        &self,
        texts: &[S],
        policy: &ThresholdPolicy,
    ) -> Result<Vec<Vec<ScoredLabel>>> {
        texts
            .par_iter()
            .map(|t| self.predict(t.as_ref(), policy))
            .collect()
    }

    /// Predictions as a matrix over all tree labels in tree order.
    pub fn to_assignment(&self, preds: &[Vec<ScoredLabel>]) -> AssignmentMatrix {
        let mut m = AssignmentMatrix::empty(self.tree.labels().to_vec(), preds.len());
        for (r, p) in preds.iter().enumerate() {
            for s in p {
                if let Some(c) = self.tree.position(&s.label) {
                    m.set(r, c, true);
                }
            }
        }
        m
    }

    /// Writes the tree, a manifest and one ensemble + linear model per trained node.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fsutil::create_dir(dir)?;
        let tree_path = dir.join(TREE_FILE);
        fs::write(&tree_path, self.tree.to_tsv()).map_err(|e| Error::io(&tree_path, e))?;
        let mut entries = Vec::new();
        for (node, nm) in &self.nodes {
            let sub = nm.local.as_ref().map(|_| format!("nodes/{}", node.dir_name()));
            if let (Some(sub), Some((ens, model))) = (&sub, &nm.local) {
                ens.save(&dir.join(sub).join("features"))?;
                model.save(&dir.join(sub).join("linear"))?;
            }
            entries.push(NodeEntry {
                node: match node {
                    ParentNode::VirtualRoot => None,
                    ParentNode::Label(l) => Some(l.clone()),
                },
                dir: sub,
                skipped: nm.skipped.clone(),
            });
        }
        let manifest = HierManifest {
            format: FORMAT_TAG.into(),
            profile: self.profile.clone(),
            params: self.params,
            nodes: entries,
        };
        fsutil::write_json(&dir.join(MANIFEST_FILE), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: HierManifest = fsutil::read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.format != FORMAT_TAG {
            return Err(Error::ModelFormat(format!(
                "unsupported hierarchical model format {:?}",
                manifest.format
            )));
        }
        let tree_path = dir.join(TREE_FILE);
        let text = fs::read_to_string(&tree_path).map_err(|e| Error::io(&tree_path, e))?;
        let tree = LabelTree::parse(text.lines())?;
        let mut nodes = BTreeMap::new();
        for e in manifest.nodes {
            let node = match e.node {
                None => ParentNode::VirtualRoot,
                Some(l) if tree.contains(&l) => ParentNode::Label(l),
                Some(l) => return Err(Error::UnknownLabel(l)),
            };
            let local = match &e.dir {
                Some(sub) => Some((
                    FeatureEnsemble::load(&dir.join(sub).join("features"))?,
                    LinearModel::load(&dir.join(sub).join("linear"))?,
                )),
                None => None,
            };
            let nm = NodeModel {
                local,
                skipped: e.skipped,
            };
            let mut covered: Vec<&String> = nm.trained_children().iter().chain(nm.skipped.keys()).collect();
            covered.sort();
            let mut expected: Vec<&String> = node.children(&tree).iter().collect();
            expected.sort();
            if covered != expected {
                return Err(Error::ModelFormat(format!(
                    "node {node} does not cover exactly its children"
                )));
            }
            nodes.insert(node, nm);
        }
        if nodes.len() != parent_nodes(&tree).len() {
            return Err(Error::ModelFormat("manifest is missing parent nodes".into()));
        }
        Ok(HierModel {
            tree,
            nodes,
            profile: manifest.profile,
            params: manifest.params,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct HierManifest {
    format: String,
    profile: Vec<FeatureModuleSpec>,
    params: TrainParams,
    nodes: Vec<NodeEntry>,
}

#[derive(Serialize, Deserialize)]
struct NodeEntry {
    /// `None` for the virtual root.
    node: Option<String>,
    dir: Option<String>,
    skipped: BTreeMap<String, FallbackRule>,
}

/// Candidate feature profiles × C values evaluated by cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeGridSpec {
    pub profiles: Vec<Vec<FeatureModuleSpec>>,
    pub c_values: Vec<f64>,
    pub folds: usize,
    /// Fixed threshold used to score held-out folds.
    pub threshold: f64,
}

/// Winning grid entry.
#[derive(Debug, Clone, PartialEq)]
pub struct GridChoice {
    pub profile_index: usize,
    pub c: f64,
    pub mean_f1: f64,
    /// Mean F1 of every candidate, profiles outer, C inner.
    pub scores: Vec<f64>,
}

/// Exhaustive cross-validated grid search for one node.
///
/// Folds are stratified by each document's first (lexicographically smallest)
/// target. Ties keep the earliest grid entry.
pub fn grid_search_node(
    node: &ParentNode,
    corpus: &Corpus,
    tree: &LabelTree,
    grid: &NodeGridSpec,
    stopwords: Option<&Stopwords>,
    seed: u64,
) -> Result<GridChoice> {
    if grid.profiles.is_empty() || grid.c_values.is_empty() {
        return Err(Error::InvalidParameter("grid is empty".into()));
    }
    if grid.folds < 2 {
        return Err(Error::InvalidParameter("need at least 2 folds".into()));
    }
    let data = build_local_dataset(node, corpus, tree)?;
    if data.len() < grid.folds {
        return Err(Error::InsufficientData(format!(
            "node {node} has {} local documents for {} folds",
            data.len(),
            grid.folds
        )));
    }
    let fold_of = stratified_folds(&data.targets, grid.folds, seed);
    let children = node.children(tree);
    let texts: Vec<&str> = data.docs.iter().map(|&i| corpus.docs()[i].text.as_str()).collect();

    let candidates: Vec<(usize, f64)> = (0..grid.profiles.len())
        .flat_map(|p| grid.c_values.iter().map(move |&c| (p, c)))
        .collect();
    let scores = candidates
        .par_iter()
        .map(|&(p, c)| {
            let params = TrainParams::default().with_c(c).with_seed(seed);
            let mut total = 0.0;
            for f in 0..grid.folds {
                let (train, test): (Vec<usize>, Vec<usize>) =
                    (0..texts.len()).partition(|&i| fold_of[i] != f);
                let tr_texts: Vec<&str> = train.iter().map(|&i| texts[i]).collect();
                let tr_targets: Vec<BTreeSet<String>> =
                    train.iter().map(|&i| data.targets[i].clone()).collect();
                let nm = train_node(children, &tr_texts, &tr_targets, &grid.profiles[p], stopwords, &params)?;
                let (mut tp, mut fp, mut fn_) = (0, 0, 0);
                for &i in &test {
                    let mut pred = BTreeSet::new();
                    for (l, s) in nm.scores(texts[i]) {
                        if s > grid.threshold {
                            pred.insert(l);
                        }
                    }
                    for (l, r) in &nm.skipped {
                        if *r == FallbackRule::AlwaysAssign {
                            pred.insert(l.clone());
                        }
                    }
                    let gold = &data.targets[i];
                    tp += pred.intersection(gold).count();
                    fp += pred.difference(gold).count();
                    fn_ += gold.difference(&pred).count();
                }
                total += micro_from_counts(tp, fp, fn_).f1;
            }
            Ok(total / grid.folds as f64)
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut best = 0;
    for (k, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = k;
        }
    }
    Ok(GridChoice {
        profile_index: candidates[best].0,
        c: candidates[best].1,
        mean_f1: scores[best],
        scores,
    })
}

/// Fold index per row; rows sharing a first target are spread round-robin.
fn stratified_folds(targets: &[BTreeSet<String>], folds: usize, seed: u64) -> Vec<usize> {
    let mut groups: BTreeMap<Option<&String>, Vec<usize>> = BTreeMap::new();
    for (i, t) in targets.iter().enumerate() {
        groups.entry(t.iter().next()).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0; targets.len()];
    let mut next = 0;
    for rows in groups.values_mut() {
        rows.shuffle(&mut rng);
        for &i in rows.iter() {
            fold_of[i] = next % folds;
            next += 1;
        }
    }
    fold_of
}
