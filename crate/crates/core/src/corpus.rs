//! Label hierarchy, document collections and dataset statistics.
//!
//! The hierarchy is read from a tab-separated edge list, one
//! `parent<TAB>child` pair per line. A line holding a single label declares
//! a root label with no children, which is the only way a childless root can
//! be written down. Documents are JSON lines with `id`, `text` and `labels`.

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A tree of labels under an implicit virtual root.
///
/// Labels are kept in a canonical depth-first order (roots and child lists
/// sorted), so two trees built from the same edges compare equal no matter
/// how the edges were ordered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTree {
    order: Vec<String>,
    index: BTreeMap<String, usize>,
    parent: BTreeMap<String, String>,
    children: BTreeMap<String, Vec<String>>,
    roots: Vec<String>,
    level: BTreeMap<String, usize>,
}

impl LabelTree {
    /// Parses a hierarchy from text lines (LF or CRLF).
    pub fn parse<I, S>(lines: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut edges = Vec::new();
        let mut standalone = Vec::new();
        for (i, raw) in lines.into_iter().enumerate() {
            let line = raw.as_ref().trim_end_matches(['\r', '\n']);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
            if fields.iter().any(|f| f.is_empty()) {
                return Err(Error::Format {
                    line: i + 1,
                    msg: "empty label".into(),
                });
            }
            match fields.as_slice() {
                [label] => standalone.push(label.to_string()),
                [parent, child] => edges.push((parent.to_string(), child.to_string())),
                _ => {
                    return Err(Error::Format {
                        line: i + 1,
                        msg: format!("expected 2 tab-separated fields, found {}", fields.len()),
                    })
                }
            }
        }
        Self::build(edges, standalone)
    }

    /// Reads a hierarchy file from any buffered reader.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let lines = reader
            .lines()
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::Format {
                line: 0,
                msg: e.to_string(),
            })?;
        Self::parse(lines)
    }

    /// Builds a tree from `(parent, child)` edges plus labels that only exist as roots.
    pub fn from_edges<I>(edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        Self::build(edges.into_iter().collect(), Vec::new())
    }

    fn build(edges: Vec<(String, String)>, standalone: Vec<String>) -> Result<Self> {
        let mut nodes: BTreeSet<String> = standalone.into_iter().collect();
        let mut parent: BTreeMap<String, String> = BTreeMap::new();
        let mut children: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (p, c) in edges {
            if p == c {
                return Err(Error::Cycle(c));
            }
            if let Some(existing) = parent.get(&c) {
                if *existing != p {
                    return Err(Error::MultiParent {
                        child: c,
                        first: existing.clone(),
                        second: p,
                    });
                }
                continue;
            }
            nodes.insert(p.clone());
            nodes.insert(c.clone());
            children.entry(p.clone()).or_default().push(c.clone());
            parent.insert(c, p);
        }
        if nodes.is_empty() {
            return Err(Error::EmptyTree);
        }
        for list in children.values_mut() {
            list.sort();
        }
        let roots: Vec<String> = nodes
            .iter()
            .filter(|n| !parent.contains_key(*n))
            .cloned()
            .collect();

        let mut level = BTreeMap::new();
        let mut queue: VecDeque<(String, usize)> = roots.iter().map(|r| (r.clone(), 1)).collect();
        while let Some((node, depth)) = queue.pop_front() {
            if let Some(kids) = children.get(&node) {
                queue.extend(kids.iter().map(|k| (k.clone(), depth + 1)));
            }
            level.insert(node, depth);
        }
        if let Some(lost) = nodes.iter().find(|n| !level.contains_key(*n)) {
            // single-parent edges: anything unreachable from a root sits on a cycle
            return Err(Error::Cycle(lost.clone()));
        }

        let mut order = Vec::with_capacity(nodes.len());
        let mut stack: Vec<&String> = roots.iter().rev().collect();
        while let Some(node) = stack.pop() {
            order.push(node.clone());
            if let Some(kids) = children.get(node) {
                stack.extend(kids.iter().rev());
            }
        }
        let index = order
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Ok(LabelTree {
            order,
            index,
            parent,
            children,
            roots,
            level,
        })
    }

    /// Writes the tree back in the edge-list format accepted by [`LabelTree::parse`].
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for label in &self.order {
            match self.parent.get(label) {
                Some(p) => {
                    out.push_str(p);
                    out.push('\t');
                    out.push_str(label);
                    out.push('\n');
                }
                None if !self.children.contains_key(label) => {
                    out.push_str(label);
                    out.push('\n');
                }
                None => {}
            }
        }
        out
    }

    /// All labels, parents before children.
    pub fn labels(&self) -> &[String] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }

    /// Position of `label` in [`LabelTree::labels`].
    pub fn position(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn parent(&self, label: &str) -> Option<&str> {
        self.parent.get(label).map(String::as_str)
    }

    /// Children of a label, sorted. Empty for leaves and unknown labels.
    pub fn children(&self, label: &str) -> &[String] {
        self.children.get(label).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Root labels, i.e. the children of the virtual root.
    pub fn roots(&self) -> &[String] {
        &self.roots
    }

    /// Depth of a label; root labels are level 1.
    pub fn level(&self, label: &str) -> Option<usize> {
        self.level.get(label).copied()
    }

    pub fn max_level(&self) -> usize {
        self.level.values().copied().max().unwrap_or(0)
    }

    pub fn labels_at_level(&self, level: usize) -> Vec<String> {
        self.order
            .iter()
            .filter(|l| self.level[*l] == level)
            .cloned()
            .collect()
    }

    /// Labels that have at least one child.
    pub fn internal_labels(&self) -> impl Iterator<Item = &String> {
        self.order.iter().filter(|l| self.children.contains_key(*l))
    }

    /// Returns `labels` together with all their ancestors.
    pub fn expand_ancestors<'a, I>(&self, labels: I) -> Result<BTreeSet<String>>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut out = BTreeSet::new();
        for label in labels {
            if !self.contains(label) {
                return Err(Error::UnknownLabel(label.clone()));
            }
            let mut cur = Some(label.as_str());
            while let Some(l) = cur {
                if !out.insert(l.to_string()) {
                    break;
                }
                cur = self.parent(l);
            }
        }
        Ok(out)
    }
}

/// A single text with its gold labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Document {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub labels: BTreeSet<String>,
}

/// Documents in input order with unique ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    docs: Vec<Document>,
}

impl Corpus {
    pub fn new(docs: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(docs.len());
        for d in &docs {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        Ok(Corpus { docs })
    }

    /// Reads JSON-lines records. Blank lines are skipped.
    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut docs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::Format {
                line: i + 1,
                msg: e.to_string(),
            })?;
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let doc: Document = serde_json::from_str(line).map_err(|e| Error::Format {
                line: i + 1,
                msg: e.to_string(),
            })?;
            docs.push(doc);
        }
        Corpus::new(docs)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for d in &self.docs {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.docs.iter().find(|d| d.id == id)
    }

    /// Checks that every gold label exists in `tree`.
    pub fn validate(&self, tree: &LabelTree) -> Result<()> {
        for d in &self.docs {
            if let Some(bad) = d.labels.iter().find(|l| !tree.contains(l)) {
                return Err(Error::UnknownLabel(bad.clone()));
            }
        }
        Ok(())
    }

    /// Ancestor-closed gold label sets, one per document.
    pub fn closed_labels(&self, tree: &LabelTree) -> Result<Vec<BTreeSet<String>>> {
        self.docs
            .iter()
            .map(|d| tree.expand_ancestors(&d.labels))
            .collect()
    }

    /// Seeded shuffle split; the second corpus holds `round(fraction * n)` documents.
    pub fn split(&self, fraction: f64, seed: u64) -> (Corpus, Corpus) {
        let mut idx: Vec<usize> = (0..self.docs.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_held = ((fraction.clamp(0.0, 1.0)) * self.docs.len() as f64).round() as usize;
        let (held, kept) = idx.split_at(n_held);
        let mut kept = kept.to_vec();
        let mut held = held.to_vec();
        kept.sort_unstable();
        held.sort_unstable();
        let pick = |ix: &[usize]| Corpus {
            docs: ix.iter().map(|&i| self.docs[i].clone()).collect(),
        };
        (pick(&kept), pick(&held))
    }
}

impl FromIterator<Document> for Corpus {
    /// Collects without checking id uniqueness; use [`Corpus::new`] for untrusted input.
    fn from_iter<T: IntoIterator<Item = Document>>(iter: T) -> Self {
        Corpus {
            docs: iter.into_iter().collect(),
        }
    }
}

/// Label cardinality and density of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_samples: usize,
    pub n_labels: usize,
    pub cardinality: f64,
    pub density: f64,
}

/// Counts gold labels as stored (not ancestor-closed), optionally only those at `level_filter`.
pub fn dataset_stats(
    corpus: &Corpus,
    tree: &LabelTree,
    level_filter: Option<usize>,
) -> Result<DatasetStats> {
    corpus.validate(tree)?;
    let keep = |l: &str| level_filter.is_none_or(|lv| tree.level(l) == Some(lv));
    let n_labels = tree.labels().iter().filter(|l| keep(l)).count();
    let total: usize = corpus
        .docs()
        .iter()
        .map(|d| d.labels.iter().filter(|l| keep(l)).count())
        .sum();
    let cardinality = if corpus.is_empty() {
        0.0
    } else {
        total as f64 / corpus.len() as f64
    };
    let density = if n_labels == 0 {
        0.0
    } else {
        cardinality / n_labels as f64
    };
    Ok(DatasetStats {
        n_samples: corpus.len(),
        n_labels,
        cardinality,
        density,
    })
}
