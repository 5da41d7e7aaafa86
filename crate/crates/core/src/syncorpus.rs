//! Seeded synthetic corpora over a uniform label tree.
//!
//! Every node owns a disjoint set of made-up keywords. A document picks a
//! leaf, draws `tokens_per_node` keywords from each node on the path to it,
//! and swaps each drawn token for a shared filler word with probability
//! `noise_rate`. With probability `multi_label_rate` a second leaf is drawn
//! independently and its path contributes keywords and labels as well. Gold
//! label sets are therefore ancestor-closed.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, LabelTree};
use crate::error::{Error, Result};
use crate::textfeat::Stopwords;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    /// Number of root labels.
    pub roots: usize,
    /// Children per internal node below the roots.
    pub branching: usize,
    /// Levels in the tree; 1 means roots only.
    pub depth: usize,
    pub docs_per_leaf: usize,
    /// Keyword vocabulary size per node.
    pub keywords_per_node: usize,
    /// Keywords drawn per path node per document.
    pub tokens_per_node: usize,
    pub noise_rate: f64,
    pub multi_label_rate: f64,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            roots: 3,
            branching: 3,
            depth: 3,
            docs_per_leaf: 40,
            keywords_per_node: 20,
            tokens_per_node: 4,
            noise_rate: 0.05,
            multi_label_rate: 0.2,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if self.depth < 1 || self.roots < 1 || (self.depth > 1 && self.branching < 1) {
            return Err(Error::InvalidParameter(
                "need depth >= 1, roots >= 1 and branching >= 1".into(),
            ));
        }
        if !rate_ok(self.noise_rate) || !rate_ok(self.multi_label_rate) {
            return Err(Error::InvalidParameter("rates must lie in [0, 1]".into()));
        }
        if self.keywords_per_node == 0 || self.tokens_per_node == 0 {
            return Err(Error::InvalidParameter(
                "keywords_per_node and tokens_per_node must be positive".into(),
            ));
        }
        Ok(())
    }
}

const FILLER_WORDS: usize = 50;

struct Node {
    label: String,
    parent: Option<usize>,
    keywords: Vec<String>,
}

fn random_word(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(6..=9);
    (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
}

pub fn generate(spec: &GeneratorSpec) -> Result<(Corpus, LabelTree)> {
    generate_with_keywords(spec).map(|(c, t, _)| (c, t))
}

/// Like [`generate`], also returning each label's keyword set.
pub fn generate_with_keywords(
    spec: &GeneratorSpec,
) -> Result<(Corpus, LabelTree, BTreeMap<String, Vec<String>>)> {
    spec.validate()?;
    let mut vocab_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let stopwords = Stopwords::german();
    let mut used = HashSet::new();
    let mut fresh = |rng: &mut ChaCha8Rng| loop {
        let w = random_word(rng);
        if !stopwords.contains(&w) && used.insert(w.clone()) {
            break w;
        }
    };

    let mut nodes: Vec<Node> = Vec::new();
    let mut frontier: Vec<usize> = Vec::new();
    for r in 0..spec.roots {
        let keywords = (0..spec.keywords_per_node).map(|_| fresh(&mut vocab_rng)).collect();
        nodes.push(Node {
            label: format!("L{}", r + 1),
            parent: None,
            keywords,
        });
        frontier.push(nodes.len() - 1);
    }
    for _ in 1..spec.depth {
        let mut next = Vec::new();
        for &p in &frontier {
            for c in 0..spec.branching {
                let keywords = (0..spec.keywords_per_node).map(|_| fresh(&mut vocab_rng)).collect();
                nodes.push(Node {
                    label: format!("{}.{}", nodes[p].label, c + 1),
                    parent: Some(p),
                    keywords,
                });
                next.push(nodes.len() - 1);
            }
        }
        frontier = next;
    }
    let leaves = frontier;
    let filler: Vec<String> = (0..FILLER_WORDS).map(|_| fresh(&mut vocab_rng)).collect();

    let mut edges = Vec::new();
    let mut roots = Vec::new();
    for n in &nodes {
        match n.parent {
            Some(p) => edges.push((nodes[p].label.clone(), n.label.clone())),
            None => roots.push(n.label.clone()),
        }
    }
    let tree = LabelTree::parse(
        roots
            .iter()
            .cloned()
            .chain(edges.iter().map(|(p, c)| format!("{p}\t{c}"))),
    )?;

    let path = |leaf: usize| {
        let mut out = vec![leaf];
        while let Some(p) = nodes[*out.last().unwrap()].parent {
            out.push(p);
        }
        out.reverse();
        out
    };

    let mut docs = Vec::with_capacity(leaves.len() * spec.docs_per_leaf);
    for (li, &leaf) in leaves.iter().enumerate() {
        for k in 0..spec.docs_per_leaf {
            let index = li * spec.docs_per_leaf + k;
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(index as u64 + 1);

            let mut paths = vec![path(leaf)];
            if rng.random::<f64>() < spec.multi_label_rate {
                let other = *leaves.choose(&mut rng).unwrap();
                paths.push(path(other));
            }
            let mut labels = BTreeSet::new();
            let mut tokens = Vec::new();
            for p in &paths {
                for &n in p {
                    labels.insert(nodes[n].label.clone());
                    for _ in 0..spec.tokens_per_node {
                        let word = if rng.random::<f64>() < spec.noise_rate {
                            filler.choose(&mut rng).unwrap()
                        } else {
                            nodes[n].keywords.choose(&mut rng).unwrap()
                        };
                        tokens.push(word.as_str());
                    }
                }
            }
            tokens.shuffle(&mut rng);
            docs.push(Document {
                id: format!("doc{index:06}"),
                text: tokens.join(" "),
                labels,
            });
        }
    }
    let keywords = nodes.into_iter().map(|n| (n.label, n.keywords)).collect();
    Ok((Corpus::new(docs)?, tree, keywords))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::dataset_stats;

    #[test]
    fn depth_one_two_roots() {
        let spec = GeneratorSpec {
            roots: 2,
            depth: 1,
            docs_per_leaf: 10,
            noise_rate: 0.0,
            multi_label_rate: 0.0,
            ..GeneratorSpec::default()
        };
        let (corpus, tree) = generate(&spec).unwrap();
        assert_eq!(corpus.len(), 20);
        assert_eq!(tree.len(), 2);
        let s = dataset_stats(&corpus, &tree, None).unwrap();
        assert_eq!(s.cardinality, 1.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = GeneratorSpec::default();
        let render = |c: &Corpus| {
            let mut buf = Vec::new();
            c.write_jsonl(&mut buf).unwrap();
            buf
        };
        let (a, ta) = generate(&spec).unwrap();
        let (b, tb) = generate(&spec).unwrap();
        assert_eq!(render(&a), render(&b));
        assert_eq!(ta.to_tsv(), tb.to_tsv());
        let (c, _) = generate(&GeneratorSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(render(&a), render(&c));
    }

    #[test]
    fn gold_sets_are_ancestor_closed() {
        let (corpus, tree) = generate(&GeneratorSpec::default()).unwrap();
        for d in corpus.docs() {
            assert_eq!(tree.expand_ancestors(&d.labels).unwrap(), d.labels);
        }
    }

    #[test]
    fn keyword_sets_are_disjoint() {
        let (corpus, _, kw) = generate_with_keywords(&GeneratorSpec::default()).unwrap();
        let total: usize = kw.values().map(Vec::len).sum();
        let distinct: HashSet<&String> = kw.values().flatten().collect();
        assert_eq!(total, distinct.len());
        // noise-free documents only use keywords of their own labels
        let (clean, _, kw) = generate_with_keywords(&GeneratorSpec {
            noise_rate: 0.0,
            ..GeneratorSpec::default()
        })
        .unwrap();
        for d in clean.docs() {
            for tok in d.text.split(' ') {
                let owner = kw.iter().find(|(_, v)| v.iter().any(|w| w == tok)).unwrap().0;
                assert!(d.labels.contains(owner));
            }
        }
        assert!(!corpus.is_empty());
    }

    #[test]
    fn invalid_specs() {
        let bad = GeneratorSpec {
            noise_rate: 1.5,
            ..GeneratorSpec::default()
        };
        assert!(generate(&bad).is_err());
        let bad = GeneratorSpec {
            depth: 0,
            ..GeneratorSpec::default()
        };
        assert!(generate(&bad).is_err());
    }
}
