use std::collections::BTreeSet;

use hmtc_core::corpus::LabelTree;
use hmtc_core::syncorpus::{generate, GeneratorSpec};

fn path(tree: &LabelTree, leaf: &str) -> BTreeSet<String> {
    tree.expand_ancestors(&[leaf.to_string()]).unwrap()
}

/// Mean and variance of the closed label count per document, by enumerating leaf pairs.
fn cardinality_moments(tree: &LabelTree, rate: f64) -> (f64, f64) {
    let leaves: Vec<&String> = tree.labels().iter().filter(|l| tree.children(l).is_empty()).collect();
    let n = leaves.len() as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for a in &leaves {
        let pa = path(tree, a);
        let base = pa.len() as f64;
        m1 += (1.0 - rate) * base / n;
        m2 += (1.0 - rate) * base * base / n;
        for b in &leaves {
            let k = pa.union(&path(tree, b)).count() as f64;
            m1 += rate * k / (n * n);
            m2 += rate * k * k / (n * n);
        }
    }
    (m1, m2 - m1 * m1)
}

#[test]
fn two_roots_always_multi_label() {
    let spec = GeneratorSpec {
        roots: 2,
        depth: 1,
        multi_label_rate: 1.0,
        docs_per_leaf: 1,
        ..GeneratorSpec::default()
    };
    let (_, tree) = generate(&spec).unwrap();
    let (mean, _) = cardinality_moments(&tree, 1.0);
    assert!((mean - 1.5).abs() < 1e-12);
}

#[test]
fn cardinality_within_three_sigma() {
    for seed in 0..5 {
        for (depth, rate) in [(1, 0.5), (2, 0.2), (3, 0.2), (3, 0.8)] {
            let spec = GeneratorSpec {
                depth,
                multi_label_rate: rate,
                seed,
                ..GeneratorSpec::default()
            };
            let (corpus, tree) = generate(&spec).unwrap();
            let closed = corpus.closed_labels(&tree).unwrap();
            let observed = closed.iter().map(BTreeSet::len).sum::<usize>() as f64 / closed.len() as f64;
            let (mean, var) = cardinality_moments(&tree, rate);
            let sigma = (var / closed.len() as f64).sqrt();
            assert!(
                (observed - mean).abs() <= 3.0 * sigma,
                "seed {seed} depth {depth}: {observed} vs {mean} ± {sigma}"
            );
        }
    }
}

#[test]
fn shape_of_the_generated_tree() {
    let spec = GeneratorSpec::default();
    let (corpus, tree) = generate(&spec).unwrap();
    assert_eq!(tree.len(), 3 + 9 + 27);
    assert_eq!(tree.max_level(), 3);
    assert_eq!(corpus.len(), 27 * 40);
    assert_eq!(corpus.docs()[0].id, "doc000000");
    assert!(tree.contains("L3.3.3"));
    for d in corpus.docs() {
        assert!(d.labels.iter().any(|l| tree.children(l).is_empty()));
    }
}
