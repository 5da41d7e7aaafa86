//! TF-IDF n-gram feature extraction.
//!
//! A [`FeatureModuleSpec`] describes one vectorizer (word or character
//! n-grams, an n-gram range, optional stopword removal, a vocabulary cap).
//! Fitting it on a set of texts yields a [`FittedFeatureModule`]; several
//! fitted modules side by side form a [`FeatureEnsemble`] whose output is the
//! concatenation of the per-module TF-IDF vectors.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::sparse::{FeatureMatrix, SparseVector};

/// Largest word n-gram order accepted by [`FeatureModuleSpec::validate`].
pub const MAX_WORD_N: usize = 7;
/// Largest character n-gram order accepted by [`FeatureModuleSpec::validate`].
pub const MAX_CHAR_N: usize = 5;

const ENSEMBLE_MANIFEST: &str = "features.json";
const ENSEMBLE_FORMAT: &str = "hmtc-features/1";

const DEFAULT_STOPWORDS: &str = include_str!("../data/german_stopwords.txt");

/// Term → occurrence count.
pub type TermCounts = HashMap<String, u32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Word,
    Char,
}

/// Configuration of a single vectorizer.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureModuleSpec {
    pub kind: FeatureKind,
    pub n_min: usize,
    pub n_max: usize,
    #[serde(default)]
    pub remove_stopwords: bool,
    pub max_features: usize,
}

impl FeatureModuleSpec {
    pub fn word(n_min: usize, n_max: usize) -> Self {
        FeatureModuleSpec {
            kind: FeatureKind::Word,
            n_min,
            n_max,
            remove_stopwords: false,
            max_features: 100_000,
        }
    }

    pub fn char(n_min: usize, n_max: usize) -> Self {
        FeatureModuleSpec {
            kind: FeatureKind::Char,
            ..Self::word(n_min, n_max)
        }
    }

    pub fn without_stopwords(mut self) -> Self {
        self.remove_stopwords = true;
        self
    }

    pub fn with_max_features(mut self, cap: usize) -> Self {
        self.max_features = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let cap = match self.kind {
            FeatureKind::Word => MAX_WORD_N,
            FeatureKind::Char => MAX_CHAR_N,
        };
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(Error::InvalidFeatureSpec(format!(
                "n-gram range {}..={} is empty or starts below 1",
                self.n_min, self.n_max
            )));
        }
        if self.n_max > cap {
            return Err(Error::InvalidFeatureSpec(format!(
                "{:?} n-grams are capped at {cap}, got {}",
                self.kind, self.n_max
            )));
        }
        if self.max_features == 0 {
            return Err(Error::InvalidFeatureSpec("max_features must be >= 1".into()));
        }
        Ok(())
    }
}

/// Named module lists.
///
/// * `subtaskA`: word 1-1, word 1-7, word 1-3 without stopwords, char 2-3,
///   char 2-3 over stopword-free text; 100k terms each. The last module is a
///   local choice, the other four are the configurations evaluated on their own.
/// * `subtaskB-node`: word 1-7, word 1-3 without stopwords, char 2-3; 70k terms each.
pub fn profile(name: &str) -> Option<Vec<FeatureModuleSpec>> {
    match name {
        "subtaskA" => Some(vec![
            FeatureModuleSpec::word(1, 1),
            FeatureModuleSpec::word(1, 7),
            FeatureModuleSpec::word(1, 3).without_stopwords(),
            FeatureModuleSpec::char(2, 3),
            FeatureModuleSpec::char(2, 3).without_stopwords(),
        ]),
        "subtaskB-node" => Some(
            [
                FeatureModuleSpec::word(1, 7),
                FeatureModuleSpec::word(1, 3).without_stopwords(),
                FeatureModuleSpec::char(2, 3),
            ]
            .into_iter()
            .map(|s| s.with_max_features(70_000))
            .collect(),
        ),
        _ => None,
    }
}

pub const PROFILE_NAMES: [&str; 2] = ["subtaskA", "subtaskB-node"];

/// A set of lowercase tokens removed before n-gram formation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// One token per line; `#` starts a comment line. Tokens are lowercased.
    pub fn parse(text: &str) -> Self {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    /// The bundled German list.
    pub fn german() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn sorted(&self) -> Vec<String> {
        let mut v: Vec<String> = self.0.iter().cloned().collect();
        v.sort();
        v
    }
}

impl FromIterator<String> for Stopwords {
    fn from_iter<T: IntoIterator<Item = String>>(iter: T) -> Self {
        Stopwords(iter.into_iter().collect())
    }
}

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Contiguous token n-grams for every order in `n_min..=n_max`, space-joined.
pub fn word_ngrams<S: AsRef<str>>(tokens: &[S], n_min: usize, n_max: usize) -> TermCounts {
    let mut out = TermCounts::new();
    for n in n_min.max(1)..=n_max {
        for window in tokens.windows(n) {
            let mut term = String::from(window[0].as_ref());
            for t in &window[1..] {
                term.push(' ');
                term.push_str(t.as_ref());
            }
            *out.entry(term).or_insert(0) += 1;
        }
    }
    out
}

/// Character n-grams over the lowercased text with whitespace runs collapsed
/// to one space. Grams may span word boundaries.
pub fn char_ngrams(text: &str, n_min: usize, n_max: usize) -> TermCounts {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let chars: Vec<char> = collapsed.to_lowercase().chars().collect();
    let mut out = TermCounts::new();
    for n in n_min.max(1)..=n_max {
        for window in chars.windows(n) {
            *out.entry(window.iter().collect()).or_insert(0) += 1;
        }
    }
    out
}

fn extract_terms(spec: &FeatureModuleSpec, text: &str, stopwords: &Stopwords) -> TermCounts {
    match (spec.kind, spec.remove_stopwords) {
        (FeatureKind::Word, false) => word_ngrams(&tokenize(text), spec.n_min, spec.n_max),
        (FeatureKind::Word, true) => {
            let kept: Vec<String> = tokenize(text)
                .into_iter()
                .filter(|t| !stopwords.contains(t))
                .collect();
            word_ngrams(&kept, spec.n_min, spec.n_max)
        }
        (FeatureKind::Char, false) => char_ngrams(text, spec.n_min, spec.n_max),
        (FeatureKind::Char, true) => {
            let kept: Vec<String> = tokenize(text)
                .into_iter()
                .filter(|t| !stopwords.contains(t))
                .collect();
            char_ngrams(&kept.join(" "), spec.n_min, spec.n_max)
        }
    }
}

/// A vectorizer with a frozen vocabulary and IDF table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModuleRecord", try_from = "ModuleRecord")]
pub struct FittedFeatureModule {
    spec: FeatureModuleSpec,
    stopwords: Stopwords,
    terms: Vec<String>,
    idf: Vec<f64>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct ModuleRecord {
    spec: FeatureModuleSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    stopwords: Vec<String>,
    terms: Vec<String>,
    idf: Vec<f64>,
}

impl From<FittedFeatureModule> for ModuleRecord {
    fn from(m: FittedFeatureModule) -> Self {
        ModuleRecord {
            stopwords: if m.spec.remove_stopwords {
                m.stopwords.sorted()
            } else {
                Vec::new()
            },
            spec: m.spec,
            terms: m.terms,
            idf: m.idf,
        }
    }
}

impl TryFrom<ModuleRecord> for FittedFeatureModule {
    type Error = String;

    fn try_from(r: ModuleRecord) -> std::result::Result<Self, String> {
        if r.terms.len() != r.idf.len() {
            return Err(format!(
                "{} terms but {} idf weights",
                r.terms.len(),
                r.idf.len()
            ));
        }
        let index: HashMap<String, u32> = r
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        if index.len() != r.terms.len() {
            return Err("duplicate vocabulary term".into());
        }
        Ok(FittedFeatureModule {
            spec: r.spec,
            stopwords: r.stopwords.into_iter().collect(),
            terms: r.terms,
            idf: r.idf,
            index,
        })
    }
}

impl FittedFeatureModule {
    /// Fits vocabulary and IDF weights on `texts`.
    ///
    /// The vocabulary keeps the `max_features` terms with the highest total
    /// frequency (ties go to the lexicographically smaller term) and assigns
    /// columns in lexicographic order. `idf(t) = ln((1 + N) / (1 + df(t))) + 1`.
    pub fn fit<S: AsRef<str> + Sync>(
        texts: &[S],
        spec: &FeatureModuleSpec,
        stopwords: Option<&Stopwords>,
    ) -> Result<Self> {
        spec.validate()?;
        if texts.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        let stopwords = match (spec.remove_stopwords, stopwords) {
            (true, Some(s)) => s.clone(),
            (true, None) => {
                return Err(Error::InvalidFeatureSpec(
                    "stopword removal requested without a stopword list".into(),
                ))
            }
            (false, _) => Stopwords::default(),
        };

        let per_doc: Vec<TermCounts> = texts
            .par_iter()
            .map(|t| extract_terms(spec, t.as_ref(), &stopwords))
            .collect();
        let mut stats: HashMap<String, (u64, u32)> = HashMap::new();
        for counts in per_doc {
            for (term, c) in counts {
                let e = stats.entry(term).or_insert((0, 0));
                e.0 += u64::from(c);
                e.1 += 1;
            }
        }
        if stats.is_empty() {
            return Err(Error::EmptyVocabulary);
        }

        let mut ranked: Vec<(String, u64, u32)> =
            stats.into_iter().map(|(t, (f, d))| (t, f, d)).collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(spec.max_features);
        ranked.sort_unstable_by(|a, b| a.0.cmp(&b.0));

        let n = texts.len() as f64;
        let idf = ranked
            .iter()
            .map(|&(_, _, df)| ((1.0 + n) / (1.0 + f64::from(df))).ln() + 1.0)
            .collect();
        let terms: Vec<String> = ranked.into_iter().map(|(t, _, _)| t).collect();
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Ok(FittedFeatureModule {
            spec: spec.clone(),
            stopwords,
            terms,
            idf,
            index,
        })
    }

    pub fn spec(&self) -> &FeatureModuleSpec {
        &self.spec
    }

    /// Vocabulary terms in column order.
    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.index.get(term).map(|&i| self.idf[i as usize])
    }

    pub fn column(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    pub fn width(&self) -> usize {
        self.terms.len()
    }

    /// L2-normalized TF-IDF vector; out-of-vocabulary terms are ignored.
    pub fn transform(&self, text: &str) -> SparseVector {
        let counts = extract_terms(&self.spec, text, &self.stopwords);
        let pairs = counts
            .into_iter()
            .filter_map(|(term, tf)| {
                self.index
                    .get(&term)
                    .map(|&col| (col, f64::from(tf) * self.idf[col as usize]))
            })
            .collect();
        let mut v = SparseVector::from_pairs(pairs);
        v.normalize();
        v
    }
}

/// Fitted modules laid out side by side in one feature space.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureEnsemble {
    modules: Vec<FittedFeatureModule>,
    offsets: Vec<usize>,
    width: usize,
}

impl FeatureEnsemble {
    pub fn new(modules: Vec<FittedFeatureModule>) -> Self {
        let mut offsets = Vec::with_capacity(modules.len());
        let mut width = 0;
        for m in &modules {
            offsets.push(width);
            width += m.width();
        }
        FeatureEnsemble {
            modules,
            offsets,
            width,
        }
    }

    /// Fits every module on the same texts. Fails if any module ends up empty.
    pub fn fit<S: AsRef<str> + Sync>(
        texts: &[S],
        specs: &[FeatureModuleSpec],
        stopwords: Option<&Stopwords>,
    ) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidFeatureSpec("ensemble has no modules".into()));
        }
        let modules = specs
            .par_iter()
            .map(|s| FittedFeatureModule::fit(texts, s, stopwords))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(modules))
    }

    pub fn modules(&self) -> &[FittedFeatureModule] {
        &self.modules
    }

    /// Starting column of each module's block.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        let mut out = SparseVector::new();
        for (m, &off) in self.modules.iter().zip(&self.offsets) {
            out.extend_shifted(&m.transform(text), off as u32);
        }
        out
    }

    /// Writes `features.json` plus one `module-<k>.json` per module into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fsutil::create_dir(dir)?;
        let files: Vec<String> = (0..self.modules.len())
            .map(|k| format!("module-{k}.json"))
            .collect();
        for (m, f) in self.modules.iter().zip(&files) {
            fsutil::write_json(&dir.join(f), m)?;
        }
        let manifest = EnsembleManifest {
            format: ENSEMBLE_FORMAT.into(),
            width: self.width,
            modules: files,
        };
        fsutil::write_json(&dir.join(ENSEMBLE_MANIFEST), &manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: EnsembleManifest = fsutil::read_json(&dir.join(ENSEMBLE_MANIFEST))?;
        if manifest.format != ENSEMBLE_FORMAT {
            return Err(Error::ModelFormat(format!(
                "unsupported feature ensemble format {:?}",
                manifest.format
            )));
        }
        let modules = manifest
            .modules
            .iter()
            .map(|f| fsutil::read_json(&dir.join(f)))
            .collect::<Result<Vec<FittedFeatureModule>>>()?;
        let ensemble = Self::new(modules);
        if ensemble.width != manifest.width {
            return Err(Error::ModelFormat(format!(
                "ensemble width {} does not match manifest width {}",
                ensemble.width, manifest.width
            )));
        }
        Ok(ensemble)
    }

    pub fn transform_all<S: AsRef<str> + Sync>(&self, texts: &[S]) -> FeatureMatrix {
        let rows = texts.par_iter().map(|t| self.transform(t.as_ref())).collect();
        FeatureMatrix::new(rows, self.width).expect("ensemble rows fit ensemble width")
    }
}

#[derive(Serialize, Deserialize)]
struct EnsembleManifest {
    format: String,
    width: usize,
    modules: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(pairs: &[(&str, u32)]) -> TermCounts {
        pairs.iter().map(|&(t, c)| (t.to_string(), c)).collect()
    }

    #[test]
    fn tokenizer() {
        assert_eq!(tokenize("Der Hund bellt!"), ["der", "hund", "bellt"]);
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("Künste, Architektur & Garten"),
            ["künste", "architektur", "garten"]
        );
    }

    #[test]
    fn word_grams() {
        let toks = ["a", "b", "c"];
        assert_eq!(
            word_ngrams(&toks, 1, 2),
            counts(&[("a", 1), ("b", 1), ("c", 1), ("a b", 1), ("b c", 1)])
        );
        assert!(word_ngrams(&["a"], 2, 3).is_empty());
        assert_eq!(
            word_ngrams(&["a", "b", "a", "b"], 2, 2),
            counts(&[("a b", 2), ("b a", 1)])
        );
    }

    #[test]
    fn char_grams() {
        assert_eq!(
            char_ngrams("ab c", 2, 2),
            counts(&[("ab", 1), ("b ", 1), (" c", 1)])
        );
        assert_eq!(char_ngrams("aaa", 3, 3), counts(&[("aaa", 1)]));
        assert_eq!(char_ngrams("ab  c", 2, 2), char_ngrams("ab c", 2, 2));
        assert_eq!(char_ngrams("ÄB", 2, 2), counts(&[("äb", 1)]));
    }

    #[test]
    fn spec_validation() {
        assert!(FeatureModuleSpec::word(1, 7).validate().is_ok());
        assert!(FeatureModuleSpec::word(1, 8).validate().is_err());
        assert!(FeatureModuleSpec::char(2, 6).validate().is_err());
        assert!(FeatureModuleSpec::word(3, 2).validate().is_err());
        assert!(FeatureModuleSpec::word(0, 2).validate().is_err());
        assert!(FeatureModuleSpec::word(1, 1)
            .with_max_features(0)
            .validate()
            .is_err());
    }

    #[test]
    fn fit_small_corpus() {
        let spec = FeatureModuleSpec::word(1, 1).with_max_features(10);
        let m = FittedFeatureModule::fit(&["a b", "a c"], &spec, None).unwrap();
        assert_eq!(m.terms(), ["a", "b", "c"]);
        assert_eq!(m.idf("a"), Some(1.0));
        // df = 1, N = 2
        assert!((m.idf("b").unwrap() - ((3.0f64 / 2.0).ln() + 1.0)).abs() < 1e-15);
    }

    #[test]
    fn cap_breaks_ties_lexicographically() {
        let spec = FeatureModuleSpec::word(1, 1).with_max_features(2);
        let m = FittedFeatureModule::fit(&["a b", "a c"], &spec, None).unwrap();
        assert_eq!(m.terms(), ["a", "b"]);
    }

    #[test]
    fn stopword_only_corpus_is_empty() {
        let spec = FeatureModuleSpec::word(1, 2).without_stopwords();
        let sw = Stopwords::german();
        let err = FittedFeatureModule::fit(&["der die das", "und oder"], &spec, Some(&sw));
        assert!(matches!(err, Err(Error::EmptyVocabulary)));
        assert!(matches!(
            FittedFeatureModule::fit(&["x"], &spec, None),
            Err(Error::InvalidFeatureSpec(_))
        ));
    }

    #[test]
    fn stopword_file_format() {
        let sw = Stopwords::parse("# comment\nDer\n\n  und \n");
        assert_eq!(sw.len(), 2);
        assert!(sw.contains("der") && sw.contains("und"));
        assert!(Stopwords::german().contains("und"));
    }

    fn module(terms: &[(&str, f64)]) -> FittedFeatureModule {
        ModuleRecord {
            spec: FeatureModuleSpec::word(1, 1),
            stopwords: vec![],
            terms: terms.iter().map(|t| t.0.to_string()).collect(),
            idf: terms.iter().map(|t| t.1).collect(),
        }
        .try_into()
        .unwrap()
    }

    #[test]
    fn transform_values() {
        let m = module(&[("a", 1.0)]);
        let v = m.transform("a a");
        assert_eq!(v.indices(), &[0]);
        assert!((v.values()[0] - 1.0).abs() < 1e-15);
        assert!(m.transform("z z").is_zero());

        let m = module(&[("a", 1.0), ("b", 2.0)]);
        let v = m.transform("a b");
        let s5 = 5f64.sqrt();
        assert!((v.values()[0] - 1.0 / s5).abs() < 1e-15);
        assert!((v.values()[1] - 2.0 / s5).abs() < 1e-15);
    }

    #[test]
    fn ensemble_offsets() {
        let e = FeatureEnsemble::new(vec![
            module(&[("a", 1.0), ("b", 1.0), ("c", 1.0)]),
            module(&[("a", 1.0), ("d", 1.0)]),
        ]);
        assert_eq!(e.width(), 5);
        assert_eq!(e.offsets(), &[0, 3]);
        let v = e.transform("d");
        assert_eq!(v.indices(), &[4]);
        assert!(e.transform("zzz").is_zero());

        let single = FeatureEnsemble::new(vec![module(&[("a", 1.0), ("b", 2.0)])]);
        assert_eq!(single.transform("a b"), single.modules()[0].transform("a b"));
    }

    #[test]
    fn all_stopword_document_gives_zero_block() {
        let sw = Stopwords::german();
        let spec = FeatureModuleSpec::word(1, 3).without_stopwords();
        let m = FittedFeatureModule::fit(&["hund und katze", "der baum"], &spec, Some(&sw)).unwrap();
        assert!(m.transform("und der die").is_zero());
        assert!(m.column("und").is_none());
    }

    #[test]
    fn ensemble_save_load() {
        let dir = tempfile::tempdir().unwrap();
        let texts = ["Der Hund bellt", "die Katze schläft", "ein Hund und eine Katze"];
        let specs = profile("subtaskB-node").unwrap();
        let e = FeatureEnsemble::fit(&texts, &specs, Some(&Stopwords::german())).unwrap();
        e.save(dir.path()).unwrap();
        let back = FeatureEnsemble::load(dir.path()).unwrap();
        assert_eq!(back, e);
        assert_eq!(back.transform_all(&texts), e.transform_all(&texts));
    }

    #[test]
    fn profiles() {
        let a = profile("subtaskA").unwrap();
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|s| s.max_features == 100_000 && s.validate().is_ok()));
        let b = profile("subtaskB-node").unwrap();
        assert_eq!(b.len(), 3);
        assert!(b.iter().all(|s| s.max_features == 70_000));
        assert!(profile("nope").is_none());
    }

    #[test]
    fn serde_round_trip_rebuilds_index() {
        let spec = FeatureModuleSpec::char(2, 3).without_stopwords();
        let m = FittedFeatureModule::fit(&["Der Hund", "die Katze"], &spec, Some(&Stopwords::german()))
            .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: FittedFeatureModule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.transform("Hund der"), m.transform("Hund der"));
    }
}
