use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use hmtc_core::corpus::dataset_stats;
use hmtc_core::evalkit::{
    confusion, evaluate, linspace, micro_prf, prediction_cardinality, threshold_sweep,
    LabelConfusion, SweepPoint,
};
use hmtc_core::fsutil::create_dir;
use hmtc_core::hier::train_hier;
use hmtc_core::linclf::train_ovr;
use hmtc_core::syncorpus::{generate, GeneratorSpec};
use hmtc_core::threshold::{
    calibrate_lca_global, calibrate_lca_labelwise, label_cardinality, label_rates,
};
use hmtc_core::{
    AssignmentMatrix, Corpus, Error as CoreError, FeatureEnsemble, LabelTree, SweepResult,
    ThresholdPolicy, ThresholdRule, TrainParams,
};
use serde::Serialize;

use crate::config::{require, Mode, PolicyKind, RunConfig};
use crate::error::{CliError, Result};
use crate::model::{sha256_hex, Manifest, Model, ModelDir, TrainSummary, MODEL_FORMAT};

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    Corpus::read_jsonl(BufReader::new(f)).map_err(|e| CliError::in_file(path, e))
}

pub fn read_tree(path: &Path) -> Result<LabelTree> {
    let f = File::open(path).map_err(|e| CliError::io(path, e))?;
    LabelTree::read(BufReader::new(f)).map_err(|e| CliError::in_file(path, e))
}

/// The hierarchy file if given, else every label seen in `corpora` as a standalone root.
fn tree_or_flat(path: Option<&Path>, corpora: &[&Corpus]) -> Result<LabelTree> {
    match path {
        Some(p) => read_tree(p),
        None => {
            let labels: BTreeSet<&String> = corpora
                .iter()
                .flat_map(|c| c.docs())
                .flat_map(|d| &d.labels)
                .collect();
            Ok(LabelTree::parse(labels)?)
        }
    }
}

fn level_labels(tree: &LabelTree, level: Option<usize>) -> Result<Vec<String>> {
    match level {
        None => Ok(tree.labels().to_vec()),
        Some(lv) => {
            let labels = tree.labels_at_level(lv);
            if labels.is_empty() {
                return Err(CliError::config(format!(
                    "level {lv} has no labels (tree depth {})",
                    tree.max_level()
                )));
            }
            Ok(labels)
        }
    }
}

/// Ancestor-closed gold sets restricted to `labels`.
fn closed_targets(corpus: &Corpus, tree: &LabelTree, labels: &[String], path: &Path) -> Result<Vec<BTreeSet<String>>> {
    let keep: BTreeSet<&String> = labels.iter().collect();
    let closed = corpus.closed_labels(tree).map_err(|e| CliError::in_file(path, e))?;
    Ok(closed
        .into_iter()
        .map(|s| s.into_iter().filter(|l| keep.contains(l)).collect())
        .collect())
}

fn texts(corpus: &Corpus) -> Vec<&str> {
    corpus.docs().iter().map(|d| d.text.as_str()).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Writes to `path`, or stdout when `None`.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::io("<stdout>", e))
        }
    }
}

fn pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct TrainIdentity<'a> {
    mode: Mode,
    profile: &'a [hmtc_core::FeatureModuleSpec],
    c: f64,
    seed: u64,
    level: Option<usize>,
    threshold: &'a crate::config::ThresholdConfig,
}

fn stored_policy(cfg: &RunConfig) -> Option<ThresholdPolicy> {
    (cfg.threshold.policy == PolicyKind::Fixed)
        .then(|| ThresholdPolicy::fixed(cfg.threshold.t).with_fix_null(cfg.threshold.fix_null))
}

pub fn train(cfg: &RunConfig, model_dir: &Path) -> Result<ModelDir> {
    let modules = cfg.resolve_modules()?;
    let train_path = require(&cfg.paths.train, "training documents")?;
    if cfg.mode == Mode::Hierarchical {
        require(&cfg.paths.hierarchy, "hierarchy")?;
        if cfg.threshold.policy != PolicyKind::Fixed {
            return Err(CliError::config(
                "hierarchical mode only supports the fixed threshold policy",
            ));
        }
        if cfg.level.is_some() {
            return Err(CliError::config("`level` only applies to flat mode"));
        }
    }
    let params = TrainParams::default().with_c(cfg.c).with_seed(cfg.seed);
    let stopwords = cfg.load_stopwords()?;
    let corpus = read_corpus(train_path)?;
    let tree = tree_or_flat(cfg.paths.hierarchy.as_deref(), &[&corpus])?;
    corpus.validate(&tree).map_err(|e| CliError::in_file(train_path, e))?;

    let labels = match cfg.mode {
        Mode::Flat => level_labels(&tree, cfg.level)?,
        Mode::Hierarchical => tree.labels().to_vec(),
    };
    let targets = closed_targets(&corpus, &tree, &labels, train_path)?;
    let summary = TrainSummary {
        n_samples: corpus.len(),
        cardinality: label_cardinality(&targets),
        label_rates: label_rates(&targets, &labels),
    };

    let model = match cfg.mode {
        Mode::Flat => {
            let texts = texts(&corpus);
            let ensemble = FeatureEnsemble::fit(&texts, &modules, Some(&stopwords))?;
            let x = ensemble.transform_all(&texts);
            let linear = train_ovr(&x, &targets, &labels, &params)?;
            Model::Flat {
                tree: tree.clone(),
                ensemble,
                linear,
            }
        }
        Mode::Hierarchical => Model::Hierarchical(train_hier(
            &corpus,
            &tree,
            &modules,
            Some(&stopwords),
            &params,
        )?),
    };

    let identity = TrainIdentity {
        mode: cfg.mode,
        profile: &modules,
        c: cfg.c,
        seed: cfg.seed,
        level: cfg.level,
        threshold: &cfg.threshold,
    };
    let train_bytes = fs::read(train_path).map_err(|e| CliError::io(train_path, e))?;
    let manifest = Manifest {
        format: MODEL_FORMAT.to_string(),
        mode: cfg.mode,
        config_hash: sha256_hex([serde_json::to_string(&identity).expect("serializes").as_bytes()]),
        data_hash: sha256_hex([tree.to_tsv().as_bytes(), train_bytes.as_slice()]),
        seed: cfg.seed,
        c: cfg.c,
        level: cfg.level,
        profile: modules,
        labels,
        train: summary,
        policy: stored_policy(cfg),
    };
    let out = ModelDir { manifest, model };
    out.save(model_dir)?;
    Ok(out)
}

/// Overrides given on the command line at predict time.
#[derive(Debug, Clone, Copy, Default)]
pub struct PolicyOverride {
    pub threshold: Option<f64>,
    pub fix_null: bool,
}

fn effective_policy(model: &ModelDir, o: PolicyOverride) -> Result<ThresholdPolicy> {
    let mut policy = match (o.threshold, &model.manifest.policy) {
        (Some(t), p) => ThresholdPolicy::fixed(t).with_fix_null(p.as_ref().is_some_and(|p| p.fix_null)),
        (None, Some(p)) => p.clone(),
        (None, None) => {
            return Err(CliError::config(
                "model has no threshold policy; run `hmtc calibrate` or pass --threshold",
            ))
        }
    };
    policy.fix_null |= o.fix_null;
    Ok(policy)
}

#[derive(Serialize)]
struct ScoredRow<'a> {
    id: &'a str,
    scores: Vec<LabelScore<'a>>,
}

#[derive(Serialize)]
struct LabelScore<'a> {
    label: &'a str,
    score: Option<f64>,
}

/// Predicted label sets in input order, plus the JSONL score lines.
pub fn predict(model: &ModelDir, corpus: &Corpus, o: PolicyOverride) -> Result<(Vec<Vec<String>>, String)> {
    let policy = effective_policy(model, o)?;
    let texts = texts(corpus);
    let mut sets = Vec::with_capacity(corpus.len());
    let mut jsonl = String::new();
    match &model.model {
        Model::Flat { .. } => {
            let scores = model.flat_scores(&texts)?;
            let assign = policy.apply(&scores)?;
            for (r, d) in corpus.docs().iter().enumerate() {
                sets.push(assign.row_labels(r).into_iter().map(String::from).collect());
                let row = ScoredRow {
                    id: &d.id,
                    scores: scores
                        .labels()
                        .iter()
                        .zip(scores.row(r))
                        .map(|(l, &s)| LabelScore {
                            label: l,
                            score: Some(s),
                        })
                        .collect(),
                };
                jsonl.push_str(&serde_json::to_string(&row).expect("serializes"));
                jsonl.push('\n');
            }
        }
        Model::Hierarchical(h) => {
            let preds = h.predict_all(&texts, &policy)?;
            for (d, p) in corpus.docs().iter().zip(&preds) {
                sets.push(p.iter().map(|s| s.label.clone()).collect());
                let row = ScoredRow {
                    id: &d.id,
                    scores: p
                        .iter()
                        .map(|s| LabelScore {
                            label: &s.label,
                            score: s.score,
                        })
                        .collect(),
                };
                jsonl.push_str(&serde_json::to_string(&row).expect("serializes"));
                jsonl.push('\n');
            }
        }
    }
    Ok((sets, jsonl))
}

/// `doc_id<TAB>label<TAB>label…`, one line per document.
pub fn predictions_tsv(corpus: &Corpus, sets: &[Vec<String>]) -> String {
    let mut out = String::new();
    for (d, labels) in corpus.docs().iter().zip(sets) {
        out.push_str(&d.id);
        for l in labels {
            out.push('\t');
            out.push_str(l);
        }
        out.push('\n');
    }
    out
}

/// Parses a predictions TSV into `(doc_id, labels)` rows.
pub fn read_predictions(path: &Path) -> Result<Vec<(String, BTreeSet<String>)>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        if id.is_empty() {
            return Err(CliError::in_file(
                path,
                CoreError::Format {
                    line: i + 1,
                    msg: "empty document id".into(),
                },
            ));
        }
        if !seen.insert(id.to_string()) {
            return Err(CliError::in_file(path, CoreError::DuplicateId(id.to_string())));
        }
        let labels = fields.filter(|f| !f.is_empty()).map(String::from).collect();
        rows.push((id.to_string(), labels));
    }
    Ok(rows)
}

pub fn calibrate(cfg: &RunConfig, model: &mut ModelDir, dev: &Corpus) -> Result<ThresholdPolicy> {
    let th = &cfg.threshold;
    let rule = match (&model.model, th.policy) {
        (_, PolicyKind::Fixed) => ThresholdRule::Fixed { t: th.t },
        (Model::Hierarchical(_), _) => {
            return Err(CliError::config(
                "hierarchical models only support the fixed threshold policy",
            ))
        }
        (Model::Flat { .. }, PolicyKind::Lca) => {
            let scores = model.flat_scores(&texts(dev))?;
            calibrate_lca_global(model.manifest.train.cardinality, &scores, th.normalize)?
        }
        (Model::Flat { .. }, PolicyKind::LcaLabelwise) => {
            let scores = model.flat_scores(&texts(dev))?;
            calibrate_lca_labelwise(&model.manifest.train.label_rates, &scores, th.normalize)?
        }
    };
    let policy = ThresholdPolicy {
        rule,
        fix_null: th.fix_null,
    };
    model.manifest.policy = Some(policy.clone());
    Ok(policy)
}

/// Gold rows for every gold document; documents missing from `pred` count as empty predictions.
pub fn evaluate_predictions(
    gold: &Corpus,
    gold_path: &Path,
    pred: &[(String, BTreeSet<String>)],
    tree: &LabelTree,
    labels: &[String],
) -> Result<hmtc_core::EvalReport> {
    let gold_sets = closed_targets(gold, tree, labels, gold_path)?;
    let keep: BTreeSet<&String> = labels.iter().collect();
    let mut pred_sets = vec![BTreeSet::new(); gold.len()];
    let index: std::collections::HashMap<&str, usize> = gold
        .docs()
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.as_str(), i))
        .collect();
    for (id, set) in pred {
        let &row = index
            .get(id.as_str())
            .ok_or_else(|| CoreError::UnknownId(id.clone()))?;
        for l in set {
            if !tree.contains(l) {
                return Err(CoreError::UnknownLabel(l.clone()).into());
            }
        }
        pred_sets[row] = set.iter().filter(|l| keep.contains(l)).cloned().collect();
    }
    let g = AssignmentMatrix::from_label_sets(labels.to_vec(), &gold_sets)?;
    let p = AssignmentMatrix::from_label_sets(labels.to_vec(), &pred_sets)?;
    Ok(evaluate(&g, &p)?)
}

/// Micro scores from a confusion-count table, grouped by the optional leading rule column.
///
/// Rows are `label tn fp fn tp` or `rule label tn fp fn tp`, tab-separated; `#` starts a comment.
pub fn evaluate_counts(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut groups: Vec<(String, Vec<LabelConfusion>)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        let bad = |msg: &str| {
            CliError::in_file(
                path,
                CoreError::Format {
                    line: i + 1,
                    msg: msg.to_string(),
                },
            )
        };
        let (rule, rest) = match f.len() {
            5 => ("", &f[..]),
            6 => (f[0], &f[1..]),
            _ => return Err(bad("expected 5 or 6 tab-separated fields")),
        };
        let n = |s: &str| s.trim().parse::<usize>().map_err(|_| bad("counts must be non-negative integers"));
        let c = LabelConfusion {
            label: rest[0].to_string(),
            tn: n(rest[1])?,
            fp: n(rest[2])?,
            fn_: n(rest[3])?,
            tp: n(rest[4])?,
        };
        match groups.iter_mut().find(|(r, _)| r == rule) {
            Some((_, v)) => v.push(c),
            None => groups.push((rule.to_string(), vec![c])),
        }
    }
    let mut out = String::from("rule\ttp\tfp\tfn\tprecision\trecall\tf1\n");
    for (rule, cms) in &groups {
        let m = micro_prf(cms);
        let sum = |f: fn(&LabelConfusion) -> usize| cms.iter().map(f).sum::<usize>();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}\n",
            if rule.is_empty() { "-" } else { rule },
            sum(|c| c.tp),
            sum(|c| c.fp),
            sum(|c| c.fn_),
            m.precision,
            m.recall,
            m.f1
        ));
    }
    Ok(out)
}

pub fn sweep(model: &ModelDir, dev: &Corpus, dev_path: &Path, t_values: &[f64]) -> Result<SweepResult> {
    let tree = model.tree();
    let labels = &model.manifest.labels;
    let gold_sets = closed_targets(dev, tree, labels, dev_path)?;
    let gold = AssignmentMatrix::from_label_sets(labels.clone(), &gold_sets)?;
    let texts = texts(dev);
    match &model.model {
        Model::Flat { .. } => Ok(threshold_sweep(&model.flat_scores(&texts)?, &gold, t_values)?),
        Model::Hierarchical(h) => {
            let points = t_values
                .iter()
                .map(|&t| {
                    let preds = h.predict_all(&texts, &ThresholdPolicy::fixed(t))?;
                    let pred = h.to_assignment(&preds);
                    let m = micro_prf(&confusion(&gold, &pred)?);
                    Ok(SweepPoint {
                        t,
                        precision: m.precision,
                        recall: m.recall,
                        f1: m.f1,
                        cardinality: prediction_cardinality(&pred),
                    })
                })
                .collect::<hmtc_core::Result<Vec<_>>>()?;
            Ok(SweepResult::from_points(points)?)
        }
    }
}

pub fn stats(docs_path: &Path, hierarchy: Option<&Path>, level: Option<usize>) -> Result<String> {
    let corpus = read_corpus(docs_path)?;
    let tree = tree_or_flat(hierarchy, &[&corpus])?;
    let s = dataset_stats(&corpus, &tree, level).map_err(|e| CliError::in_file(docs_path, e))?;
    Ok(pretty_json(&s))
}

pub fn gen(spec: &GeneratorSpec, out: &Path, holdout: Option<f64>) -> Result<String> {
    if let Some(f) = holdout {
        if !(0.0..=1.0).contains(&f) {
            return Err(CliError::config(format!("--holdout must lie in [0, 1], got {f}")));
        }
    }
    let (corpus, tree) = generate(spec)?;
    create_dir(out)?;
    write_file(&out.join("hierarchy.tsv"), tree.to_tsv().as_bytes())?;
    let jsonl = |c: &Corpus| {
        let mut buf = Vec::new();
        c.write_jsonl(&mut buf).expect("in-memory write");
        buf
    };
    write_file(&out.join("documents.jsonl"), &jsonl(&corpus))?;
    let mut summary = format!("{} labels, {} documents", tree.len(), corpus.len());
    if let Some(f) = holdout {
        let (train, test) = corpus.split(f, spec.seed);
        write_file(&out.join("train.jsonl"), &jsonl(&train))?;
        write_file(&out.join("test.jsonl"), &jsonl(&test))?;
        summary.push_str(&format!(" ({} train, {} test)", train.len(), test.len()));
    }
    summary.push('\n');
    Ok(summary)
}

/// Dispatch target for the binary; see [`crate::Cli`].
pub(crate) fn execute(cli: crate::Cli) -> Result<()> {
    use crate::Command;
    let g = &cli.global;
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    g.apply(&mut cfg);
    if let Some(j) = g.jobs {
        if j == 0 {
            return Err(CliError::config("--jobs must be >= 1"));
        }
        // fails only if a pool already exists, e.g. when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let model_path = || -> Result<PathBuf> {
        g.model
            .clone()
            .or_else(|| cfg.paths.model.clone())
            .ok_or_else(|| CliError::config("missing model directory (--model or [paths] model)"))
    };

    match &cli.command {
        Command::Train { train: t } => {
            if let Some(t) = t {
                cfg.paths.train = Some(t.clone());
            }
            let dir = g
                .out
                .clone()
                .or_else(|| g.model.clone())
                .or_else(|| cfg.paths.model.clone())
                .ok_or_else(|| CliError::config("missing model directory (--out, --model or [paths] model)"))?;
            let m = train(&cfg, &dir)?;
            eprintln!(
                "trained {} model with {} labels from {} documents into {}",
                match m.manifest.mode {
                    Mode::Flat => "flat",
                    Mode::Hierarchical => "hierarchical",
                },
                m.manifest.labels.len(),
                m.manifest.train.n_samples,
                dir.display()
            );
            Ok(())
        }
        Command::Calibrate { dev } => {
            let dir = model_path()?;
            let mut model = ModelDir::load(&dir)?;
            let dev_path = dev.clone().or_else(|| cfg.paths.dev.clone());
            let dev_path = require(&dev_path, "dev documents")?;
            let corpus = read_corpus(dev_path)?;
            let policy = calibrate(&cfg, &mut model, &corpus)?;
            model.save_manifest(&dir)?;
            emit(g.out.as_deref(), &pretty_json(&policy))
        }
        Command::Predict { docs, scores } => {
            let model = ModelDir::load(&model_path()?)?;
            let docs = docs.clone().or_else(|| cfg.paths.test.clone());
            let docs = require(&docs, "documents")?;
            let corpus = read_corpus(docs)?;
            let o = PolicyOverride {
                threshold: g.threshold,
                fix_null: g.fix_null,
            };
            let (sets, jsonl) = predict(&model, &corpus, o)?;
            if let Some(s) = scores {
                write_file(s, jsonl.as_bytes())?;
            }
            let out = g.out.clone().or_else(|| cfg.paths.out.clone());
            emit(out.as_deref(), &predictions_tsv(&corpus, &sets))
        }
        Command::Evaluate { gold, pred, counts } => {
            if let Some(c) = counts {
                return emit(g.out.as_deref(), &evaluate_counts(c)?);
            }
            let gold = gold.clone().or_else(|| cfg.paths.test.clone());
            let gold_path = require(&gold, "gold documents")?;
            let pred_path = pred.clone().or_else(|| cfg.paths.out.clone());
            let pred_path = require(&pred_path, "predictions")?;
            let gold = read_corpus(gold_path)?;
            let pred = read_predictions(pred_path)?;
            let model_tree = match g.model.clone().or_else(|| cfg.paths.model.clone()) {
                Some(m) if g.hierarchy.is_none() => {
                    let md = ModelDir::load(&m)?;
                    Some((md.tree().clone(), md.manifest.level))
                }
                _ => None,
            };
            let (tree, level) = match model_tree {
                Some((t, lv)) => (t, g.level.or(lv)),
                None => (tree_or_flat(cfg.paths.hierarchy.as_deref(), &[&gold])?, cfg.level),
            };
            let labels = level_labels(&tree, level)?;
            let report = evaluate_predictions(&gold, gold_path, &pred, &tree, &labels)?;
            if let Some(o) = &g.out {
                write_file(o, pretty_json(&report).as_bytes())?;
            }
            emit(None, &report.to_text())
        }
        Command::Sweep {
            dev,
            t_min,
            t_max,
            steps,
        } => {
            let model = ModelDir::load(&model_path()?)?;
            let dev = dev.clone().or_else(|| cfg.paths.dev.clone());
            let dev_path = require(&dev, "dev documents")?;
            let corpus = read_corpus(dev_path)?;
            let grid = linspace(*t_min, *t_max, *steps);
            let result = sweep(&model, &corpus, dev_path, &grid)?;
            match &g.out {
                Some(o) => {
                    write_file(o, result.to_tsv().as_bytes())?;
                    emit(None, &result.summary())
                }
                None => {
                    let mut text = result.to_tsv();
                    for line in result.summary().lines() {
                        text.push_str("# ");
                        text.push_str(line);
                        text.push('\n');
                    }
                    emit(None, &text)
                }
            }
        }
        Command::Stats { docs } => {
            let docs = docs.clone().or_else(|| cfg.paths.train.clone());
            let docs = require(&docs, "documents")?;
            let text = stats(docs, cfg.paths.hierarchy.as_deref(), cfg.level)?;
            emit(g.out.as_deref(), &text)
        }
        Command::Gen(args) => {
            let out = g
                .out
                .as_deref()
                .ok_or_else(|| CliError::config("gen needs --out DIR"))?;
            let spec = args.spec(cfg.seed);
            eprint!("{}", gen(&spec, out, args.holdout)?);
            Ok(())
        }
    }
}
