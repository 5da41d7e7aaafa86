//! Turning raw score matrices into label assignments.
//!
//! Every rule assigns a label when its score is strictly greater than the
//! threshold. Besides a fixed threshold there are two cardinality-matching
//! calibrations: a global one that picks the threshold whose predicted label
//! cardinality is closest to the training cardinality, and a labelwise one
//! that reproduces each label's training frequency. `fix_null` gives every
//! sample left without labels its single highest-scoring label.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{AssignmentMatrix, ScoreMatrix};

/// Global min-max bounds of a calibration matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(scores: &ScoreMatrix) -> Result<Self> {
        let (min, max) = scores
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if max <= min {
            return Err(Error::ConstantScores);
        }
        Ok(MinMax { min, max })
    }

    /// `(s − min) / (max − min)`; values outside the fitted range map outside [0, 1].
    pub fn apply(&self, scores: &ScoreMatrix) -> ScoreMatrix {
        let span = self.max - self.min;
        scores.map(|s| (s - self.min) / span)
    }
}

/// Min-max normalization over the whole matrix.
pub fn normalize_scores(scores: &ScoreMatrix) -> Result<ScoreMatrix> {
    Ok(MinMax::fit(scores)?.apply(scores))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ThresholdRule {
    Fixed {
        t: f64,
    },
    LcaGlobal {
        t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        normalization: Option<MinMax>,
    },
    LcaLabelwise {
        per_label_t: BTreeMap<String, f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        normalization: Option<MinMax>,
    },
}

/// A calibrated rule plus the empty-row rescue flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    #[serde(flatten)]
    pub rule: ThresholdRule,
    #[serde(default)]
    pub fix_null: bool,
}

impl ThresholdPolicy {
    pub fn fixed(t: f64) -> Self {
        ThresholdPolicy {
            rule: ThresholdRule::Fixed { t },
            fix_null: false,
        }
    }

    pub fn with_fix_null(mut self, fix_null: bool) -> Self {
        self.fix_null = fix_null;
        self
    }

    /// Threshold for one label on the raw score scale, if the rule is not normalized.
    pub fn raw_threshold(&self, label: &str) -> Option<f64> {
        match &self.rule {
            ThresholdRule::Fixed { t } => Some(*t),
            ThresholdRule::LcaGlobal {
                t,
                normalization: None,
            } => Some(*t),
            ThresholdRule::LcaLabelwise {
                per_label_t,
                normalization: None,
            } => per_label_t.get(label).copied(),
            _ => None,
        }
    }

    pub fn apply(&self, scores: &ScoreMatrix) -> Result<AssignmentMatrix> {
        let mut out = match &self.rule {
            ThresholdRule::Fixed { t } => assign_above(scores, *t),
            ThresholdRule::LcaGlobal { t, normalization } => match normalization {
                Some(n) => assign_above(&n.apply(scores), *t),
                None => assign_above(scores, *t),
            },
            ThresholdRule::LcaLabelwise {
                per_label_t,
                normalization,
            } => {
                let normed;
                let s = match normalization {
                    Some(n) => {
                        normed = n.apply(scores);
                        &normed
                    }
                    None => scores,
                };
                let ts = scores
                    .labels()
                    .iter()
                    .map(|l| {
                        per_label_t
                            .get(l)
                            .copied()
                            .ok_or_else(|| Error::UnknownLabel(l.clone()))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let values = (0..s.n_rows())
                    .flat_map(|r| s.row(r).iter().zip(&ts).map(|(v, t)| v > t).collect::<Vec<_>>())
                    .collect();
                AssignmentMatrix::new(s.labels().to_vec(), s.n_rows(), values)?
            }
        };
        if self.fix_null {
            fix_null(&mut out, scores);
        }
        Ok(out)
    }
}

/// `score > t` elementwise.
pub fn assign_above(scores: &ScoreMatrix, t: f64) -> AssignmentMatrix {
    let values = scores.values().iter().map(|&s| s > t).collect();
    AssignmentMatrix::new(scores.labels().to_vec(), scores.n_rows(), values)
        .expect("same shape as scores")
}

/// Sets the argmax label (first column on ties) of every all-false row.
pub fn fix_null(assign: &mut AssignmentMatrix, scores: &ScoreMatrix) {
    for r in 0..assign.n_rows() {
        if assign.row_count(r) > 0 {
            continue;
        }
        let best = scores
            .row(r)
            .iter()
            .enumerate()
            .fold(None::<(usize, f64)>, |best, (c, &v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((c, v)),
            });
        if let Some((c, _)) = best {
            assign.set(r, c, true);
        }
    }
}

fn below(min: f64) -> f64 {
    min - 1.0f64.max(min.abs())
}

/// Threshold on `scores` whose realized cardinality is closest to `target`.
///
/// Candidates are every distinct score plus one value below the minimum.
/// Realized cardinality only changes at those points, so the search is exact.
/// Ties go to the larger threshold.
pub fn lca_threshold(target: f64, scores: &ScoreMatrix) -> Result<f64> {
    if scores.n_rows() == 0 || scores.n_cols() == 0 {
        return Err(Error::EmptyScores);
    }
    if !target.is_finite() || target < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "target cardinality must be >= 0, got {target}"
        )));
    }
    let mut sorted = scores.values().to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let n = scores.n_rows() as f64;
    let total = sorted.len();

    // walk from the largest threshold down; `above` counts scores > candidate
    let mut best_t = sorted[total - 1];
    let mut best_diff = target.abs();
    let mut i = total;
    while i > 0 {
        let v = sorted[i - 1];
        let mut j = i;
        while j > 0 && sorted[j - 1] == v {
            j -= 1;
        }
        // candidate just below v: everything from j upward passes
        let above = total - j;
        let t = if j == 0 { below(v) } else { sorted[j - 1] };
        let diff = (above as f64 / n - target).abs();
        if diff < best_diff {
            best_diff = diff;
            best_t = t;
        }
        i = j;
    }
    Ok(best_t)
}

/// Global cardinality-matching calibration, optionally on min-max normalized scores.
pub fn calibrate_lca_global(
    train_lcard: f64,
    scores: &ScoreMatrix,
    normalize: bool,
) -> Result<ThresholdRule> {
    if normalize {
        let mm = MinMax::fit(scores)?;
        let t = lca_threshold(train_lcard, &mm.apply(scores))?;
        Ok(ThresholdRule::LcaGlobal {
            t,
            normalization: Some(mm),
        })
    } else {
        Ok(ThresholdRule::LcaGlobal {
            t: lca_threshold(train_lcard, scores)?,
            normalization: None,
        })
    }
}

/// Per-label thresholds that let through the top `round(rate × n)` scores of each column.
pub fn labelwise_thresholds(
    rates: &BTreeMap<String, f64>,
    scores: &ScoreMatrix,
) -> Result<BTreeMap<String, f64>> {
    if scores.n_rows() == 0 {
        return Err(Error::EmptyScores);
    }
    let n = scores.n_rows();
    let mut out = BTreeMap::new();
    for (c, label) in scores.labels().iter().enumerate() {
        let rate = *rates
            .get(label)
            .ok_or_else(|| Error::UnknownLabel(label.clone()))?;
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidParameter(format!(
                "rate for {label:?} must be in [0, 1], got {rate}"
            )));
        }
        let mut col: Vec<f64> = scores.column(c).collect();
        col.sort_unstable_by(|a, b| b.total_cmp(a));
        let k = (rate * n as f64).round() as usize;
        let t = if k >= n { below(col[n - 1]) } else { col[k] };
        out.insert(label.clone(), t);
    }
    Ok(out)
}

pub fn calibrate_lca_labelwise(
    rates: &BTreeMap<String, f64>,
    scores: &ScoreMatrix,
    normalize: bool,
) -> Result<ThresholdRule> {
    if normalize {
        let mm = MinMax::fit(scores)?;
        Ok(ThresholdRule::LcaLabelwise {
            per_label_t: labelwise_thresholds(rates, &mm.apply(scores))?,
            normalization: Some(mm),
        })
    } else {
        Ok(ThresholdRule::LcaLabelwise {
            per_label_t: labelwise_thresholds(rates, scores)?,
            normalization: None,
        })
    }
}

/// Fraction of samples carrying each label.
pub fn label_rates(sets: &[BTreeSet<String>], labels: &[String]) -> BTreeMap<String, f64> {
    let n = sets.len().max(1) as f64;
    labels
        .iter()
        .map(|l| {
            let k = sets.iter().filter(|s| s.contains(l)).count();
            (l.clone(), k as f64 / n)
        })
        .collect()
}

/// Mean number of labels per sample.
pub fn label_cardinality(sets: &[BTreeSet<String>]) -> f64 {
    if sets.is_empty() {
        return 0.0;
    }
    sets.iter().map(BTreeSet::len).sum::<usize>() as f64 / sets.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> ScoreMatrix {
        ScoreMatrix::anonymous(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn normalization() {
        let n = normalize_scores(&m(&[&[-1.0, 0.0, 1.0]])).unwrap();
        assert_eq!(n.values(), &[0.0, 0.5, 1.0]);
        let unit = m(&[&[0.0, 0.3], &[1.0, 0.7]]);
        assert_eq!(normalize_scores(&unit).unwrap(), unit);
        assert!(matches!(
            normalize_scores(&m(&[&[2.0, 2.0]])),
            Err(Error::ConstantScores)
        ));
    }

    #[test]
    fn lca_strict_boundary_example() {
        // candidates: below-min, 0.1, 0.2, 0.8, 0.9 -> cardinalities 2, 1.5, 1, 0.5, 0
        let s = m(&[&[0.9, 0.1], &[0.8, 0.2]]);
        assert_eq!(lca_threshold(1.0, &s).unwrap(), 0.2);
    }

    #[test]
    fn lca_saturation_and_empty() {
        let s = m(&[&[0.9, 0.1], &[0.8, 0.2]]);
        let t = lca_threshold(2.0, &s).unwrap();
        assert!(t < 0.1);
        assert_eq!(assign_above(&s, t).count_true(), 4);
        assert_eq!(lca_threshold(0.0, &s).unwrap(), 0.9);
    }

    #[test]
    fn lca_tie_prefers_larger_threshold() {
        // target 1.25 sits halfway between cardinalities 1.0 (t=0.2) and 1.5 (t=0.1)
        let s = m(&[&[0.9, 0.1], &[0.8, 0.2]]);
        assert_eq!(lca_threshold(1.25, &s).unwrap(), 0.2);
    }

    #[test]
    fn lca_normalized_variant_stores_bounds() {
        let s = m(&[&[-1.0, 3.0], &[1.0, -0.5]]);
        let rule = calibrate_lca_global(1.0, &s, true).unwrap();
        let ThresholdRule::LcaGlobal { t, normalization: Some(mm) } = rule.clone() else {
            panic!("expected normalized rule");
        };
        assert_eq!((mm.min, mm.max), (-1.0, 3.0));
        assert!((0.0..=1.0).contains(&t));
        let policy = ThresholdPolicy { rule, fix_null: false };
        assert_eq!(policy.apply(&s).unwrap().count_true(), 2);
        assert!(matches!(
            calibrate_lca_global(1.0, &m(&[&[1.0, 1.0]]), true),
            Err(Error::ConstantScores)
        ));
    }

    #[test]
    fn labelwise_order_statistics() {
        let s = m(&[&[0.9], &[0.7], &[0.2], &[0.1]]);
        let rates = |r: f64| BTreeMap::from([("0".to_string(), r)]);
        let t = labelwise_thresholds(&rates(0.5), &s).unwrap()["0"];
        assert_eq!(t, 0.2);
        assert_eq!(assign_above(&s, t).count_true(), 2);

        let t0 = labelwise_thresholds(&rates(0.0), &s).unwrap()["0"];
        assert_eq!(assign_above(&s, t0).count_true(), 0);
        let t1 = labelwise_thresholds(&rates(1.0), &s).unwrap()["0"];
        assert_eq!(assign_above(&s, t1).count_true(), 4);
        assert!(labelwise_thresholds(&rates(1.5), &s).is_err());
        assert!(labelwise_thresholds(&BTreeMap::new(), &s).is_err());
    }

    #[test]
    fn fix_null_rescues_argmax() {
        let s = m(&[&[-0.5, -0.9], &[0.3, 0.1], &[-1.0, -1.0]]);
        let p = ThresholdPolicy::fixed(0.0).with_fix_null(true);
        let a = p.apply(&s).unwrap();
        assert_eq!(a.row(0), &[true, false]);
        assert_eq!(a.row(1), &[true, true]);
        // ties go to the first column
        assert_eq!(a.row(2), &[true, false]);
    }

    #[test]
    fn policy_json_shape() {
        let p = ThresholdPolicy::fixed(-0.25).with_fix_null(true);
        let json = serde_json::to_string(&p).unwrap();
        assert_eq!(json, r#"{"kind":"fixed","t":-0.25,"fix_null":true}"#);
        let back: ThresholdPolicy = serde_json::from_str(&json).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rates_and_cardinality() {
        let sets: Vec<BTreeSet<String>> = vec![
            ["a".to_string()].into(),
            ["a".to_string(), "b".to_string()].into(),
        ];
        let r = label_rates(&sets, &["a".to_string(), "b".to_string()]);
        assert_eq!(r["a"], 1.0);
        assert_eq!(r["b"], 0.5);
        assert_eq!(label_cardinality(&sets), 1.5);
    }
}
