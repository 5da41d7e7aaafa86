//! Confusion counts, micro-averaged scores and threshold sweeps.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{AssignmentMatrix, ScoreMatrix};
use crate::threshold::assign_above;

/// Binary counts for one label against all others.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelConfusion {
    pub label: String,
    pub tn: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tp: usize,
}

impl LabelConfusion {
    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }
}

/// Micro-averaged precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any of the three hit a zero denominator and was reported as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub per_label: Vec<LabelConfusion>,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub zero_division: bool,
    pub pred_cardinality: f64,
}

pub fn confusion(gold: &AssignmentMatrix, pred: &AssignmentMatrix) -> Result<Vec<LabelConfusion>> {
    if gold.n_rows() != pred.n_rows() || gold.labels() != pred.labels() {
        return Err(Error::ShapeMismatch(format!(
            "gold is {}x{}, predictions are {}x{} (or label order differs)",
            gold.n_rows(),
            gold.n_cols(),
            pred.n_rows(),
            pred.n_cols()
        )));
    }
    Ok(gold
        .labels()
        .iter()
        .enumerate()
        .map(|(c, label)| {
            let mut cm = LabelConfusion {
                label: label.clone(),
                tn: 0,
                fp: 0,
                fn_: 0,
                tp: 0,
            };
            for r in 0..gold.n_rows() {
                match (gold.get(r, c), pred.get(r, c)) {
                    (false, false) => cm.tn += 1,
                    (false, true) => cm.fp += 1,
                    (true, false) => cm.fn_ += 1,
                    (true, true) => cm.tp += 1,
                }
            }
            cm
        })
        .collect())
}

/// Micro scores from pooled counts.
pub fn micro_from_counts(tp: usize, fp: usize, fn_: usize) -> MicroScores {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(num as f64 / den as f64)
        }
    };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f1 = match (p, r) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MicroScores {
        precision: p.unwrap_or(0.0),
        recall: r.unwrap_or(0.0),
        f1: f1.unwrap_or(0.0),
        zero_division: p.is_none() || r.is_none() || f1.is_none(),
    }
}

pub fn micro_prf(confusions: &[LabelConfusion]) -> MicroScores {
    let (tp, fp, fn_) = confusions
        .iter()
        .fold((0, 0, 0), |(tp, fp, fn_), c| (tp + c.tp, fp + c.fp, fn_ + c.fn_));
    micro_from_counts(tp, fp, fn_)
}

/// Mean number of assigned labels per row.
pub fn prediction_cardinality(pred: &AssignmentMatrix) -> f64 {
    if pred.n_rows() == 0 {
        return 0.0;
    }
    pred.count_true() as f64 / pred.n_rows() as f64
}

pub fn evaluate(gold: &AssignmentMatrix, pred: &AssignmentMatrix) -> Result<EvalReport> {
    let per_label = confusion(gold, pred)?;
    let micro = micro_prf(&per_label);
    Ok(EvalReport {
        n_samples: gold.n_rows(),
        per_label,
        micro_precision: micro.precision,
        micro_recall: micro.recall,
        micro_f1: micro.f1,
        zero_division: micro.zero_division,
        pred_cardinality: prediction_cardinality(pred),
    })
}

impl EvalReport {
    /// Aligned table: one row per label with tn/fp/fn/tp, a total row, then micro scores.
    pub fn to_text(&self) -> String {
        let name_w = self
            .per_label
            .iter()
            .map(|c| c.label.chars().count())
            .chain(["Label".len(), "Total".len()])
            .max()
            .unwrap_or(5);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>8} {:>8} {:>8} {:>8}",
            "Label", "tn", "fp", "fn", "tp"
        );
        let (mut tn, mut fp, mut fn_, mut tp) = (0, 0, 0, 0);
        for c in &self.per_label {
            let pad = name_w - c.label.chars().count() + c.label.len();
            let _ = writeln!(
                out,
                "{:<pad$}  {:>8} {:>8} {:>8} {:>8}",
                c.label, c.tn, c.fp, c.fn_, c.tp
            );
            tn += c.tn;
            fp += c.fp;
            fn_ += c.fn_;
            tp += c.tp;
        }
        let _ = writeln!(
            out,
            "{:<name_w$}  {:>8} {:>8} {:>8} {:>8}",
            "Total", tn, fp, fn_, tp
        );
        let _ = writeln!(out);
        let _ = writeln!(out, "samples          {}", self.n_samples);
        let _ = writeln!(out, "micro precision  {:.4}", self.micro_precision);
        let _ = writeln!(out, "micro recall     {:.4}", self.micro_recall);
        let _ = writeln!(out, "micro F1         {:.4}", self.micro_f1);
        let _ = writeln!(out, "pred cardinality {:.4}", self.pred_cardinality);
        if self.zero_division {
            let _ = writeln!(out, "note: zero denominator, affected scores reported as 0");
        }
        out
    }
}

/// Least-squares `a·t² + b·t + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// `a` values at or above this count as "not concave".
const CONCAVITY_EPS: f64 = 1e-12;

impl QuadraticFit {
    pub fn eval(&self, t: f64) -> f64 {
        (self.a * t + self.b) * t + self.c
    }

    /// Location of the maximum, when the parabola opens downward.
    pub fn vertex(&self) -> Option<f64> {
        (self.a < -CONCAVITY_EPS).then(|| -self.b / (2.0 * self.a))
    }
}

/// Solves the 3x3 normal equations of a quadratic least-squares fit.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Result<QuadraticFit> {
    let mut ts: Vec<f64> = points.iter().map(|p| p.0).collect();
    ts.sort_unstable_by(f64::total_cmp);
    ts.dedup();
    if ts.len() < 3 {
        return Err(Error::DegenerateFit(ts.len()));
    }
    // power sums Σtᵏ for k = 0..4 and moments Σ y tᵏ for k = 0..2
    let mut s = [0.0f64; 5];
    let mut m = [0.0f64; 3];
    for &(t, y) in points {
        let mut p = 1.0;
        for (k, sk) in s.iter_mut().enumerate() {
            *sk += p;
            if k < 3 {
                m[k] += y * p;
            }
            p *= t;
        }
    }
    // unknowns ordered (c, b, a)
    let mut aug = [
        [s[0], s[1], s[2], m[0]],
        [s[1], s[2], s[3], m[1]],
        [s[2], s[3], s[4], m[2]],
    ];
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        if aug[col][col] == 0.0 {
            return Err(Error::DegenerateFit(ts.len()));
        }
        for row in col + 1..3 {
            let f = aug[row][col] / aug[col][col];
            let pivot_row = aug[col];
            for (dst, src) in aug[row].iter_mut().zip(pivot_row).skip(col) {
                *dst -= f * src;
            }
        }
    }
    let mut x = [0.0f64; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| aug[row][k] * x[k]).sum();
        x[row] = (aug[row][3] - tail) / aug[row][row];
    }
    Ok(QuadraticFit {
        a: x[2],
        b: x[1],
        c: x[0],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub t: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub cardinality: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub fit: QuadraticFit,
    /// `None` means the fitted parabola has no interior maximum.
    pub vertex: Option<f64>,
}

impl SweepResult {
    pub fn from_points(points: Vec<SweepPoint>) -> Result<Self> {
        let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.t, p.f1)).collect();
        let fit = fit_quadratic(&xy)?;
        Ok(SweepResult {
            points,
            vertex: fit.vertex(),
            fit,
        })
    }

    /// `t<TAB>precision<TAB>recall<TAB>f1<TAB>cardinality` with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("t\tprecision\trecall\tf1\tcardinality\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                p.t, p.precision, p.recall, p.f1, p.cardinality
            );
        }
        out
    }

    pub fn summary(&self) -> String {
        let QuadraticFit { a, b, c } = self.fit;
        let mut out = format!("fit: f1 = {a:.6}*t^2 + {b:.6}*t + {c:.6}\n");
        match self.vertex {
            Some(v) => {
                let _ = writeln!(out, "vertex: t = {v:.6} (fitted f1 {:.6})", self.fit.eval(v));
            }
            None => out.push_str("vertex: no interior maximum\n"),
        }
        out
    }
}

/// Micro scores at each fixed threshold, plus a quadratic fit of F1 against t.
pub fn threshold_sweep(
    scores: &ScoreMatrix,
    gold: &AssignmentMatrix,
    t_values: &[f64],
) -> Result<SweepResult> {
    let points = t_values
        .iter()
        .map(|&t| {
            let pred = assign_above(scores, t);
            let micro = micro_prf(&confusion(gold, &pred)?);
            Ok(SweepPoint {
                t,
                precision: micro.precision,
                recall: micro.recall,
                f1: micro.f1,
                cardinality: prediction_cardinality(&pred),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    SweepResult::from_points(points)
}

/// Evenly spaced grid including both ends.
pub fn linspace(start: f64, end: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![start],
        _ => (0..steps)
            .map(|i| start + (end - start) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn am(rows: &[&[bool]]) -> AssignmentMatrix {
        let w = rows.first().map_or(0, |r| r.len());
        AssignmentMatrix::new(
            (0..w).map(|i| i.to_string()).collect(),
            rows.len(),
            rows.concat(),
        )
        .unwrap()
    }

    #[test]
    fn perfect_predictions() {
        let g = am(&[&[true, false], &[false, true]]);
        let cms = confusion(&g, &g).unwrap();
        assert!(cms.iter().all(|c| c.fp == 0 && c.fn_ == 0 && c.total() == 2));
        let s = micro_prf(&cms);
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        assert!(!s.zero_division);
    }

    #[test]
    fn all_false_positive() {
        let g = am(&[&[false], &[false], &[false]]);
        let p = am(&[&[true], &[true], &[true]]);
        let cms = confusion(&g, &p).unwrap();
        assert_eq!(cms[0].fp, 3);
        let s = micro_prf(&cms);
        assert_eq!(s.f1, 0.0);
        assert!(s.zero_division);
    }

    #[test]
    fn shape_mismatch() {
        let g = am(&[&[false]]);
        let p = am(&[&[false], &[true]]);
        assert!(matches!(confusion(&g, &p), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn cardinality() {
        assert_eq!(prediction_cardinality(&am(&[&[false, false]])), 0.0);
        let id = am(&[&[true, false, false], &[false, true, false], &[false, false, true]]);
        assert_eq!(prediction_cardinality(&id), 1.0);
        let rows = am(&[&[true, false, false], &[true, true, false], &[true, true, true]]);
        assert_eq!(prediction_cardinality(&rows), 2.0);
    }

    #[test]
    fn exact_parabola() {
        let f = |t: f64| -(t + 0.2) * (t + 0.2) + 0.85;
        let pts: Vec<_> = [-0.4, -0.2, 0.0].iter().map(|&t| (t, f(t))).collect();
        let fit = fit_quadratic(&pts).unwrap();
        assert!((fit.a + 1.0).abs() < 1e-10);
        assert!((fit.b + 0.4).abs() < 1e-10);
        assert!((fit.c - 0.81).abs() < 1e-10);
        assert!((fit.vertex().unwrap() + 0.2).abs() < 1e-10);
    }

    #[test]
    fn flat_and_convex_fits_have_no_vertex() {
        let flat = fit_quadratic(&[(0.0, 0.5), (1.0, 0.5), (2.0, 0.5)]).unwrap();
        assert!(flat.a.abs() < 1e-12 && flat.b.abs() < 1e-12);
        assert!(flat.vertex().is_none());
        let convex = fit_quadratic(&[(0.0, 0.0), (0.5, 0.25), (1.0, 1.0)]).unwrap();
        assert!(convex.a > 0.0);
        assert!(convex.vertex().is_none());
    }

    #[test]
    fn too_few_thresholds() {
        assert!(matches!(
            fit_quadratic(&[(0.0, 1.0), (1.0, 1.0), (1.0, 2.0)]),
            Err(Error::DegenerateFit(2))
        ));
    }

    #[test]
    fn grid() {
        let g = linspace(-0.4, 0.0, 9);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], -0.4);
        assert_eq!(g[8], 0.0);
        assert!((g[4] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn report_text_has_totals() {
        let g = am(&[&[true, false], &[false, true]]);
        let p = am(&[&[true, true], &[false, false]]);
        let r = evaluate(&g, &p).unwrap();
        let text = r.to_text();
        assert!(text.contains("Total"));
        assert!(text.contains("micro F1         0.5000"));
    }
}
