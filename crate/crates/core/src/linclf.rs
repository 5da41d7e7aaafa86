//! One-vs-rest linear max-margin classification.
//!
//! Each label gets an independent binary L1-loss SVM,
//!
//! ```text
//! min_{w,b}  ½‖w‖² + ½b² + C Σᵢ max(0, 1 − yᵢ(w·xᵢ + b))
//! ```
//!
//! solved by coordinate descent on the dual with the bias folded in as an
//! extra constant feature. Each coordinate step minimizes the dual exactly,
//! so the recorded dual objective never increases from one epoch to the next.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::matrix::{AssignmentMatrix, ScoreMatrix};
use crate::sparse::FeatureMatrix;

pub const DEFAULT_C: f64 = 1.5;

const MANIFEST_FILE: &str = "linear.json";
const WEIGHTS_FILE: &str = "linear.bin";
const FORMAT_TAG: &str = "hmtc-linear/1";
const WEIGHTS_MAGIC: &[u8; 8] = b"HMTCLIN1";

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    /// Trade-off between margin width and hinge loss.
    pub c: f64,
    /// Seeds the per-epoch coordinate order.
    pub seed: u64,
    /// Stop once the spread of projected gradients falls below this.
    pub tolerance: f64,
    pub max_epochs: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            c: DEFAULT_C,
            seed: 0,
            tolerance: 1e-3,
            max_epochs: 1000,
        }
    }
}

impl TrainParams {
    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::InvalidParameter(format!("C must be > 0, got {}", self.c)));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 || self.max_epochs == 0 {
            return Err(Error::InvalidParameter(
                "tolerance and max_epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Result of one binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Dual objective (minimization form) after each epoch.
    pub dual_objectives: Vec<f64>,
    pub converged: bool,
}

impl BinarySolution {
    pub fn epochs(&self) -> usize {
        self.dual_objectives.len()
    }

    pub fn decision(&self, x: &crate::sparse::SparseVector) -> f64 {
        x.dot_dense(&self.weights) + self.bias
    }
}

/// `½‖w‖² + ½b² + C Σ hinge`, the quantity the solver minimizes.
pub fn primal_objective(x: &FeatureMatrix, y: &[bool], weights: &[f64], bias: f64, c: f64) -> f64 {
    let reg = 0.5 * (weights.iter().map(|w| w * w).sum::<f64>() + bias * bias);
    reg + c * hinge_sum(x, y, weights, bias)
}

/// `Σ max(0, 1 − yᵢ(w·xᵢ + b))`
pub fn hinge_sum(x: &FeatureMatrix, y: &[bool], weights: &[f64], bias: f64) -> f64 {
    x.rows()
        .iter()
        .zip(y)
        .map(|(row, &pos)| {
            let sign = if pos { 1.0 } else { -1.0 };
            (1.0 - sign * (row.dot_dense(weights) + bias)).max(0.0)
        })
        .sum()
}

/// Trains one binary SVM. `y[i]` marks row `i` as positive.
pub fn train_binary(
    x: &FeatureMatrix,
    y: &[bool],
    params: &TrainParams,
    label: &str,
) -> Result<BinarySolution> {
    params.validate()?;
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    let positives = y.iter().filter(|&&p| p).count();
    let negatives = y.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::DegenerateLabel {
            label: label.to_string(),
            positives,
            negatives,
        });
    }

    let n = x.n_rows();
    let c = params.c;
    let sign: Vec<f64> = y.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
    // diagonal of the kernel including the constant bias feature
    let diag: Vec<f64> = x.rows().iter().map(|r| r.squared_norm() + 1.0).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; x.width()];
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut objectives = Vec::new();
    let mut converged = false;

    for _ in 0..params.max_epochs {
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let row = x.row(i);
            let g = sign[i] * (row.dot_dense(&w) + b) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / diag[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * sign[i];
                if step != 0.0 {
                    row.axpy_into(step, &mut w);
                    b += step;
                }
            }
        }
        let norm2 = w.iter().map(|v| v * v).sum::<f64>() + b * b;
        objectives.push(0.5 * norm2 - alpha.iter().sum::<f64>());
        if pg_max - pg_min < params.tolerance {
            converged = true;
            break;
        }
    }

    Ok(BinarySolution {
        weights: w,
        bias: b,
        dual_objectives: objectives,
        converged,
    })
}

/// Per-label weight vectors and biases over a fixed feature width.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    labels: Vec<String>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    c: f64,
    seed: u64,
    width: usize,
}

impl LinearModel {
    pub fn new(
        labels: Vec<String>,
        weights: Vec<Vec<f64>>,
        biases: Vec<f64>,
        c: f64,
        seed: u64,
    ) -> Result<Self> {
        let width = weights.first().map_or(0, Vec::len);
        if weights.len() != labels.len() || biases.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels, {} weight vectors, {} biases",
                labels.len(),
                weights.len(),
                biases.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| w.len() != width) {
            return Err(Error::DimensionMismatch {
                expected: width,
                actual: w.len(),
            });
        }
        Ok(LinearModel {
            labels,
            weights,
            biases,
            c,
            seed,
            width,
        })
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn weights(&self, label: usize) -> &[f64] {
        &self.weights[label]
    }

    pub fn bias(&self, label: usize) -> f64 {
        self.biases[label]
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `w_ℓ·xᵢ + b_ℓ` for every row and label, unnormalized.
    pub fn decision_scores(&self, x: &FeatureMatrix) -> Result<ScoreMatrix> {
        if x.width() != self.width {
            return Err(Error::DimensionMismatch {
                expected: self.width,
                actual: x.width(),
            });
        }
        let values: Vec<f64> = x
            .rows()
            .par_iter()
            .flat_map_iter(|row| {
                self.weights
                    .iter()
                    .zip(&self.biases)
                    .map(move |(w, b)| row.dot_dense(w) + b)
            })
            .collect();
        ScoreMatrix::new(self.labels.clone(), x.n_rows(), values)
    }

    /// Assigns every label whose score is strictly greater than `threshold`.
    pub fn predict(&self, x: &FeatureMatrix, threshold: f64) -> Result<AssignmentMatrix> {
        let scores = self.decision_scores(x)?;
        let values = scores.values().iter().map(|&s| s > threshold).collect();
        AssignmentMatrix::new(self.labels.clone(), scores.n_rows(), values)
    }

    /// Writes `linear.json` and `linear.bin` into `dir`.
    ///
    /// `linear.bin` layout, all little-endian: the 8-byte magic `HMTCLIN1`,
    /// `u32` label count, `u64` width, then per label in manifest order
    /// `width` `f64` weights followed by one `f64` bias.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fsutil::create_dir(dir)?;
        let manifest = LinearManifest {
            format: FORMAT_TAG.into(),
            labels: self.labels.clone(),
            c: self.c,
            seed: self.seed,
            width: self.width,
            weights_file: WEIGHTS_FILE.into(),
        };
        fsutil::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
        let mut buf = Vec::with_capacity(20 + self.labels.len() * (self.width + 1) * 8);
        buf.extend_from_slice(WEIGHTS_MAGIC);
        buf.extend_from_slice(&(self.labels.len() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.width as u64).to_le_bytes());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            for v in w {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            buf.extend_from_slice(&b.to_le_bytes());
        }
        let path = dir.join(WEIGHTS_FILE);
        fs::write(&path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: LinearManifest = fsutil::read_json(&dir.join(MANIFEST_FILE))?;
        if manifest.format != FORMAT_TAG {
            return Err(Error::ModelFormat(format!(
                "unsupported linear model format {:?}",
                manifest.format
            )));
        }
        let path = dir.join(&manifest.weights_file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let n = manifest.labels.len();
        let width = manifest.width;
        let expected = 20 + n * (width + 1) * 8;
        if bytes.len() != expected || &bytes[..8] != WEIGHTS_MAGIC {
            return Err(Error::ModelFormat(format!(
                "{}: expected {expected} bytes with magic header, found {}",
                path.display(),
                bytes.len()
            )));
        }
        let header_n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header_w = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        if header_n != n || header_w != width {
            return Err(Error::ModelFormat(
                "weight block header disagrees with manifest".into(),
            ));
        }
        let mut floats = bytes[20..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let mut weights = Vec::with_capacity(n);
        let mut biases = Vec::with_capacity(n);
        for _ in 0..n {
            weights.push(floats.by_ref().take(width).collect::<Vec<_>>());
            biases.push(floats.next().unwrap());
        }
        let mut model = LinearModel::new(manifest.labels, weights, biases, manifest.c, manifest.seed)?;
        model.width = width;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct LinearManifest {
    format: String,
    labels: Vec<String>,
    c: f64,
    seed: u64,
    width: usize,
    weights_file: String,
}

/// Trains one binary model per label against all other samples.
///
/// Every label uses the same seed, so a label's weights do not depend on
/// which other labels are trained alongside it.
pub fn train_ovr(
    x: &FeatureMatrix,
    y: &[BTreeSet<String>],
    labels: &[String],
    params: &TrainParams,
) -> Result<LinearModel> {
    params.validate()?;
    if y.len() != x.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            actual: y.len(),
        });
    }
    for set in y {
        if let Some(l) = set.iter().find(|l| !labels.contains(l)) {
            return Err(Error::UnknownLabel(l.clone()));
        }
    }
    let solutions = labels
        .par_iter()
        .map(|label| {
            let targets: Vec<bool> = y.iter().map(|s| s.contains(label)).collect();
            train_binary(x, &targets, params, label)
        })
        .collect::<Result<Vec<_>>>()?;
    let (weights, biases) = solutions.into_iter().map(|s| (s.weights, s.bias)).unzip();
    let mut model = LinearModel::new(labels.to_vec(), weights, biases, params.c, params.seed)?;
    model.width = x.width();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn one_class_label_is_degenerate() {
        let x = FeatureMatrix::from_dense(&[vec![1.0], vec![2.0]]);
        let err = train_binary(&x, &[true, true], &TrainParams::default(), "L").unwrap_err();
        assert!(matches!(err, Error::DegenerateLabel { positives: 2, negatives: 0, .. }));
    }

    #[test]
    fn ovr_rejects_unlisted_labels() {
        let x = FeatureMatrix::from_dense(&[vec![1.0], vec![-1.0]]);
        let y = vec![set(&["a"]), set(&["b"])];
        let err = train_ovr(&x, &y, &["a".to_string()], &TrainParams::default());
        assert!(matches!(err, Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn invalid_c() {
        let x = FeatureMatrix::from_dense(&[vec![1.0], vec![-1.0]]);
        let p = TrainParams::default().with_c(0.0);
        assert!(matches!(
            train_binary(&x, &[true, false], &p, "a"),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn decision_scores_are_dot_plus_bias() {
        let m = LinearModel::new(
            vec!["a".into(), "b".into()],
            vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            vec![0.0, -0.3],
            1.5,
            0,
        )
        .unwrap();
        let x = FeatureMatrix::from_dense(&[vec![2.0, 3.0], vec![0.0, 0.0]]);
        let s = m.decision_scores(&x).unwrap();
        assert_eq!(s.get(0, 0), 2.0);
        assert_eq!(s.get(1, 1), -0.3);
        let narrow = FeatureMatrix::from_dense(&[vec![1.0]]);
        assert!(matches!(
            m.decision_scores(&narrow),
            Err(Error::DimensionMismatch { expected: 2, actual: 1 })
        ));
    }

    #[test]
    fn predict_is_strict() {
        let m = LinearModel::new(
            vec!["a".into(), "b".into()],
            vec![vec![0.0], vec![0.0]],
            vec![-0.1, -0.2],
            1.5,
            0,
        )
        .unwrap();
        let x = FeatureMatrix::from_dense(&[vec![0.0]]);
        assert_eq!(m.predict(&x, -0.25).unwrap().row(0), &[true, true]);
        assert_eq!(m.predict(&x, -0.2).unwrap().row(0), &[true, false]);
        assert_eq!(m.predict(&x, 0.0).unwrap().row(0), &[false, false]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = LinearModel::new(
            vec!["a".into(), "ü b".into()],
            vec![vec![0.1, -2.5e-17, 3.0], vec![f64::MIN_POSITIVE, 0.0, -1.0]],
            vec![0.25, -0.75],
            1.5,
            42,
        )
        .unwrap();
        m.save(dir.path()).unwrap();
        assert_eq!(LinearModel::load(dir.path()).unwrap(), m);
        let bytes = fs::read(dir.path().join(WEIGHTS_FILE)).unwrap();
        assert_eq!(bytes.len(), 20 + 2 * 4 * 8);
        fs::write(dir.path().join(WEIGHTS_FILE), &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(LinearModel::load(dir.path()), Err(Error::ModelFormat(_))));
    }
}
