//! One-vs-rest L2-regularized linear SVM over pooled features.
//!
//! Each class gets an independent binary hinge-loss problem
//!
//! ```text
//! J_j(w, b) = 1/2 ||w||^2 + c_reg * sum_i max(0, 1 - y_ij (w'f_i + b))
//! ```
//!
//! trained by stochastic subgradient descent with the step schedule
//! `eta_t = lr0 / (1 + lr0 * t / c_reg)`. The per-class problems are seeded
//! independently (`seed + class index`) so their update sequences do not
//! interact. Prediction is the argmax over class scores with ties broken
//! toward the smallest index.

use ndarray::{Array1, Array2};

use crate::pooling::PooledFeature;
use crate::rng::Rng;
use crate::{Error, Result};

/// One weight row and bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearSvmModel {
    pub fn num_classes(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }
}

/// Trainer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmConfig {
    /// Hinge-loss weight; larger values fit the data harder.
    pub c_reg: f64,
    pub epochs: usize,
    /// Initial step size of the decaying schedule.
    pub lr0: f64,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c_reg: 1.0,
            epochs: 40,
            lr0: 0.1,
            seed: 0,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c_reg > 0.0) {
            return Err(Error::Config(format!("svm c_reg must be > 0, got {}", self.c_reg)));
        }
        if !(self.lr0 > 0.0) {
            return Err(Error::Config(format!("svm lr0 must be > 0, got {}", self.lr0)));
        }
        Ok(())
    }
}

/// Counts of true class (rows) against predicted class (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[[i, i]]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Per-true-class accuracy; classes with no test examples report 0.
    pub fn per_class_accuracy(&self) -> Vec<f64> {
        (0..self.num_classes())
            .map(|i| {
                let row: u64 = self.counts.row(i).iter().sum();
                if row == 0 {
                    0.0
                } else {
                    self.counts[[i, i]] as f64 / row as f64
                }
            })
            .collect()
    }

    /// CSV with a predicted-class header row and one row per true class.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("true\\predicted");
        for name in class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, name) in class_names.iter().enumerate() {
            out.push_str(name);
            for j in 0..self.num_classes() {
                out.push_str(&format!(",{}", self.counts[[i, j]]));
            }
            out.push('\n');
        }
        out
    }
}

/// Subgradient of the per-example objective
/// `(1/2n)||w||^2 + c_reg * max(0, 1 - y(w'f + b))`
/// with respect to `(w, b)`.
fn example_subgradient(
    w: &Array1<f64>,
    b: f64,
    f: &Array1<f64>,
    y: f64,
    n: usize,
    c_reg: f64,
) -> (Array1<f64>, f64) {
    let margin = y * (w.dot(f) + b);
    let mut gw = w / n as f64;
    let mut gb = 0.0;
    if margin < 1.0 {
        gw.scaled_add(-c_reg * y, f);
        gb = -c_reg * y;
    }
    (gw, gb)
}

/// Full binary objective of one class row over a feature set.
pub fn class_objective(w: &Array1<f64>, b: f64, features: &[&PooledFeature], signs: &[f64], c_reg: f64) -> f64 {
    let reg = 0.5 * w.dot(w);
    let hinge: f64 = features
        .iter()
        .zip(signs)
        .map(|(f, &y)| (1.0 - y * (w.dot(&f.vector) + b)).max(0.0))
        .sum();
    reg + c_reg * hinge
}

fn check_features(features: &[PooledFeature]) -> Result<usize> {
    let first = features
        .first()
        .ok_or_else(|| Error::Training("no features to train on".into()))?;
    let dim = first.vector.len();
    for f in features {
        if f.vector.len() != dim {
            return Err(Error::Dim {
                context: "svm features",
                expected: dim,
                got: f.vector.len(),
            });
        }
    }
    Ok(dim)
}

/// Train one-vs-rest hinge classifiers. Deterministic given the seed.
pub fn train_svm(features: &[PooledFeature], cfg: &SvmConfig) -> Result<LinearSvmModel> {
    cfg.validate()?;
    let dim = check_features(features)?;
    let num_classes = features.iter().map(|f| f.label).max().unwrap() + 1;
    let present = features
        .iter()
        .map(|f| f.label)
        .collect::<std::collections::HashSet<_>>()
        .len();
    if present < 2 {
        return Err(Error::Training(format!(
            "training needs at least 2 distinct classes, got {present}"
        )));
    }

    let n = features.len();
    let mut weights = Array2::zeros((num_classes, dim));
    let mut bias = Array1::zeros(num_classes);
    for class in 0..num_classes {
        let signs: Vec<f64> = features
            .iter()
            .map(|f| if f.label == class { 1.0 } else { -1.0 })
            .collect();
        let mut w = Array1::zeros(dim);
        let mut b = 0.0;
        let mut rng = Rng::new(cfg.seed.wrapping_add(class as u64));
        let mut order: Vec<usize> = (0..n).collect();
        let mut t = 0u64;
        for _ in 0..cfg.epochs {
            rng.shuffle(&mut order);
            for &i in &order {
                let eta = cfg.lr0 / (1.0 + cfg.lr0 * t as f64 / cfg.c_reg);
                let (gw, gb) = example_subgradient(&w, b, &features[i].vector, signs[i], n, cfg.c_reg);
                w.scaled_add(-eta, &gw);
                b -= eta * gb;
                t += 1;
            }
        }
        weights.row_mut(class).assign(&w);
        bias[class] = b;
    }
    Ok(LinearSvmModel { weights, bias })
}

/// Argmax class score; ties go to the smallest class index.
pub fn predict(model: &LinearSvmModel, f: &Array1<f64>) -> Result<usize> {
    if f.len() != model.dim() {
        return Err(Error::Dim {
            context: "svm predict",
            expected: model.dim(),
            got: f.len(),
        });
    }
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for class in 0..model.num_classes() {
        let score = model.weights.row(class).dot(f) + model.bias[class];
        if score > best_score {
            best = class;
            best_score = score;
        }
    }
    Ok(best)
}

/// Accuracy and confusion matrix over a test set.
pub fn evaluate(model: &LinearSvmModel, test: &[PooledFeature]) -> Result<(f64, ConfusionMatrix)> {
    if test.is_empty() {
        return Err(Error::Training("empty test set".into()));
    }
    let c = model.num_classes();
    let mut counts = Array2::zeros((c, c));
    for f in test {
        if f.label >= c {
            return Err(Error::Compat(format!(
                "test label {} out of range for a {c}-class model ('{}')",
                f.label, f.image_id
            )));
        }
        let predicted = predict(model, &f.vector)?;
        counts[[f.label, predicted]] += 1;
    }
    let cm = ConfusionMatrix { counts };
    Ok((cm.accuracy(), cm))
}
