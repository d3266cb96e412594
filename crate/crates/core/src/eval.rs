//! Threshold and ranking metrics, k-fold cross-validation, unseen-test
//! comparisons, the component ablation grid, and linear probes of encoder
//! features.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::{kfold_partitions, BiasKind, Labeled};
use crate::math;
use crate::model::{fit, BaselineKind, BiasAttribute, Example, RbfNetModel, TrainConfig};
use crate::rng::Rng;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Confusion {
    /// A probability at or above `threshold` predicts the positive class.
    pub fn from_predictions(probs: &[f64], labels: &[bool], threshold: f64) -> Result<Self> {
        if probs.len() != labels.len() {
            return Err(Error::LengthMismatch(format!("{} scores, {} labels", probs.len(), labels.len())));
        }
        let mut c = Confusion::default();
        for (&p, &y) in probs.iter().zip(labels) {
            match (p >= threshold, y) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn n(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.n())
    }

    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }
}

/// Metrics whose denominator was zero and which are reported as 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UndefinedMetrics {
    pub sensitivity: bool,
    pub specificity: bool,
    pub f1: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub specificity: f64,
    pub sensitivity: f64,
    pub f1: f64,
    pub roc_auc: f64,
    pub confusion: Confusion,
    pub n: usize,
    pub undefined: UndefinedMetrics,
}

impl MetricsReport {
    pub fn from_confusion(confusion: Confusion, roc_auc: f64) -> Self {
        let c = confusion;
        Self {
            accuracy: c.accuracy(),
            specificity: c.specificity(),
            sensitivity: c.sensitivity(),
            f1: c.f1(),
            roc_auc,
            confusion,
            n: c.n(),
            undefined: UndefinedMetrics {
                sensitivity: c.tp + c.fn_ == 0,
                specificity: c.tn + c.fp == 0,
                f1: 2 * c.tp + c.fp + c.fn_ == 0,
            },
        }
    }

    /// `(accuracy, specificity, sensitivity, f1, roc_auc)`.
    pub fn values(&self) -> [f64; 5] {
        [self.accuracy, self.specificity, self.sensitivity, self.f1, self.roc_auc]
    }

    /// `|specificity - sensitivity|`.
    pub fn balance_gap(&self) -> f64 {
        (self.specificity - self.sensitivity).abs()
    }
}

pub const METRIC_NAMES: [&str; 5] = ["accuracy", "specificity", "sensitivity", "f1", "roc_auc"];

/// Probability that a random positive outscores a random negative, ties
/// counting one half, via average ranks.
pub fn roc_auc(probs: &[f64], labels: &[bool]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch(format!("{} scores, {} labels", probs.len(), labels.len())));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClassInput);
    }
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    // sum of doubled average ranks of the positives keeps everything integral
    let mut rank2_sum: u128 = 0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && probs[idx[j + 1]] == probs[idx[i]] {
            j += 1;
        }
        let doubled = (i + 1 + j + 1) as u128;
        let pos_in_run = idx[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        rank2_sum += doubled * pos_in_run;
        i = j + 1;
    }
    let (p, q) = (n_pos as u128, n_neg as u128);
    let u2 = rank2_sum - p * (p + 1);
    Ok(u2 as f64 / (2 * p * q) as f64)
}

pub fn compute_metrics(probs: &[f64], labels: &[bool], threshold: f64) -> Result<MetricsReport> {
    let confusion = Confusion::from_predictions(probs, labels, threshold)?;
    let auc = roc_auc(probs, labels)?;
    Ok(MetricsReport::from_confusion(confusion, auc))
}

/// Unweighted mean of every metric; confusion counts and `n` are summed.
pub fn mean_report(reports: &[MetricsReport]) -> MetricsReport {
    let k = reports.len().max(1) as f64;
    let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let mut confusion = Confusion::default();
    let mut undefined = UndefinedMetrics::default();
    for r in reports {
        confusion.tp += r.confusion.tp;
        confusion.fp += r.confusion.fp;
        confusion.tn += r.confusion.tn;
        confusion.fn_ += r.confusion.fn_;
        undefined.sensitivity |= r.undefined.sensitivity;
        undefined.specificity |= r.undefined.specificity;
        undefined.f1 |= r.undefined.f1;
    }
    MetricsReport {
        accuracy: avg(|r| r.accuracy),
        specificity: avg(|r| r.specificity),
        sensitivity: avg(|r| r.sensitivity),
        f1: avg(|r| r.f1),
        roc_auc: avg(|r| r.roc_auc),
        confusion,
        n: confusion.n(),
        undefined,
    }
}

/// Three-decimal presentation, truncating toward zero after a `1e-9` guard
/// against binary representation error.
pub fn three_places(x: f64) -> f64 {
    math::floor(x * 1000.0 + 1e-9) / 1000.0
}

pub fn format_metric(x: f64) -> String {
    format!("{:.3}", three_places(x))
}

pub fn evaluate(model: &RbfNetModel, data: &[&Example]) -> Result<MetricsReport> {
    let probs = model.predict(data)?;
    let labels: Vec<bool> = data.iter().map(|e| e.label.is_diseased()).collect();
    compute_metrics(&probs, &labels, 0.5)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvResult {
    pub mean: MetricsReport,
    pub folds: Vec<MetricsReport>,
}

/// Runs `fit_eval(fold, train_indices, held_out_indices)` over stratified
/// folds and averages the reports in fold order.
pub fn cross_validate<T: Labeled>(
    items: &[T],
    k: usize,
    seed: u64,
    mut fit_eval: impl FnMut(usize, &[usize], &[usize]) -> Result<MetricsReport>,
) -> Result<CvResult> {
    let folds = kfold_partitions(items, k, seed)?;
    let mut reports = Vec::with_capacity(k);
    for (i, held) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        reports.push(fit_eval(i, &train, held)?);
    }
    Ok(CvResult { mean: mean_report(&reports), folds: reports })
}

/// Seed of the model trained for CV fold `fold`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    Rng::stream(seed, 0x0C5F_0000 + fold as u64).next_u64()
}

/// k-fold CV: each fold trains a fresh model, validated on the held-out fold,
/// and scores its final state there.
pub fn run_cross_validation(kind: BaselineKind, data: &[&Example], k: usize, cfg: &TrainConfig) -> Result<CvResult> {
    cross_validate(data, k, cfg.seed, |fold, train_idx, held_idx| {
        let train: Vec<&Example> = train_idx.iter().map(|&i| data[i]).collect();
        let held: Vec<&Example> = held_idx.iter().map(|&i| data[i]).collect();
        let fold_cfg = TrainConfig { seed: fold_seed(cfg.seed, fold), ..cfg.clone() };
        let (model, _) = fit(kind, &train, Some(&held), &fold_cfg)?;
        evaluate(&model, &held)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EvalKind {
    CrossValidation,
    Unseen,
}

impl EvalKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalKind::CrossValidation => "cv",
            EvalKind::Unseen => "unseen",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub model: BaselineKind,
    pub eval_kind: EvalKind,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn get(&self, model: BaselineKind, eval_kind: EvalKind) -> Option<&MetricsReport> {
        self.rows.iter().find(|r| r.model == model && r.eval_kind == eval_kind).map(|r| &r.report)
    }
}

/// Rows: CNN-LSTM cross-validated on `train`, CNN-LSTM on `test`, and the
/// adversarial model on `test`; `with_cnn` prepends the CNN pair.
pub fn run_comparison(
    train: &[&Example],
    test: &[&Example],
    k: usize,
    cfg: &TrainConfig,
    with_cnn: bool,
) -> Result<ComparisonTable> {
    let mut rows = Vec::new();
    let mut kinds = vec![BaselineKind::CnnLstm];
    if with_cnn {
        kinds.insert(0, BaselineKind::Cnn);
    }
    for kind in kinds {
        rows.push(ComparisonRow {
            model: kind,
            eval_kind: EvalKind::CrossValidation,
            report: run_cross_validation(kind, train, k, cfg)?.mean,
        });
        let (model, _) = fit(kind, train, None, cfg)?;
        rows.push(ComparisonRow { model: kind, eval_kind: EvalKind::Unseen, report: evaluate(&model, test)? });
    }
    let (model, _) = fit(BaselineKind::RbfNet, train, None, cfg)?;
    rows.push(ComparisonRow {
        model: BaselineKind::RbfNet,
        eval_kind: EvalKind::Unseen,
        report: evaluate(&model, test)?,
    });
    Ok(ComparisonTable { rows })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationCell {
    pub condition: BiasKind,
    pub model: BaselineKind,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub cells: Vec<AblationCell>,
}

impl AblationTable {
    pub fn get(&self, condition: BiasKind, model: BaselineKind) -> Option<&MetricsReport> {
        self.cells
            .iter()
            .find(|c| c.condition == condition && c.model == model)
            .map(|c| &c.report)
    }
}

/// One training condition: split kind plus its train and unseen test sets.
pub struct Condition<'a> {
    pub kind: BiasKind,
    pub train: Vec<&'a Example>,
    pub test: Vec<&'a Example>,
}

/// Trains every model kind on every condition and scores the unseen test
/// sets. The bias predictor targets the attribute each split skews.
pub fn run_ablation(conditions: &[Condition<'_>], cfg: &TrainConfig) -> Result<AblationTable> {
    let mut cells = Vec::new();
    for cond in conditions {
        let c = TrainConfig { bias_attribute: BiasAttribute::for_split(cond.kind), ..cfg.clone() };
        for kind in BaselineKind::ALL {
            let (model, _) = fit(kind, &cond.train, None, &c)?;
            cells.push(AblationCell { condition: cond.kind, model: kind, report: evaluate(&model, &cond.test)? });
        }
    }
    Ok(AblationTable { cells })
}

/// Logistic regression on standardized features, fit by full-batch ADAM.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearProbe {
    pub const ITERATIONS: usize = 500;
    pub const LEARNING_RATE: f64 = 0.05;
    pub const L2: f64 = 1e-3;

    pub fn fit(features: &[Vec<f64>], targets: &[bool]) -> Result<Self> {
        if features.is_empty() || features.len() != targets.len() {
            return Err(Error::LengthMismatch(format!("{} features, {} targets", features.len(), targets.len())));
        }
        let d = features[0].len();
        let n = features.len() as f64;
        let mut mean = vec![0.0; d];
        for f in features {
            math::axpy(1.0 / n, f, &mut mean);
        }
        let mut scale = vec![0.0; d];
        for f in features {
            for j in 0..d {
                scale[j] += (f[j] - mean[j]) * (f[j] - mean[j]) / n;
            }
        }
        for s in &mut scale {
            *s = if *s > 1e-12 { math::sqrt(*s) } else { 1.0 };
        }
        let x: Vec<Vec<f64>> = features
            .iter()
            .map(|f| (0..d).map(|j| (f[j] - mean[j]) / scale[j]).collect())
            .collect();
        let mut theta = vec![0.0; d + 1];
        let (mut m, mut v) = (vec![0.0; d + 1], vec![0.0; d + 1]);
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        for t in 1..=Self::ITERATIONS {
            let mut g = vec![0.0; d + 1];
            for (xi, &yi) in x.iter().zip(targets) {
                let p = math::sigmoid(math::dot(&theta[..d], xi) + theta[d]);
                let e = (p - yi as u8 as f64) / n;
                math::axpy(e, xi, &mut g[..d]);
                g[d] += e;
            }
            for j in 0..d {
                g[j] += Self::L2 * theta[j];
            }
            let c1 = 1.0 - libm::pow(b1, t as f64);
            let c2 = 1.0 - libm::pow(b2, t as f64);
            for j in 0..=d {
                m[j] = b1 * m[j] + (1.0 - b1) * g[j];
                v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
                theta[j] -= Self::LEARNING_RATE * (m[j] / c1) / (math::sqrt(v[j] / c2) + eps);
            }
        }
        let bias = theta[d];
        theta.truncate(d);
        Ok(Self { mean, scale, weights: theta, bias })
    }

    pub fn predict(&self, feature: &[f64]) -> f64 {
        let z: f64 = feature
            .iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .zip(&self.weights)
            .map(|(((f, m), s), w)| (f - m) / s * w)
            .sum();
        math::sigmoid(z + self.bias)
    }

    pub fn accuracy(&self, features: &[Vec<f64>], targets: &[bool]) -> f64 {
        let hits = features.iter().zip(targets).filter(|(f, &t)| (self.predict(f) >= 0.5) == t).count();
        ratio(hits, features.len())
    }
}

/// Test accuracy of a probe fit on `(train_x, train_y)`.
pub fn probe_accuracy(train_x: &[Vec<f64>], train_y: &[bool], test_x: &[Vec<f64>], test_y: &[bool]) -> Result<f64> {
    if test_x.len() != test_y.len() {
        return Err(Error::LengthMismatch(format!("{} features, {} targets", test_x.len(), test_y.len())));
    }
    Ok(LinearProbe::fit(train_x, train_y)?.accuracy(test_x, test_y))
}
