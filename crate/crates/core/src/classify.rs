//! Image classification with interferometric networks.
//!
//! Binary classifiers are a single sequence whose readout `p` is the
//! probability of the positive class, so the predicted distribution is
//! `(1 - p, p)`. Multiclass classifiers end in a width-`C` block followed by
//! a softmax. Both train on cross-entropy with Adam.

use std::fmt::Write as _;
use std::io::Write;

use crate::autodiff::{backward, forward_with_cache_encoded, ordered_batch_sum};
use crate::datasets::{batch_iter, LabeledImageSet};
use crate::error::{InnError, Result};
use crate::loss::{neg_log, neg_log_grad};
use crate::model::{softmax, InputEncoding, Network, NetworkArch};
use crate::optim::{init_network, AdamConfig, AdamState, InitScheme};
use crate::report::fmt_f64;
use crate::rng;
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// Width-1 output read as `P(class 1)`.
    Binary,
    Softmax,
}

impl Head {
    pub fn name(self) -> &'static str {
        match self {
            Head::Binary => "binary",
            Head::Softmax => "softmax",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub arch: NetworkArch,
    pub lr: f64,
    pub betas: (f64, f64),
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub head: Head,
    pub init: InitScheme,
    pub encoding: InputEncoding,
}

impl ClassifierConfig {
    /// Single sequence, `d = 256`, `L = 2`, batch 64, 10 epochs.
    pub fn binary() -> Self {
        Self {
            arch: NetworkArch::new(vec![256, 1], vec![2]).expect("valid default"),
            lr: 0.01,
            betas: (0.5, 0.9),
            batch_size: 64,
            epochs: 10,
            seed: 0,
            head: Head::Binary,
            init: InitScheme::Xavier,
            encoding: InputEncoding::Strict,
        }
    }

    /// `d = (256, 64, C)`, `L = (2, 2)`, batch 32, 3 epochs.
    pub fn multiclass(classes: usize) -> Self {
        Self {
            arch: NetworkArch::new(vec![256, 64, classes], vec![2, 2]).expect("valid default"),
            batch_size: 32,
            epochs: 3,
            head: Head::Softmax,
            ..Self::binary()
        }
    }

    pub fn num_classes(&self) -> usize {
        match self.head {
            Head::Binary => 2,
            Head::Softmax => self.arch.output_dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.head {
            Head::Binary if self.arch.output_dim() != 1 => Err(InnError::InvalidArchitecture(format!(
                "binary head needs final width 1, got {}",
                self.arch.output_dim()
            ))),
            Head::Softmax if self.arch.output_dim() < 2 => Err(InnError::InvalidArchitecture(
                "softmax head needs at least two classes".into(),
            )),
            _ if self.batch_size == 0 => Err(InnError::Config("batch size must be positive".into())),
            _ => Ok(()),
        }
    }
}

/// Class probabilities for raw network outputs.
pub fn class_probs(head: Head, out: &[f64]) -> Vec<f64> {
    match head {
        Head::Binary => vec![1.0 - out[0], out[0]],
        Head::Softmax => softmax(out),
    }
}

/// Predicted class: `p > 0.5` for binary (ties go to class 0), otherwise the
/// lowest-index argmax of the raw outputs.
pub fn predict(head: Head, out: &[f64]) -> usize {
    match head {
        Head::Binary => usize::from(out[0] > 0.5),
        Head::Softmax => argmax(out),
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `-(1/N) Σ_i ln p_i[y_i]` with probabilities clamped to `[1e-9, 1 - 1e-9]`.
pub fn cross_entropy(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(InnError::DimensionMismatch {
            expected: probs.len(),
            found: labels.len(),
        });
    }
    if probs.is_empty() {
        return Err(InnError::EmptyDataset("cross-entropy of an empty batch".into()));
    }
    let mut total = 0.0;
    for (p, &y) in probs.iter().zip(labels) {
        if y >= p.len() {
            return Err(InnError::LabelOutOfRange {
                label: y,
                classes: p.len(),
            });
        }
        total += neg_log(p[y]);
    }
    Ok(total / probs.len() as f64)
}

/// Loss of one sample and its adjoint with respect to the raw outputs.
pub fn sample_loss(head: Head, out: &[f64], label: usize) -> (f64, Vec<f64>) {
    match head {
        Head::Binary => {
            let p = out[0];
            if label == 1 {
                (neg_log(p), vec![neg_log_grad(p)])
            } else {
                (neg_log(1.0 - p), vec![-neg_log_grad(1.0 - p)])
            }
        }
        Head::Softmax => {
            let s = softmax(out);
            let g = neg_log_grad(s[label]);
            let adj = s
                .iter()
                .enumerate()
                .map(|(k, &sk)| {
                    let delta = if k == label { 1.0 } else { 0.0 };
                    g * s[label] * (delta - sk)
                })
                .collect();
            (neg_log(s[label]), adj)
        }
    }
}

/// One row of the per-epoch metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when no test set was given.
    pub test_acc: Option<f64>,
    pub avg_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub network: Network,
    pub head: Head,
    pub history: Vec<EpochMetrics>,
    /// Evaluation after the last epoch, when a test set was given.
    pub report: Option<MetricsReport>,
}

fn check_labels(set: &LabeledImageSet, classes: usize) -> Result<Vec<usize>> {
    let labels = set
        .labels
        .clone()
        .ok_or_else(|| InnError::EmptyDataset("classification needs labels".into()))?;
    if labels.is_empty() {
        return Err(InnError::EmptyDataset("training set is empty".into()));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(InnError::LabelOutOfRange { label, classes });
    }
    Ok(labels)
}

/// Binary training on a set relabeled to `{0, 1}` (class `a` = 0 is the
/// negative class).
pub fn train_binary(
    cfg: &ClassifierConfig,
    train: &LabeledImageSet,
    test: Option<&LabeledImageSet>,
) -> Result<TrainedClassifier> {
    if cfg.head != Head::Binary {
        return Err(InnError::Config("train_binary needs the binary head".into()));
    }
    let labels = check_labels(train, 2)?;
    for c in 0..2 {
        if !labels.contains(&c) {
            return Err(InnError::ClassAbsent(c));
        }
    }
    train_classifier(cfg, train, test)
}

pub fn train_multiclass(
    cfg: &ClassifierConfig,
    train: &LabeledImageSet,
    test: Option<&LabeledImageSet>,
) -> Result<TrainedClassifier> {
    if cfg.head != Head::Softmax {
        return Err(InnError::Config("train_multiclass needs the softmax head".into()));
    }
    train_classifier(cfg, train, test)
}

/// Trains with either head, evaluating on `test` after every epoch.
pub fn train_classifier(
    cfg: &ClassifierConfig,
    train: &LabeledImageSet,
    test: Option<&LabeledImageSet>,
) -> Result<TrainedClassifier> {
    cfg.validate()?;
    let classes = cfg.num_classes();
    let labels = check_labels(train, classes)?;
    if train.pixel_count() != cfg.arch.input_dim() {
        return Err(InnError::DimensionMismatch {
            expected: cfg.arch.input_dim(),
            found: train.pixel_count(),
        });
    }
    let mut net = init_network(&cfg.arch, cfg.init, &mut rng::stream(cfg.seed, "init"));
    let mut flat = net.flat_params();
    let mut adam = AdamState::new(flat.len(), AdamConfig::new(cfg.lr, cfg.betas));
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut report = None;
    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        for batch in batch_iter(train.len(), cfg.batch_size, cfg.seed, epoch) {
            let (mut grad, losses) = ordered_batch_sum(batch.len(), flat.len(), |k| {
                let i = batch[k];
                let (out, cache) = forward_with_cache_encoded(&net, &train.images[i], cfg.encoding)?;
                let (loss, adj) = sample_loss(cfg.head, &out, labels[i]);
                Ok((backward(&net, &cache, &adj)?.flatten(), loss))
            })?;
            let inv = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= inv);
            adam.step(&mut flat, &grad)?;
            net.set_flat_params(&flat)?;
            loss_sum += losses.iter().sum::<f64>();
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(InnError::NonFiniteLoss { step: epoch });
        }
        let (test_acc, avg_f1) = match test {
            Some(t) => {
                let r = evaluate(&net, cfg.head, cfg.encoding, t)?;
                let out = (Some(r.accuracy), Some(r.avg_f1));
                report = Some(r);
                out
            }
            None => (None, None),
        };
        log::info!(
            "epoch {epoch}: train_loss={train_loss:.6} test_acc={}",
            test_acc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into())
        );
        history.push(EpochMetrics {
            epoch,
            train_loss,
            test_acc,
            avg_f1,
        });
    }
    Ok(TrainedClassifier {
        network: net,
        head: cfg.head,
        history,
        report,
    })
}

/// Confusion matrix and derived scores.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `confusion[actual][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub f1: Vec<f64>,
    /// Classes whose f1 had a zero denominator and was set to 0.
    pub f1_undefined: Vec<bool>,
    /// Unweighted mean of `f1`.
    pub avg_f1: f64,
}

impl MetricsReport {
    pub fn from_predictions(actual: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(InnError::DimensionMismatch {
                expected: actual.len(),
                found: predicted.len(),
            });
        }
        if actual.is_empty() {
            return Err(InnError::EmptyDataset("no predictions to score".into()));
        }
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&a, &p) in actual.iter().zip(predicted) {
            let bad = a.max(p);
            if bad >= classes {
                return Err(InnError::LabelOutOfRange { label: bad, classes });
            }
            confusion[a][p] += 1;
        }
        let total = actual.len();
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let mut f1 = Vec::with_capacity(classes);
        let mut f1_undefined = Vec::with_capacity(classes);
        for (c, row) in confusion.iter().enumerate() {
            let tp = row[c];
            let fn_ = row.iter().sum::<usize>() - tp;
            let fp = (0..classes).map(|r| confusion[r][c]).sum::<usize>() - tp;
            let denom = 2 * tp + fp + fn_;
            f1_undefined.push(denom == 0);
            f1.push(if denom == 0 {
                0.0
            } else {
                2.0 * tp as f64 / denom as f64
            });
        }
        let avg_f1 = f1.iter().sum::<f64>() / classes as f64;
        Ok(Self {
            confusion,
            accuracy: correct as f64 / total as f64,
            f1,
            f1_undefined,
            avg_f1,
        })
    }

    pub fn classes(&self) -> usize {
        self.f1.len()
    }

    /// f1 of class 1, the positive class of a binary task.
    pub fn positive_f1(&self) -> f64 {
        self.f1[1]
    }

    /// Human-readable summary with the confusion matrix.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "accuracy = {}", fmt_f64(self.accuracy));
        let _ = writeln!(s, "avg_f1 = {}", fmt_f64(self.avg_f1));
        if self.classes() == 2 {
            let _ = writeln!(s, "positive_f1 = {}", fmt_f64(self.positive_f1()));
        }
        for (c, (f, undef)) in self.f1.iter().zip(&self.f1_undefined).enumerate() {
            let flag = if *undef {
                " (undefined, no support or predictions)"
            } else {
                ""
            };
            let _ = writeln!(s, "f1[{c}] = {}{flag}", fmt_f64(*f));
        }
        let _ = writeln!(s, "confusion (rows = actual, cols = predicted):");
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "  {}", cells.join(" "));
        }
        s
    }
}

/// Scores `net` on a labeled set.
pub fn evaluate(net: &Network, head: Head, encoding: InputEncoding, set: &LabeledImageSet) -> Result<MetricsReport> {
    let labels = set
        .labels
        .as_ref()
        .ok_or_else(|| InnError::EmptyDataset("evaluation needs labels".into()))?;
    if set.is_empty() {
        return Err(InnError::EmptyDataset("test set is empty".into()));
    }
    let predicted = set
        .images
        .par_iter()
        .map(|x| net.forward(x, encoding).map(|out| predict(head, &out)))
        .collect::<Result<Vec<_>>>()?;
    let classes = match head {
        Head::Binary => 2,
        Head::Softmax => net.arch().output_dim(),
    };
    MetricsReport::from_predictions(labels, &predicted, classes)
}

pub const METRICS_CSV_HEADER: &str = "epoch,train_loss,test_acc,avg_f1";

pub fn write_metrics_csv<W: Write>(history: &[EpochMetrics], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{METRICS_CSV_HEADER}")?;
    for m in history {
        writeln!(
            out,
            "{},{},{},{}",
            m.epoch,
            fmt_f64(m.train_loss),
            m.test_acc.map(fmt_f64).unwrap_or_default(),
            m.avg_f1.map(fmt_f64).unwrap_or_default()
        )?;
    }
    Ok(())
}
