use std::fmt::Write;

use ndarray::ArrayView3;

use super::loss::ClassWeights;
use super::model::Model;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::layers::Ctx;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    /// Correct / total over positions whose label has nonzero weight.
    pub accuracy: f64,
    /// Recall per class; `None` when the class never occurs.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `TP / (TP + FP + FN)`; `None` for inactive classes and classes absent
    /// from both labels and predictions.
    pub class_iou: Vec<Option<f64>>,
    pub mean_iou: f64,
    pub total: u64,
    /// `confusion[label][prediction]`
    pub confusion: Vec<Vec<u64>>,
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "accuracy\t{:.6}", self.accuracy).unwrap();
        writeln!(s, "mean_iou\t{:.6}", self.mean_iou).unwrap();
        writeln!(s, "positions\t{}", self.total).unwrap();
        for (c, (acc, iou)) in self.per_class_accuracy.iter().zip(&self.class_iou).enumerate() {
            let f = |v: &Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
            writeln!(s, "class {c}\tacc {}\tiou {}", f(acc), f(iou)).unwrap();
        }
        s
    }
}

/// Index of the largest entry; ties go to the lowest class.
pub fn argmax_classes(logits: ArrayView3<f64>) -> Vec<usize> {
    let (b, k, v) = logits.dim();
    let mut out = Vec::with_capacity(b * v);
    for bi in 0..b {
        for vi in 0..v {
            let mut best = 0;
            for c in 1..k {
                if logits[[bi, c, vi]] > logits[[bi, best, vi]] {
                    best = c;
                }
            }
            out.push(best);
        }
    }
    out
}

pub fn metrics_from_predictions(
    predictions: &[usize],
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<MetricReport> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let k = weights.len();
    let mut confusion = vec![vec![0u64; k]; k];
    let mut total = 0u64;
    for (&p, &y) in predictions.iter().zip(labels) {
        if y >= k || p >= k {
            return Err(Error::IndexOutOfRange {
                index: y.max(p),
                len: k,
            });
        }
        if !weights.is_active(y) {
            continue;
        }
        confusion[y][p] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::InvalidArgument("no labelled positions to evaluate".into()));
    }
    let correct: u64 = (0..k).map(|c| confusion[c][c]).sum();
    let mut per_class_accuracy = vec![None; k];
    let mut class_iou = vec![None; k];
    for c in 0..k {
        let support: u64 = confusion[c].iter().sum();
        let tp = confusion[c][c];
        let fp: u64 = (0..k).map(|y| confusion[y][c]).sum::<u64>() - tp;
        let fn_ = support - tp;
        if support > 0 {
            per_class_accuracy[c] = Some(tp as f64 / support as f64);
        }
        if weights.is_active(c) && tp + fp + fn_ > 0 {
            class_iou[c] = Some(tp as f64 / (tp + fp + fn_) as f64);
        }
    }
    let ious: Vec<f64> = class_iou.iter().flatten().copied().collect();
    let mean_iou = ious.iter().sum::<f64>() / ious.len().max(1) as f64;
    Ok(MetricReport {
        accuracy: correct as f64 / total as f64,
        per_class_accuracy,
        class_iou,
        mean_iou,
        total,
        confusion,
    })
}

/// Eval-mode predictions over `data` in order.
pub fn predict(model: &mut Model, data: &Dataset, batch_size: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = data.batch(chunk)?;
        let logits = model.forward(&x, &mut Ctx::eval())?;
        preds.extend(argmax_classes(logits.view()));
        labels.extend(y);
    }
    Ok((preds, labels))
}

pub fn evaluate(
    model: &mut Model,
    data: &Dataset,
    batch_size: usize,
    weights: &ClassWeights,
) -> Result<MetricReport> {
    let (p, y) = predict(model, data, batch_size)?;
    metrics_from_predictions(&p, &y, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1];
        let r = metrics_from_predictions(&y, &y, &ClassWeights::uniform(3)).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.mean_iou, 1.0);
    }

    #[test]
    fn never_predicted_class_has_zero_iou() {
        let r = metrics_from_predictions(&[0, 0], &[1, 0], &ClassWeights::uniform(2)).unwrap();
        assert_eq!(r.class_iou[1], Some(0.0));
        assert_eq!(r.class_iou[0], Some(0.5));
        assert_eq!(r.accuracy, 0.5);
    }

    #[test]
    fn zero_weight_labels_are_not_counted() {
        let w = ClassWeights {
            weights: vec![1.0, 0.0],
            frequencies: None,
        };
        let r = metrics_from_predictions(&[0, 0, 1], &[0, 1, 1], &w).unwrap();
        assert_eq!(r.total, 1);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.class_iou[1], None);
        assert!(metrics_from_predictions(&[], &[], &w).is_err());
    }

    #[test]
    fn argmax_ties_pick_lowest() {
        let l = ndarray::Array3::from_shape_vec((1, 3, 1), vec![1.0, 1.0, 0.0]).unwrap();
        assert_eq!(argmax_classes(l.view()), vec![0]);
    }
}
