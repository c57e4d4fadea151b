use ndarray::{Array3, ArrayView3};

use crate::error::{Error, Result};

/// Per-class loss weights; zero marks a class excluded from loss and metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    pub frequencies: Option<Vec<f64>>,
}

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        ClassWeights {
            weights: vec![1.0; classes],
            frequencies: None,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_active(&self, class: usize) -> bool {
        self.weights[class] != 0.0
    }
}

/// `w_c = 1 / (1.02 + ln f_c)`; classes listed in `dropped` get weight 0.
///
/// The formula has a pole at `f_c = e^{-1.02} ≈ 0.36` and is negative below
/// it; such frequencies are rejected rather than producing a sign-flipped loss.
pub fn class_weights_from_frequencies(freqs: &[f64], dropped: &[usize]) -> Result<ClassWeights> {
    let mut weights = vec![0.0; freqs.len()];
    let mut total = 0.0;
    for (c, &f) in freqs.iter().enumerate() {
        if dropped.contains(&c) {
            continue;
        }
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "class {c} frequency {f} not in (0, 1]"
            )));
        }
        total += f;
        let denom = 1.02 + f.ln();
        if denom <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "class {c} frequency {f} gives a non-positive weight denominator {denom}"
            )));
        }
        weights[c] = 1.0 / denom;
    }
    if total > 1.0 + 1e-9 {
        return Err(Error::InvalidArgument(format!("frequencies sum to {total} > 1")));
    }
    if let Some(&d) = dropped.iter().find(|&&d| d >= freqs.len()) {
        return Err(Error::IndexOutOfRange {
            index: d,
            len: freqs.len(),
        });
    }
    Ok(ClassWeights {
        weights,
        frequencies: Some(freqs.to_vec()),
    })
}

/// Weighted mean cross-entropy over all `(b, v)` positions.
///
/// `logits` is `(B, K, V)`; `labels[b * V + v]` is the class at that
/// position. The loss is `Σ w_y · (−log softmax_y) / Σ w_y`; positions whose
/// class weight is zero contribute nothing.
pub fn cross_entropy(
    logits: ArrayView3<f64>,
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<(f64, Array3<f64>)> {
    let (b, k, v) = logits.dim();
    if labels.len() != b * v {
        return Err(Error::Shape(format!(
            "{} labels for {b}×{v} positions",
            labels.len()
        )));
    }
    if weights.len() != k {
        return Err(Error::Shape(format!("{} class weights for {k} classes", weights.len())));
    }
    let mut grad = Array3::zeros((b, k, v));
    let mut loss = 0.0;
    let mut wsum = 0.0;
    let mut probs = vec![0.0; k];
    for bi in 0..b {
        for vi in 0..v {
            let y = labels[bi * v + vi];
            if y >= k {
                return Err(Error::IndexOutOfRange { index: y, len: k });
            }
            let w = weights.weights[y];
            if w == 0.0 {
                continue;
            }
            let m = (0..k).map(|c| logits[[bi, c, vi]]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for c in 0..k {
                probs[c] = (logits[[bi, c, vi]] - m).exp();
                z += probs[c];
            }
            loss += w * (z.ln() + m - logits[[bi, y, vi]]);
            wsum += w;
            for c in 0..k {
                grad[[bi, c, vi]] = w * (probs[c] / z - if c == y { 1.0 } else { 0.0 });
            }
        }
    }
    if wsum == 0.0 {
        return Err(Error::InvalidArgument("no labelled position has nonzero weight".into()));
    }
    grad /= wsum;
    Ok((loss / wsum, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Array3::zeros((3, 7, 2));
        let (l, _) = cross_entropy(logits.view(), &[0, 1, 2, 3, 4, 5], &ClassWeights::uniform(7)).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn confident_correct_logit_gives_zero_loss() {
        let mut logits = Array3::zeros((1, 3, 1));
        logits[[0, 2, 0]] = 800.0;
        let (l, g) = cross_entropy(logits.view(), &[2], &ClassWeights::uniform(3)).unwrap();
        assert!(l.abs() < 1e-300 && l >= 0.0);
        assert!(g.iter().all(|t| t.abs() < 1e-300));
    }

    #[test]
    fn label_out_of_range_is_an_error() {
        let logits = Array3::zeros((1, 3, 1));
        assert!(cross_entropy(logits.view(), &[3], &ClassWeights::uniform(3)).is_err());
    }

    #[test]
    fn zero_weight_positions_are_ignored() {
        let logits = Array3::from_shape_vec((1, 2, 2), vec![0.3, -1.0, 0.1, 2.0]).unwrap();
        let w = ClassWeights {
            weights: vec![1.0, 0.0],
            frequencies: None,
        };
        let (l, g) = cross_entropy(logits.view(), &[0, 1], &w).unwrap();
        let only = cross_entropy(
            Array3::from_shape_vec((1, 2, 1), vec![0.3, 0.1]).unwrap().view(),
            &[0],
            &ClassWeights::uniform(2),
        )
        .unwrap()
        .0;
        assert!((l - only).abs() < 1e-15);
        assert_eq!(g[[0, 0, 1]], 0.0);
        assert_eq!(g[[0, 1, 1]], 0.0);
    }

    #[test]
    fn frequency_weights_follow_formula() {
        let w = class_weights_from_frequencies(&[1.0], &[]).unwrap();
        assert!((w.weights[0] - 1.0 / 1.02).abs() < 1e-15);
        let w = class_weights_from_frequencies(&[(-1.0f64).exp(), 0.0], &[1]).unwrap();
        assert!((w.weights[0] - 50.0).abs() < 1e-9);
        assert_eq!(w.weights[1], 0.0);
        assert!(class_weights_from_frequencies(&[0.0], &[]).is_err());
        assert!(class_weights_from_frequencies(&[0.1], &[]).is_err());
    }
}
