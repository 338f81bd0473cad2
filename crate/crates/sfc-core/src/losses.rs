//! Forward evaluation of the segmentation training objective: weighted
//! cross-entropy, the Lovász-Softmax relaxation of the Jaccard loss, and
//! their sum over the per-layer auxiliary predictions.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Class frequencies and the inverse-frequency weights derived from them:
/// `w_c = 1 / (f_c + epsilon)`.
#[derive(Debug, Clone)]
pub struct LossConfig {
    frequencies: Vec<f64>,
    epsilon: f64,
    weights: Vec<f64>,
}

impl LossConfig {
    pub const DEFAULT_EPSILON: f64 = 1e-3;

    pub fn new(frequencies: Vec<f64>, epsilon: f64) -> Result<Self> {
        if frequencies.is_empty() {
            return Err(Error::BadConfig("no class frequencies given".into()));
        }
        if epsilon <= 0.0 || epsilon.is_nan() {
            return Err(Error::BadConfig("epsilon must be positive".into()));
        }
        if frequencies.iter().any(|f| *f < 0.0 || !f.is_finite()) {
            return Err(Error::BadConfig(
                "class frequencies must be finite and non-negative".into(),
            ));
        }
        let total: f64 = frequencies.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::BadConfig(format!(
                "class frequencies sum to {total}, expected 1"
            )));
        }
        let weights = frequencies.iter().map(|f| 1.0 / (f + epsilon)).collect();
        Ok(LossConfig {
            frequencies,
            epsilon,
            weights,
        })
    }

    /// Equal frequencies over `classes` classes.
    pub fn uniform(classes: usize) -> Result<Self> {
        LossConfig::new(vec![1.0 / classes as f64; classes], Self::DEFAULT_EPSILON)
    }

    /// Parse a text file of `class_id frequency` pairs, one per line.
    /// Missing ids get frequency 0. `#` starts a comment.
    pub fn from_frequency_file(path: &Path, epsilon: f64) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut pairs: Vec<(usize, f64)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(id), Some(freq), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::BadConfig(format!(
                    "line {}: expected `class_id frequency`",
                    lineno + 1
                )));
            };
            let id: usize = id.parse().map_err(|_| {
                Error::BadConfig(format!("line {}: bad class id `{id}`", lineno + 1))
            })?;
            let freq: f64 = freq.parse().map_err(|_| {
                Error::BadConfig(format!("line {}: bad frequency `{freq}`", lineno + 1))
            })?;
            pairs.push((id, freq));
        }
        let classes = pairs.iter().map(|&(id, _)| id + 1).max().unwrap_or(0);
        let mut frequencies = vec![0.0; classes];
        for (id, freq) in pairs {
            frequencies[id] = freq;
        }
        LossConfig::new(frequencies, epsilon)
    }

    pub fn classes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn weight(&self, class: usize) -> f64 {
        self.weights[class]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    for (index, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::BadLabel {
                index,
                label,
                classes,
            });
        }
    }
    Ok(())
}

/// Row-wise softmax with the max-shift for stability.
pub fn softmax_rows(logits: &Mat) -> Mat {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
    }
    out
}

/// Inverse-frequency weighted cross-entropy, normalized as the weighted
/// average: `sum_k w_{y_k} * (-log softmax(x_k)[y_k]) / sum_k w_{y_k}`.
pub fn weighted_cross_entropy(logits: &Mat, labels: &[usize], cfg: &LossConfig) -> Result<f64> {
    if logits.rows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    if logits.rows() == 0 {
        return Err(Error::EmptyCloud);
    }
    if logits.cols() != cfg.classes() {
        return Err(Error::ShapeMismatch(format!(
            "{} logit columns for {} classes",
            logits.cols(),
            cfg.classes()
        )));
    }
    check_labels(labels, cfg.classes())?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, &y) in labels.iter().enumerate() {
        let row = logits.row(k);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let log_prob = row[y] - max - log_sum;
        let w = cfg.weight(y);
        num += w * (-log_prob);
        den += w;
    }
    Ok(num / den)
}

/// Gradient-weighted sum defining the Lovász extension of the Jaccard loss
/// for one class. `errors` in [0, 1]; `foreground` marks ground-truth
/// members of the class (at least one required).
fn lovasz_class_loss(errors: &[f64], foreground: &[bool]) -> f64 {
    let n = errors.len();
    let positives = foreground.iter().filter(|&&f| f).count() as f64;
    debug_assert!(positives > 0.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| errors[b].total_cmp(&errors[a]).then(a.cmp(&b)));
    let mut loss = 0.0;
    let mut fg_seen = 0.0;
    let mut bg_seen = 0.0;
    let mut prev_jaccard = 0.0;
    for &i in &order {
        if foreground[i] {
            fg_seen += 1.0;
        } else {
            bg_seen += 1.0;
        }
        let intersection = positives - fg_seen;
        let union = positives + bg_seen;
        let jaccard = 1.0 - intersection / union;
        loss += errors[i] * (jaccard - prev_jaccard);
        prev_jaccard = jaccard;
    }
    loss
}

/// Lovász-Softmax loss: per ground-truth-present class, the Lovász
/// extension of the Jaccard loss evaluated on the prediction errors,
/// averaged over the classes present. `probs` rows must sum to 1.
pub fn lovasz_softmax(probs: &Mat, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    if probs.rows() == 0 {
        return Err(Error::EmptyCloud);
    }
    let classes = probs.cols();
    check_labels(labels, classes)?;
    let mut present: Vec<usize> = labels.to_vec();
    present.sort_unstable();
    present.dedup();

    let n = labels.len();
    let mut errors = vec![0.0; n];
    let mut foreground = vec![false; n];
    let mut total = 0.0;
    for &c in &present {
        for k in 0..n {
            foreground[k] = labels[k] == c;
            let p = probs.get(k, c);
            errors[k] = if foreground[k] { 1.0 - p } else { p };
        }
        total += lovasz_class_loss(&errors, &foreground);
    }
    Ok(total / present.len() as f64)
}

/// Sum of `weighted_cross_entropy + lovasz_softmax(softmax(.))` over the
/// per-layer logits.
pub fn multi_layer_loss(layer_logits: &[Mat], labels: &[usize], cfg: &LossConfig) -> Result<f64> {
    let mut total = 0.0;
    for logits in layer_logits {
        total += weighted_cross_entropy(logits, labels, cfg)?;
        total += lovasz_softmax(&softmax_rows(logits), labels)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_vanish() {
        let logits =
            Mat::from_rows(&[vec![30.0, -30.0], vec![-30.0, 30.0], vec![-30.0, 30.0]]).unwrap();
        let labels = [0, 1, 1];
        let cfg = LossConfig::new(vec![0.5, 0.5], 1e-3).unwrap();
        assert!(weighted_cross_entropy(&logits, &labels, &cfg).unwrap() < 1e-9);
        assert!(lovasz_softmax(&softmax_rows(&logits), &labels).unwrap() < 1e-9);
    }

    #[test]
    fn uniform_logits_give_ln_n() {
        // Power-of-two weight (f + eps = 0.5) and two points keep the
        // weighted average bitwise exact.
        let logits = Mat::from_rows(&[vec![0.7; 4], vec![0.7; 4]]).unwrap();
        let labels = [0, 0];
        let freqs = vec![0.499, 0.167, 0.167, 0.167];
        let cfg = LossConfig::new(freqs, 1e-3).unwrap();
        assert_eq!(cfg.weight(0), 2.0);
        let loss = weighted_cross_entropy(&logits, &labels, &cfg).unwrap();
        assert_eq!(loss, 4.0_f64.ln());
    }

    #[test]
    fn uniform_logits_any_weights_close_to_ln_n() {
        let logits = Mat::from_rows(&vec![vec![-1.3; 3]; 5]).unwrap();
        let labels = [2, 0, 1, 1, 2];
        let cfg = LossConfig::new(vec![0.6, 0.3, 0.1], 1e-3).unwrap();
        let loss = weighted_cross_entropy(&logits, &labels, &cfg).unwrap();
        assert!((loss - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn frozen_three_point_instance() {
        // Value frozen from an independent scalar softmax + log evaluation.
        let logits = Mat::from_rows(&[vec![2.0, -1.0], vec![0.5, 0.5], vec![-1.0, 3.0]]).unwrap();
        let labels = [0, 1, 1];
        let cfg = LossConfig::new(vec![0.7, 0.3], 1e-3).unwrap();
        let loss = weighted_cross_entropy(&logits, &labels, &cfg).unwrap();
        assert!((loss - 0.30137643327457586).abs() < 1e-12);
    }

    #[test]
    fn logit_shift_invariance() {
        let logits = Mat::from_rows(&[vec![0.3, -0.7, 1.1], vec![2.0, 0.1, -0.4]]).unwrap();
        let mut shifted = logits.clone();
        for r in 0..shifted.rows() {
            for x in shifted.row_mut(r) {
                *x += 123.456;
            }
        }
        let labels = [2, 0];
        let cfg = LossConfig::uniform(3).unwrap();
        let a = weighted_cross_entropy(&logits, &labels, &cfg).unwrap();
        let b = weighted_cross_entropy(&shifted, &labels, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn bad_label_rejected() {
        let logits = Mat::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let cfg = LossConfig::uniform(2).unwrap();
        assert!(matches!(
            weighted_cross_entropy(&logits, &[2], &cfg),
            Err(Error::BadLabel { .. })
        ));
        assert!(matches!(
            lovasz_softmax(&logits, &[5]),
            Err(Error::BadLabel { .. })
        ));
    }

    #[test]
    fn lovasz_single_point_fully_wrong_is_one() {
        let probs = Mat::from_rows(&[vec![0.0, 1.0]]).unwrap();
        let loss = lovasz_softmax(&probs, &[0]).unwrap();
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lovasz_exact_one_hot_is_zero() {
        let probs = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(lovasz_softmax(&probs, &[0, 1, 0]).unwrap(), 0.0);
    }

    #[test]
    fn lovasz_permutation_invariant() {
        let probs = Mat::from_rows(&[
            vec![0.7, 0.3],
            vec![0.2, 0.8],
            vec![0.55, 0.45],
            vec![0.1, 0.9],
        ])
        .unwrap();
        let labels = [0, 1, 1, 0];
        let perm = [2usize, 0, 3, 1];
        let permuted_probs = probs.take_rows(&[2, 0, 3, 1]);
        let permuted_labels: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let a = lovasz_softmax(&probs, &labels).unwrap();
        let b = lovasz_softmax(&permuted_probs, &permuted_labels).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn wce_permutation_invariant() {
        let logits = Mat::from_rows(&[vec![1.2, -0.3], vec![0.1, 0.7], vec![-2.0, 0.4]]).unwrap();
        let labels = [0usize, 1, 1];
        let cfg = LossConfig::new(vec![0.25, 0.75], 1e-3).unwrap();
        let a = weighted_cross_entropy(&logits, &labels, &cfg).unwrap();
        let perm = [2usize, 0, 1];
        let permuted = logits.take_rows(&[2, 0, 1]);
        let permuted_labels: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
        let b = weighted_cross_entropy(&permuted, &permuted_labels, &cfg).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn multi_layer_is_four_times_single() {
        let logits = Mat::from_rows(&[vec![1.0, -0.5], vec![0.2, 0.9], vec![-2.0, 0.0]]).unwrap();
        let labels = [1, 0, 1];
        let cfg = LossConfig::new(vec![0.4, 0.6], 1e-3).unwrap();
        let single = weighted_cross_entropy(&logits, &labels, &cfg).unwrap()
            + lovasz_softmax(&softmax_rows(&logits), &labels).unwrap();
        let four = multi_layer_loss(
            &[logits.clone(), logits.clone(), logits.clone(), logits],
            &labels,
            &cfg,
        )
        .unwrap();
        assert!((four - 4.0 * single).abs() < 1e-12);
    }

    #[test]
    fn frequency_sum_checked() {
        assert!(LossConfig::new(vec![0.5, 0.4], 1e-3).is_err());
        assert!(LossConfig::new(vec![0.5, 0.5], 0.0).is_err());
    }

    #[test]
    fn frequency_file_parsing() {
        let dir = std::env::temp_dir().join("sfc_loss_cfg");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("freq.txt");
        std::fs::write(&path, "# class frequencies\n0 0.6\n2 0.1\n1 0.3\n").unwrap();
        let cfg = LossConfig::from_frequency_file(&path, 1e-3).unwrap();
        assert_eq!(cfg.classes(), 3);
        assert_eq!(cfg.frequencies(), &[0.6, 0.3, 0.1]);
        std::fs::write(&path, "0 0.6\nbogus\n").unwrap();
        assert!(LossConfig::from_frequency_file(&path, 1e-3).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
