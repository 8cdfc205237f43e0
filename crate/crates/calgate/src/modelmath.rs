//! Pure numerical primitives: softmax, masked mean pooling, label smoothing,
//! class-weighted cross entropy, and frequency-derived class weights.
//!
//! Everything here is a deterministic function of its inputs and safe to call
//! concurrently.

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Floor applied to probabilities before taking logs, so cross entropy and
/// NLL stay finite on degenerate inputs.
pub const LOG_CLAMP_FLOOR: f64 = 1e-12;

/// A T×D feature sequence with a per-timestep validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSequence<S> {
    features: Vec<Vec<S>>,
    mask: Vec<S>,
}

impl<S: Scalar> MaskedSequence<S> {
    /// Validates that every row has the same width and the mask is binary.
    pub fn new(features: Vec<Vec<S>>, mask: Vec<S>) -> Result<Self> {
        if features.len() != mask.len() {
            return Err(Error::invalid(format!(
                "mask length {} does not match {} timesteps",
                mask.len(),
                features.len()
            )));
        }
        let dim = features.first().map_or(0, Vec::len);
        for (t, row) in features.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::invalid(format!(
                    "feature row {t} has {} entries, expected {dim}",
                    row.len()
                )));
            }
        }
        for (t, &u) in mask.iter().enumerate() {
            if u != S::zero() && u != S::one() {
                return Err(Error::invalid(format!("mask[{t}] = {u} is not 0 or 1")));
            }
        }
        Ok(Self { features, mask })
    }

    pub fn timesteps(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

/// Per-class loss weights, all strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights<S> {
    weights: Vec<S>,
}

impl<S: Scalar> ClassWeights<S> {
    pub fn new(weights: Vec<S>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("class weights must be non-empty"));
        }
        for (k, &w) in weights.iter().enumerate() {
            if w <= S::zero() || !w.is_finite() {
                return Err(Error::invalid(format!("weight[{k}] = {w} must be > 0")));
            }
        }
        Ok(Self { weights })
    }

    /// All-ones weights for `k` classes.
    pub fn unit(k: usize) -> Self {
        Self {
            weights: vec![S::one(); k],
        }
    }

    pub fn as_slice(&self) -> &[S] {
        &self.weights
    }
}

/// Index of the largest entry, ties broken toward the lowest index.
///
/// Panics on an empty slice; every caller in this crate guarantees K ≥ 2.
pub fn argmax<S: Scalar>(values: &[S]) -> usize {
    assert!(!values.is_empty(), "argmax of empty slice");
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Indices of the `k` largest entries, ranked by value descending with ties
/// broken toward the lowest index.
pub fn topk_indices<S: Scalar>(values: &[S], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .partial_cmp(&values[a])
            .expect("non-finite value in ranking")
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    idx
}

/// Numerically stable softmax via max-subtraction.
///
/// Output entries are positive and sum to 1 within 1e-12; the argmax of the
/// input is preserved.
pub fn softmax<S: Scalar>(logits: &[S]) -> Result<Vec<S>> {
    if logits.is_empty() {
        return Err(Error::invalid("softmax of empty logit vector"));
    }
    for (i, &l) in logits.iter().enumerate() {
        if !l.is_finite() {
            return Err(Error::invalid(format!("logit[{i}] = {l} is not finite")));
        }
    }
    let max = logits.iter().copied().fold(logits[0], S::max);
    let mut out: Vec<S> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: S = out.iter().copied().sum();
    for p in &mut out {
        *p = *p / sum;
    }
    Ok(out)
}

/// Numerically stable logistic sigmoid.
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        let e = (-x).exp();
        S::one() / (S::one() + e)
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Masked mean pooling: Σ uₜhₜ / (Σ uₜ + eps).
///
/// With an all-zero mask and eps > 0 the result is the zero vector; a zero
/// denominator (all-zero mask with eps = 0) is rejected rather than emitting
/// NaNs.
pub fn masked_mean_pool<S: Scalar>(seq: &MaskedSequence<S>, eps: S) -> Result<Vec<S>> {
    if eps < S::zero() {
        return Err(Error::invalid(format!("pooling eps {eps} must be >= 0")));
    }
    let dim = seq.dim();
    let mut acc = vec![S::zero(); dim];
    let mut mass = S::zero();
    for (row, &u) in seq.features.iter().zip(&seq.mask) {
        if u == S::one() {
            for (a, &x) in acc.iter_mut().zip(row) {
                *a = *a + x;
            }
            mass = mass + S::one();
        }
    }
    let denom = mass + eps;
    if denom == S::zero() {
        return Err(Error::invalid(
            "masked mean pool denominator is zero (empty mask with eps = 0)",
        ));
    }
    for a in &mut acc {
        *a = *a / denom;
    }
    Ok(acc)
}

/// Label smoothing: ỹₖ = (1−ε)·yₖ + ε/K.
pub fn label_smooth<S: Scalar>(one_hot: &[S], epsilon: S) -> Result<Vec<S>> {
    if !(epsilon >= S::zero() && epsilon <= S::one()) {
        return Err(Error::invalid(format!(
            "smoothing epsilon {epsilon} must lie in [0, 1]"
        )));
    }
    let ones = one_hot.iter().filter(|&&y| y == S::one()).count();
    let zeros = one_hot.iter().filter(|&&y| y == S::zero()).count();
    if ones != 1 || ones + zeros != one_hot.len() {
        return Err(Error::invalid("target is not a one-hot vector"));
    }
    let k = S::from_usize_lossy(one_hot.len());
    Ok(one_hot
        .iter()
        .map(|&y| (S::one() - epsilon) * y + epsilon / k)
        .collect())
}

/// Result of a cross-entropy evaluation; `clamped` reports whether the
/// 1e-12 log floor was hit instead of silently absorbing it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossEntropy<S> {
    pub value: S,
    pub clamped: bool,
}

/// Class-weighted cross entropy: −Σₖ wₖ·ỹₖ·log pₖ.
pub fn weighted_cross_entropy<S: Scalar>(
    probs: &[S],
    target: &[S],
    weights: &ClassWeights<S>,
) -> Result<CrossEntropy<S>> {
    if probs.len() != target.len() || probs.len() != weights.as_slice().len() {
        return Err(Error::invalid(format!(
            "length mismatch: probs={}, target={}, weights={}",
            probs.len(),
            target.len(),
            weights.as_slice().len()
        )));
    }
    check_distribution(probs, 1e-9)?;
    let tsum: S = target.iter().copied().sum();
    if (tsum - S::one()).abs() > S::from_f64_lossy(1e-9) {
        return Err(Error::invalid(format!("target sums to {tsum}, expected 1")));
    }
    let floor = S::from_f64_lossy(LOG_CLAMP_FLOOR);
    let mut value = S::zero();
    let mut clamped = false;
    for ((&p, &y), &w) in probs.iter().zip(target).zip(weights.as_slice()) {
        if y == S::zero() {
            continue;
        }
        let p = if p < floor {
            clamped = true;
            floor
        } else {
            p
        };
        value = value - w * y * p.ln();
    }
    Ok(CrossEntropy { value, clamped })
}

/// Inverse-frequency class weights: wₖ = (N/K) / max(countₖ, 1).
///
/// Normalized so uniform counts give all-ones weights; zero-count classes
/// fall back to a count of 1 so every weight stays finite.
pub fn class_weights_from_freq<S: Scalar>(counts: &[usize]) -> Result<ClassWeights<S>> {
    let total: usize = counts.iter().sum();
    if counts.is_empty() || total == 0 {
        return Err(Error::invalid("all class counts are zero"));
    }
    let base = S::from_usize_lossy(total) / S::from_usize_lossy(counts.len());
    let weights = counts
        .iter()
        .map(|&c| base / S::from_usize_lossy(c.max(1)))
        .collect();
    ClassWeights::new(weights)
}

/// Validates that `probs` is a distribution: finite, nonnegative entries
/// summing to 1 within `tol`.
pub fn check_distribution<S: Scalar>(probs: &[S], tol: f64) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::invalid("empty probability vector"));
    }
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() || p < S::zero() {
            return Err(Error::invalid(format!("prob[{i}] = {p} is not in [0, 1]")));
        }
    }
    let sum: S = probs.iter().copied().sum();
    if (sum - S::one()).abs() > S::from_f64_lossy(tol) {
        return Err(Error::invalid(format!("probabilities sum to {sum}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let p = softmax(&[0.0f64, 0.0, 0.0]).unwrap();
        for &x in &p {
            assert_abs_diff_eq!(x, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn softmax_closed_form_ln2() {
        let p = softmax(&[2.0f64.ln(), 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 1.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0f64, 0.0]).unwrap();
        assert!(p[0] > 0.999999);
        assert!(p[1] >= 0.0);
        assert!(p.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn softmax_rejects_non_finite() {
        assert!(softmax(&[f64::NAN, 0.0]).is_err());
        assert!(softmax(&[f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0f64, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[5.0f64, 5.0, 5.0]), 0);
    }

    #[test]
    fn topk_orders_by_value_then_index() {
        let v = [0.1f64, 0.5, 0.5, 0.9];
        assert_eq!(topk_indices(&v, 3), vec![3, 1, 2]);
    }

    #[test]
    fn pool_all_ones_mask_is_row_mean() {
        let seq =
            MaskedSequence::new(vec![vec![1.0f64, 2.0], vec![3.0, 4.0]], vec![1.0, 1.0]).unwrap();
        let out = masked_mean_pool(&seq, 0.0).unwrap();
        assert_eq!(out, vec![2.0, 3.0]);
    }

    #[test]
    fn pool_single_valid_timestep_is_that_row() {
        let seq =
            MaskedSequence::new(vec![vec![1.0f64, 2.0], vec![30.0, 40.0]], vec![0.0, 1.0]).unwrap();
        let out = masked_mean_pool(&seq, 0.0).unwrap();
        assert_eq!(out, vec![30.0, 40.0]);
    }

    #[test]
    fn pool_zero_mask_with_eps_is_zero_vector() {
        let seq =
            MaskedSequence::new(vec![vec![1.0f64, 2.0], vec![3.0, 4.0]], vec![0.0, 0.0]).unwrap();
        let out = masked_mean_pool(&seq, 1e-8).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn pool_zero_mask_zero_eps_is_error() {
        let seq = MaskedSequence::new(vec![vec![1.0f64]], vec![0.0]).unwrap();
        assert!(masked_mean_pool(&seq, 0.0).is_err());
    }

    #[test]
    fn pool_rejects_ragged_features() {
        assert!(MaskedSequence::new(vec![vec![1.0f64, 2.0], vec![3.0]], vec![1.0, 1.0]).is_err());
        assert!(MaskedSequence::new(vec![vec![1.0f64]], vec![1.0, 0.0]).is_err());
        assert!(MaskedSequence::new(vec![vec![1.0f64]], vec![0.5]).is_err());
    }

    #[test]
    fn label_smooth_endpoints() {
        let y = [1.0f64, 0.0, 0.0, 0.0];
        assert_eq!(label_smooth(&y, 0.0).unwrap(), y.to_vec());
        let uniform = label_smooth(&y, 1.0).unwrap();
        for &v in &uniform {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn label_smooth_k2_closed_form() {
        let out = label_smooth(&[1.0f64, 0.0], 0.2).unwrap();
        assert_abs_diff_eq!(out[0], 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(out[1], 0.1, epsilon = 1e-12);
    }

    #[test]
    fn label_smooth_validates() {
        assert!(label_smooth(&[1.0f64, 0.0], 1.5).is_err());
        assert!(label_smooth(&[1.0f64, 1.0], 0.1).is_err());
        assert!(label_smooth(&[0.5f64, 0.5], 0.1).is_err());
    }

    #[test]
    fn cross_entropy_matching_one_hot_is_zero() {
        let ce = weighted_cross_entropy(
            &[1.0f64, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &ClassWeights::unit(3),
        )
        .unwrap();
        assert_eq!(ce.value, 0.0);
        assert!(!ce.clamped);
    }

    #[test]
    fn cross_entropy_uniform_k4_is_ln4() {
        let ce =
            weighted_cross_entropy(&[0.25f64; 4], &[0.0, 1.0, 0.0, 0.0], &ClassWeights::unit(4))
                .unwrap();
        assert_abs_diff_eq!(ce.value, 4.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn cross_entropy_linear_in_true_class_weight() {
        let probs = [0.7f64, 0.2, 0.1];
        let target = [1.0f64, 0.0, 0.0];
        let unit = weighted_cross_entropy(&probs, &target, &ClassWeights::unit(3)).unwrap();
        let doubled = weighted_cross_entropy(
            &probs,
            &target,
            &ClassWeights::new(vec![2.0, 1.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(doubled.value, 2.0 * unit.value, epsilon = 1e-12);
    }

    #[test]
    fn cross_entropy_flags_clamp() {
        let ce =
            weighted_cross_entropy(&[0.0f64, 1.0], &[1.0, 0.0], &ClassWeights::unit(2)).unwrap();
        assert!(ce.clamped);
        assert_abs_diff_eq!(ce.value, -(LOG_CLAMP_FLOOR.ln()), epsilon = 1e-9);
    }

    #[test]
    fn class_weights_uniform_counts_are_ones() {
        let w = class_weights_from_freq::<f64>(&[10, 10]).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn class_weights_closed_form() {
        let w = class_weights_from_freq::<f64>(&[30, 10]).unwrap();
        assert_abs_diff_eq!(w.as_slice()[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w.as_slice()[1], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn class_weights_floor_zero_counts() {
        let w = class_weights_from_freq::<f64>(&[5, 0]).unwrap();
        assert!(w.as_slice()[1].is_finite());
        assert_abs_diff_eq!(w.as_slice()[1], 2.5, epsilon = 1e-15);
        assert!(class_weights_from_freq::<f64>(&[0, 0]).is_err());
    }

    #[test]
    fn unit_weight_ce_equals_nll_of_true_class() {
        let probs = [0.6f64, 0.3, 0.1];
        let target = label_smooth(&[0.0f64, 1.0, 0.0], 0.0).unwrap();
        let ce = weighted_cross_entropy(&probs, &target, &ClassWeights::unit(3)).unwrap();
        assert_abs_diff_eq!(ce.value, -0.3f64.ln(), epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(
            logits in proptest::collection::vec(-20.0f64..20.0, 2..8),
            shift in -50.0f64..50.0,
        ) {
            let base = softmax(&logits).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|&l| l + shift).collect();
            let moved = softmax(&shifted).unwrap();
            for (a, b) in base.iter().zip(&moved) {
                prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }

        #[test]
        fn softmax_preserves_argmax_and_sums_to_one(
            logits in proptest::collection::vec(-30.0f64..30.0, 2..10),
        ) {
            let p = softmax(&logits).unwrap();
            prop_assert_eq!(argmax(&p), argmax(&logits));
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(p.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn label_smooth_preserves_argmax_below_bound(
            k in 2usize..8,
            hot in 0usize..8,
            eps in 0.0f64..0.999,
        ) {
            let hot = hot % k;
            // Strictly below (K-1)/K keeps the smoothed argmax on the hot class.
            let eps = eps * ((k - 1) as f64 / k as f64);
            let mut one_hot = vec![0.0f64; k];
            one_hot[hot] = 1.0;
            let smoothed = label_smooth(&one_hot, eps).unwrap();
            prop_assert_eq!(argmax(&smoothed), hot);
            let sum: f64 = smoothed.iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
    }
}
