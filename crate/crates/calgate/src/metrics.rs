//! Reliability metrics: binned ECE with reliability-diagram data, NLL,
//! Brier score, and top-k accuracy.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::{CalibratedPrediction, CalibrationMap};
use crate::datamodel::{atomic_write, Dataset, LogitRecord, ProbRecord};
use crate::error::{Error, Result};
use crate::modelmath::{topk_indices, LOG_CLAMP_FLOOR};
use crate::num::Scalar;

/// Default number of equal-width confidence bins.
pub const DEFAULT_BINS: usize = 15;

/// One confidence bin of the reliability diagram. Empty bins keep
/// `mean_confidence = empirical_accuracy = 0` and contribute nothing to ECE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin<S> {
    pub lo: S,
    pub hi: S,
    pub count: usize,
    pub mean_confidence: S,
    pub empirical_accuracy: S,
}

/// Binned confidence-vs-accuracy table plus scalar reliability metrics.
///
/// `nll`/`brier` are present only when the calibration map produces full
/// distributions (identity and temperature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport<S> {
    pub map_kind: String,
    pub n: usize,
    pub bins: Vec<ReliabilityBin<S>>,
    pub ece: S,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nll: Option<S>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub brier: Option<S>,
    pub top1: S,
    pub top5: S,
}

impl<S: Scalar> ReliabilityReport<S> {
    /// Plot-ready CSV: `bin_lo,bin_hi,count,mean_conf,acc`.
    pub fn write_bins_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, |out| {
            writeln!(out, "bin_lo,bin_hi,count,mean_conf,acc")?;
            for b in &self.bins {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    b.lo, b.hi, b.count, b.mean_confidence, b.empirical_accuracy
                )?;
            }
            Ok(())
        })
    }
}

/// Bin index for a confidence in [0, 1]: bin b covers [b/n, (b+1)/n), with
/// the last bin closed at 1.
pub(crate) fn bin_index<S: Scalar>(confidence: S, n_bins: usize) -> usize {
    let raw = (confidence * S::from_usize_lossy(n_bins))
        .floor()
        .to_usize()
        .unwrap_or(0);
    raw.min(n_bins - 1)
}

/// Expected calibration error over equal-width bins, together with the bins.
///
/// ECE = Σ_b (count_b / n) · |acc_b − conf_b|.
pub fn ece<S: Scalar>(
    preds: &[CalibratedPrediction<S>],
    labels: &[usize],
    n_bins: usize,
) -> Result<(S, Vec<ReliabilityBin<S>>)> {
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if preds.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    if n_bins < 1 {
        return Err(Error::invalid("n_bins must be >= 1"));
    }

    let mut conf_sum = vec![S::zero(); n_bins];
    let mut correct = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for (p, &y) in preds.iter().zip(labels) {
        let b = bin_index(p.confidence, n_bins);
        conf_sum[b] = conf_sum[b] + p.confidence;
        if p.pred_class == y {
            correct[b] += 1;
        }
        count[b] += 1;
    }

    let n = S::from_usize_lossy(preds.len());
    let n_bins_s = S::from_usize_lossy(n_bins);
    let mut total = S::zero();
    let mut bins = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let lo = S::from_usize_lossy(b) / n_bins_s;
        let hi = S::from_usize_lossy(b + 1) / n_bins_s;
        let (mean_confidence, empirical_accuracy) = if count[b] > 0 {
            let c = S::from_usize_lossy(count[b]);
            (conf_sum[b] / c, S::from_usize_lossy(correct[b]) / c)
        } else {
            (S::zero(), S::zero())
        };
        if count[b] > 0 {
            let weight = S::from_usize_lossy(count[b]) / n;
            total = total + weight * (empirical_accuracy - mean_confidence).abs();
        }
        bins.push(ReliabilityBin {
            lo,
            hi,
            count: count[b],
            mean_confidence,
            empirical_accuracy,
        });
    }
    Ok((total, bins))
}

/// Mean negative log-likelihood of the true class, floored at 1e-12.
pub fn nll<S: Scalar>(probs_records: &[ProbRecord<S>]) -> Result<S> {
    if probs_records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let floor = S::from_f64_lossy(LOG_CLAMP_FLOOR);
    let total: S = probs_records
        .iter()
        .map(|r| -(r.probs[r.label].max(floor).ln()))
        .sum();
    Ok(total / S::from_usize_lossy(probs_records.len()))
}

/// Mean multiclass Brier score: Σ_k (p_k − 1{k=y})², averaged over records.
/// Range [0, 2].
pub fn brier<S: Scalar>(probs_records: &[ProbRecord<S>]) -> Result<S> {
    if probs_records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let total: S = probs_records
        .iter()
        .map(|r| {
            r.probs
                .iter()
                .enumerate()
                .map(|(k, &p)| {
                    let target = if k == r.label { S::one() } else { S::zero() };
                    (p - target) * (p - target)
                })
                .sum::<S>()
        })
        .sum();
    Ok(total / S::from_usize_lossy(probs_records.len()))
}

/// Fraction of records whose label is among the k largest logits (ties
/// toward the lowest index).
pub fn topk_accuracy<S: Scalar>(records: &[LogitRecord<S>], k: usize) -> Result<S> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let width = records[0].logits.len();
    if k < 1 || k > width {
        return Err(Error::invalid(format!("k = {k} must lie in [1, {width}]")));
    }
    let hits = records
        .iter()
        .filter(|r| topk_indices(&r.logits, k).contains(&r.label))
        .count();
    Ok(S::from_usize_lossy(hits) / S::from_usize_lossy(records.len()))
}

/// Applies `map` to every record and assembles the full reliability report.
///
/// Top-5 accuracy uses k = min(5, K).
pub fn report<S: Scalar>(
    ds: &Dataset<S>,
    map: &CalibrationMap<S>,
    n_bins: usize,
) -> Result<ReliabilityReport<S>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut preds = Vec::with_capacity(ds.len());
    let mut labels = Vec::with_capacity(ds.len());
    let mut prob_records: Option<Vec<ProbRecord<S>>> = match map {
        CalibrationMap::Identity | CalibrationMap::Temperature { .. } => Some(Vec::new()),
        _ => None,
    };

    for r in ds.records() {
        let pred = map.apply(r)?;
        if let (Some(acc), Some(probs)) = (prob_records.as_mut(), pred.full_probs.as_ref()) {
            acc.push(ProbRecord::new(
                r.stream_id.clone(),
                r.t_ms,
                probs.clone(),
                r.label,
            )?);
        }
        labels.push(r.label);
        preds.push(pred);
    }

    let (ece_value, bins) = ece(&preds, &labels, n_bins)?;
    let (nll_value, brier_value) = match &prob_records {
        Some(records) => (Some(nll(records)?), Some(brier(records)?)),
        None => (None, None),
    };

    Ok(ReliabilityReport {
        map_kind: map.kind_name().to_string(),
        n: ds.len(),
        bins,
        ece: ece_value,
        nll: nll_value,
        brier: brier_value,
        top1: topk_accuracy(ds.records(), 1)?,
        top5: topk_accuracy(ds.records(), 5.min(ds.k()))?,
    })
}
