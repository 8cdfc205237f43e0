//! Selective prediction: sweeping a confidence threshold τ over calibrated
//! predictions to trade coverage against act-only precision, and checking
//! the calibration-backed bound AOP(τ) ≥ τ − ε.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationMap;
use crate::datamodel::{atomic_write, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{bin_index, ece, ReliabilityBin};
use crate::num::Scalar;

/// One threshold of a sweep.
///
/// `aop` is absent when no record clears the threshold (coverage 0), in
/// which case `bound_satisfied` is vacuously true and `region_epsilon` 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint<S> {
    pub tau: S,
    pub coverage: S,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aop: Option<S>,
    pub region_epsilon: S,
    pub bound_satisfied: bool,
}

/// Per-threshold sweep results, ordered by strictly increasing τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve<S> {
    pub map_kind: String,
    pub points: Vec<SweepPoint<S>>,
}

impl<S: Scalar> SweepCurve<S> {
    /// Plot-ready CSV: `tau,coverage,aop,epsilon,bound_ok`. An absent AOP
    /// leaves the field empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, |out| {
            writeln!(out, "tau,coverage,aop,epsilon,bound_ok")?;
            for p in &self.points {
                let aop = p.aop.map(|a| a.to_string()).unwrap_or_default();
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    p.tau, p.coverage, aop, p.region_epsilon, p.bound_satisfied
                )?;
            }
            Ok(())
        })
    }
}

/// The default threshold grid: 0.00 to 0.95 in steps of 0.05, plus 0.99.
pub fn default_tau_grid<S: Scalar>() -> Vec<S> {
    let mut taus: Vec<S> = (0..20)
        .map(|i| S::from_usize_lossy(i) * S::from_f64_lossy(0.05))
        .collect();
    taus.push(S::from_f64_lossy(0.99));
    taus
}

/// Sweeps thresholds over the calibrated predictions of `ds`.
///
/// For each τ: coverage is the fraction of records with ĉ ≥ τ, AOP the
/// fraction correct among them, and `region_epsilon` the largest
/// |accuracy − confidence| gap over occupied ECE bins intersecting [τ, 1]
/// (same equal-width binning as the metrics module, `n_bins` wide).
/// `bound_satisfied` records AOP ≥ τ − ε.
pub fn sweep<S: Scalar>(
    ds: &Dataset<S>,
    map: &CalibrationMap<S>,
    taus: &[S],
    n_bins: usize,
) -> Result<SweepCurve<S>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for (i, &t) in taus.iter().enumerate() {
        if !(t >= S::zero() && t <= S::one()) {
            return Err(Error::invalid(format!("tau[{i}] = {t} outside [0, 1]")));
        }
        if i > 0 && t <= taus[i - 1] {
            return Err(Error::invalid("taus must be strictly increasing"));
        }
    }

    let mut preds = Vec::with_capacity(ds.len());
    let mut labels = Vec::with_capacity(ds.len());
    for r in ds.records() {
        preds.push(map.apply(r)?);
        labels.push(r.label);
    }
    let (_, bins) = ece(&preds, &labels, n_bins)?;

    let n = S::from_usize_lossy(ds.len());
    let points = taus
        .iter()
        .map(|&tau| {
            let mut acted = 0usize;
            let mut correct = 0usize;
            for (p, &y) in preds.iter().zip(&labels) {
                if p.confidence >= tau {
                    acted += 1;
                    if p.pred_class == y {
                        correct += 1;
                    }
                }
            }
            let coverage = S::from_usize_lossy(acted) / n;
            let aop =
                (acted > 0).then(|| S::from_usize_lossy(correct) / S::from_usize_lossy(acted));
            let region_epsilon = region_epsilon(&bins, tau, n_bins);
            let bound_satisfied = match aop {
                Some(a) => a >= tau - region_epsilon,
                None => true,
            };
            SweepPoint {
                tau,
                coverage,
                aop,
                region_epsilon,
                bound_satisfied,
            }
        })
        .collect();

    Ok(SweepCurve {
        map_kind: map.kind_name().to_string(),
        points,
    })
}

/// Largest |accuracy − confidence| over occupied bins whose interval
/// intersects [τ, 1] — the decision-region calibration error estimate.
fn region_epsilon<S: Scalar>(bins: &[ReliabilityBin<S>], tau: S, n_bins: usize) -> S {
    let first = bin_index(tau, n_bins);
    bins[first..]
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| (b.empirical_accuracy - b.mean_confidence).abs())
        .fold(S::zero(), S::max)
}

/// The sweep point with the largest coverage among those meeting
/// `target_precision`.
pub fn operating_points<S: Scalar>(
    curve: &SweepCurve<S>,
    target_precision: S,
) -> Result<SweepPoint<S>> {
    if curve.points.is_empty() {
        return Err(Error::invalid("sweep curve has no points"));
    }
    // Coverage ties resolve to the lowest τ (points are ordered by τ and
    // `>` keeps the first maximum).
    let mut best: Option<&SweepPoint<S>> = None;
    for p in &curve.points {
        if p.aop.is_some_and(|a| a >= target_precision)
            && best.is_none_or(|b| p.coverage > b.coverage)
        {
            best = Some(p);
        }
    }
    best.cloned().ok_or(Error::NoOperatingPoint {
        target: target_precision.to_f64_lossy(),
    })
}
