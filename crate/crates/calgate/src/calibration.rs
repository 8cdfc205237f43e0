//! Post-hoc confidence calibration: temperature scaling on the full logit
//! vector, Platt scaling on the top logit, and isotonic regression on the
//! top-class confidence.
//!
//! All maps leave the predicted class untouched; only the numeric confidence
//! changes. Fitting is deterministic.

use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, LogitRecord};
use crate::error::{Error, Result};
use crate::modelmath::{argmax, sigmoid, softmax, LOG_CLAMP_FLOOR};
use crate::num::Scalar;
use crate::opt::golden_section_min;

/// Temperature search bracket and convergence settings (search runs on ln T).
pub const TEMPERATURE_MIN: f64 = 0.05;
pub const TEMPERATURE_MAX: f64 = 20.0;
const LOG_T_TOL: f64 = 1e-4;
/// A fitted temperature within this log-distance of the bracket edge is
/// reported as degenerate.
const LOG_T_EDGE: f64 = 1e-3;

/// Platt fitting: damped Newton–Raphson settings.
const PLATT_MAX_ITERS: usize = 100;
const PLATT_GRAD_TOL: f64 = 1e-10;
/// Parameter magnitude at which the logistic fit is declared separable.
pub const PLATT_PARAM_CLAMP: f64 = 50.0;

/// A fitted transform from raw logits/confidence to calibrated top-class
/// confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CalibrationMap<S> {
    /// Raw softmax confidence, unchanged.
    Identity,
    /// Softmax of logits divided by a single scalar `t > 0`.
    Temperature { t: S },
    /// `sigmoid(a * top_logit + b)`.
    Platt { a: S, b: S },
    /// Right-continuous step function over top-class confidence.
    /// Breakpoints are `(confidence, calibrated_value)` with strictly
    /// increasing confidences and nondecreasing values.
    Isotonic { breakpoints: Vec<(S, S)> },
}

impl<S: Scalar> CalibrationMap<S> {
    pub fn temperature(t: S) -> Result<Self> {
        if t <= S::zero() || !t.is_finite() {
            return Err(Error::invalid(format!("temperature {t} must be > 0")));
        }
        Ok(CalibrationMap::Temperature { t })
    }

    pub fn platt(a: S, b: S) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid("platt parameters must be finite"));
        }
        Ok(CalibrationMap::Platt { a, b })
    }

    pub fn isotonic(breakpoints: Vec<(S, S)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::invalid("isotonic map needs at least one breakpoint"));
        }
        for (i, &(c, v)) in breakpoints.iter().enumerate() {
            if !(c >= S::zero() && c <= S::one()) || !(v >= S::zero() && v <= S::one()) {
                return Err(Error::invalid(format!(
                    "breakpoint {i} ({c}, {v}) outside [0, 1]"
                )));
            }
            if i > 0 {
                if c <= breakpoints[i - 1].0 {
                    return Err(Error::invalid(format!(
                        "breakpoint confidences must be strictly increasing at index {i}"
                    )));
                }
                if v < breakpoints[i - 1].1 {
                    return Err(Error::invalid(format!(
                        "breakpoint values must be nondecreasing at index {i}"
                    )));
                }
            }
        }
        Ok(CalibrationMap::Isotonic { breakpoints })
    }

    /// Re-checks the variant invariants (used after deserializing).
    pub fn validate(&self) -> Result<()> {
        match self {
            CalibrationMap::Identity => Ok(()),
            CalibrationMap::Temperature { t } => Self::temperature(*t).map(|_| ()),
            CalibrationMap::Platt { a, b } => Self::platt(*a, *b).map(|_| ()),
            CalibrationMap::Isotonic { breakpoints } => {
                Self::isotonic(breakpoints.clone()).map(|_| ())
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CalibrationMap::Identity => "identity",
            CalibrationMap::Temperature { .. } => "temperature",
            CalibrationMap::Platt { .. } => "platt",
            CalibrationMap::Isotonic { .. } => "isotonic",
        }
    }

    /// Applies the map to one record. The predicted class is always the raw
    /// argmax (lowest index on ties); only the confidence changes.
    pub fn apply(&self, record: &LogitRecord<S>) -> Result<CalibratedPrediction<S>> {
        let pred_class = argmax(&record.logits);
        match self {
            CalibrationMap::Identity => {
                let probs = softmax(&record.logits)?;
                Ok(CalibratedPrediction {
                    pred_class,
                    confidence: probs[pred_class],
                    full_probs: Some(probs),
                })
            }
            CalibrationMap::Temperature { t } => {
                let scaled: Vec<S> = record.logits.iter().map(|&l| l / *t).collect();
                let probs = softmax(&scaled)?;
                Ok(CalibratedPrediction {
                    pred_class,
                    confidence: probs[pred_class],
                    full_probs: Some(probs),
                })
            }
            CalibrationMap::Platt { a, b } => {
                let top = record.logits[pred_class];
                Ok(CalibratedPrediction {
                    pred_class,
                    confidence: sigmoid(*a * top + *b),
                    full_probs: None,
                })
            }
            CalibrationMap::Isotonic { breakpoints } => {
                let probs = softmax(&record.logits)?;
                Ok(CalibratedPrediction {
                    pred_class,
                    confidence: step_lookup(breakpoints, probs[pred_class]),
                    full_probs: None,
                })
            }
        }
    }

    /// Calibrated top-class confidence of a probability vector, for stream
    /// consumers that no longer hold raw logits.
    ///
    /// Temperature is applied in log space (`softmax(ln p / T)`), which
    /// coincides with `softmax(logits / T)` when `p = softmax(logits)`. For
    /// Platt the top probability is pushed through the inverse-sigmoid
    /// surrogate `ln(p / (1 - p))` since no raw logit exists here.
    pub fn confidence_from_probs(&self, probs: &[S]) -> S {
        let top = argmax(probs);
        let p = probs[top];
        match self {
            CalibrationMap::Identity => p,
            CalibrationMap::Temperature { t } => {
                let floor = S::from_f64_lossy(f64::MIN_POSITIVE);
                let logs: Vec<S> = probs.iter().map(|&x| x.max(floor).ln() / *t).collect();
                let m = logs.iter().copied().fold(logs[0], S::max);
                let z: S = logs.iter().map(|&l| (l - m).exp()).sum();
                (logs[top] - m).exp() / z
            }
            CalibrationMap::Platt { a, b } => {
                let eps = S::from_f64_lossy(1e-15);
                let p = p.max(eps).min(S::one() - eps);
                let surrogate_logit = (p / (S::one() - p)).ln();
                sigmoid(*a * surrogate_logit + *b)
            }
            CalibrationMap::Isotonic { breakpoints } => step_lookup(breakpoints, p),
        }
    }
}

/// Right-continuous step lookup: the value of the rightmost breakpoint with
/// confidence ≤ `x`; clamps to the first/last value outside the range.
fn step_lookup<S: Scalar>(breakpoints: &[(S, S)], x: S) -> S {
    let idx = breakpoints.partition_point(|&(c, _)| c <= x);
    if idx == 0 {
        breakpoints[0].1
    } else {
        breakpoints[idx - 1].1
    }
}

/// The calibrated output for one record.
///
/// `full_probs` is present for identity/temperature maps (which rescale the
/// whole distribution) and absent for platt/isotonic (top-class only).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedPrediction<S> {
    pub pred_class: usize,
    pub confidence: S,
    pub full_probs: Option<Vec<S>>,
}

/// Non-fatal conditions reported by the fitting routines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitWarning {
    /// The temperature search converged onto the lower bracket edge.
    TemperatureAtLowerBound,
    /// The temperature search converged onto the upper bracket edge.
    TemperatureAtUpperBound,
    /// Correctness is perfectly separable on the top logit (or single-class);
    /// the logistic parameters were clamped to ±50.
    PlattSeparable,
    /// Newton stopped at the iteration cap without reaching the gradient
    /// tolerance.
    PlattNoConvergence,
}

impl std::fmt::Display for FitWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FitWarning::TemperatureAtLowerBound => {
                write!(f, "temperature hit the lower search bound {TEMPERATURE_MIN}")
            }
            FitWarning::TemperatureAtUpperBound => {
                write!(f, "temperature hit the upper search bound {TEMPERATURE_MAX}")
            }
            FitWarning::PlattSeparable => write!(
                f,
                "correctness is separable on the top logit; parameters clamped to ±{PLATT_PARAM_CLAMP}"
            ),
            FitWarning::PlattNoConvergence => {
                write!(f, "platt fit stopped at the iteration cap before the gradient tolerance")
            }
        }
    }
}

/// A fitted map plus any degeneracy warnings raised during fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct Fitted<S> {
    pub map: CalibrationMap<S>,
    pub warnings: Vec<FitWarning>,
}

/// Fits a global temperature by minimizing validation NLL of
/// `softmax(logits / T)` with a golden-section search on ln T.
pub fn fit_temperature<S: Scalar>(val: &Dataset<S>) -> Result<Fitted<S>> {
    if val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let lo = S::from_f64_lossy(TEMPERATURE_MIN.ln());
    let hi = S::from_f64_lossy(TEMPERATURE_MAX.ln());
    let nll = |log_t: S| mean_nll_at_temperature(val, log_t.exp());
    let min = golden_section_min(nll, lo, hi, S::from_f64_lossy(LOG_T_TOL), 200);

    let mut warnings = Vec::new();
    let edge = S::from_f64_lossy(LOG_T_EDGE);
    if (min.x - lo).abs() <= edge {
        warnings.push(FitWarning::TemperatureAtLowerBound);
    } else if (hi - min.x).abs() <= edge {
        warnings.push(FitWarning::TemperatureAtUpperBound);
    }
    Ok(Fitted {
        map: CalibrationMap::temperature(min.x.exp())?,
        warnings,
    })
}

/// Mean −ln p(true class) under `softmax(logits / t)`, with the usual
/// 1e-12 floor so the objective stays finite at extreme temperatures.
fn mean_nll_at_temperature<S: Scalar>(ds: &Dataset<S>, t: S) -> S {
    let floor = S::from_f64_lossy(LOG_CLAMP_FLOOR);
    let mut total = S::zero();
    for r in ds.records() {
        let m = r.logits.iter().copied().fold(r.logits[0], S::max);
        let mut z = S::zero();
        for &l in &r.logits {
            z = z + ((l - m) / t).exp();
        }
        let p_true = ((r.logits[r.label] - m) / t).exp() / z;
        total = total - p_true.max(floor).ln();
    }
    total / S::from_usize_lossy(ds.len())
}

/// Fits `sigmoid(a * top_logit + b)` to top-1 correctness by maximum
/// likelihood (damped Newton–Raphson, deterministic start at `a = 0`,
/// `b = logit(accuracy)`).
///
/// Perfectly separable data (including single-class data) yields parameters
/// clamped to ±50 plus [`FitWarning::PlattSeparable`] instead of an error.
pub fn fit_platt<S: Scalar>(val: &Dataset<S>) -> Result<Fitted<S>> {
    if val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let points: Vec<(f64, f64)> = val
        .records()
        .iter()
        .map(|r| {
            let pred = argmax(&r.logits);
            let x = r.logits[pred].to_f64_lossy();
            let c = if pred == r.label { 1.0 } else { 0.0 };
            (x, c)
        })
        .collect();

    let mut warnings = Vec::new();
    if is_separable(&points) {
        warnings.push(FitWarning::PlattSeparable);
    }

    let n = points.len() as f64;
    let acc = (points.iter().map(|&(_, c)| c).sum::<f64>() / n).clamp(1e-6, 1.0 - 1e-6);
    let mut a = 0.0f64;
    let mut b = (acc / (1.0 - acc)).ln();

    let mut converged = false;
    for _ in 0..PLATT_MAX_ITERS {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &(x, c) in &points {
            let s = sigmoid(a * x + b);
            let r = c - s;
            let w = s * (1.0 - s);
            ga += r * x;
            gb += r;
            haa += w * x * x;
            hab += w * x;
            hbb += w;
        }
        if (ga * ga + gb * gb).sqrt() < PLATT_GRAD_TOL {
            converged = true;
            break;
        }
        // Newton direction for maximizing the log-likelihood: solve
        // [haa hab; hab hbb] d = g (the negated Hessian is positive definite).
        let det = haa * hbb - hab * hab;
        let (da, db) = if det.abs() <= 1e-12 * (haa * hbb).abs().max(f64::MIN_POSITIVE) {
            // Hessian is singular (all top logits identical): update the
            // intercept alone.
            (0.0, gb / hbb.max(f64::MIN_POSITIVE))
        } else {
            ((hbb * ga - hab * gb) / det, (haa * gb - hab * ga) / det)
        };

        let base_ll = platt_loglik(&points, a, b);
        let mut step = 1.0f64;
        let mut accepted = false;
        for _ in 0..30 {
            let (na, nb) = (a + step * da, b + step * db);
            if platt_loglik(&points, na, nb) > base_ll {
                a = na;
                b = nb;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true; // no ascent direction improves: numerically at the optimum
            break;
        }
        if a.abs() > PLATT_PARAM_CLAMP || b.abs() > PLATT_PARAM_CLAMP {
            a = a.clamp(-PLATT_PARAM_CLAMP, PLATT_PARAM_CLAMP);
            b = b.clamp(-PLATT_PARAM_CLAMP, PLATT_PARAM_CLAMP);
            if !warnings.contains(&FitWarning::PlattSeparable) {
                warnings.push(FitWarning::PlattSeparable);
            }
            converged = true;
            break;
        }
    }
    if !converged && !warnings.contains(&FitWarning::PlattSeparable) {
        warnings.push(FitWarning::PlattNoConvergence);
    }

    Ok(Fitted {
        map: CalibrationMap::platt(S::from_f64_lossy(a), S::from_f64_lossy(b))?,
        warnings,
    })
}

fn platt_loglik(points: &[(f64, f64)], a: f64, b: f64) -> f64 {
    let mut ll = 0.0;
    for &(x, c) in points {
        let s = sigmoid(a * x + b).clamp(1e-300, 1.0 - 1e-16);
        ll += c * s.ln() + (1.0 - c) * (1.0 - s).ln();
    }
    ll
}

/// True when correctness can be perfectly separated by a threshold on the
/// top logit (or only one class is present).
fn is_separable(points: &[(f64, f64)]) -> bool {
    let mut max_wrong = f64::NEG_INFINITY;
    let mut min_wrong = f64::INFINITY;
    let mut max_right = f64::NEG_INFINITY;
    let mut min_right = f64::INFINITY;
    let (mut n_right, mut n_wrong) = (0usize, 0usize);
    for &(x, c) in points {
        if c > 0.5 {
            n_right += 1;
            max_right = max_right.max(x);
            min_right = min_right.min(x);
        } else {
            n_wrong += 1;
            max_wrong = max_wrong.max(x);
            min_wrong = min_wrong.min(x);
        }
    }
    n_right == 0 || n_wrong == 0 || min_right > max_wrong || min_wrong > max_right
}

/// Fits a monotone step function from top-class confidence to empirical
/// accuracy with pool-adjacent-violators; exact ties on confidence are merged
/// into weighted points first.
pub fn fit_isotonic<S: Scalar>(val: &Dataset<S>) -> Result<Fitted<S>> {
    if val.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut pairs: Vec<(S, S)> = Vec::with_capacity(val.len());
    for r in val.records() {
        let probs = softmax(&r.logits)?;
        let pred = argmax(&probs);
        let correct = if pred == r.label { S::one() } else { S::zero() };
        pairs.push((probs[pred], correct));
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite confidence"));

    // Merge exact confidence ties into one weighted observation.
    let mut xs: Vec<S> = Vec::new();
    let mut ys: Vec<S> = Vec::new();
    let mut ws: Vec<S> = Vec::new();
    for (c, y) in pairs {
        if xs.last() == Some(&c) {
            let i = xs.len() - 1;
            let w = ws[i];
            ys[i] = (ys[i] * w + y) / (w + S::one());
            ws[i] = w + S::one();
        } else {
            xs.push(c);
            ys.push(y);
            ws.push(S::one());
        }
    }

    let fitted = pool_adjacent_violators(&ys, &ws);
    let mut breakpoints: Vec<(S, S)> = Vec::new();
    for (i, (&c, &v)) in xs.iter().zip(&fitted).enumerate() {
        // One breakpoint per block: keep the block's smallest confidence.
        if i == 0 || fitted[i - 1] != v {
            breakpoints.push((c, v.max(S::zero()).min(S::one())));
        }
    }

    Ok(Fitted {
        map: CalibrationMap::isotonic(breakpoints)?,
        warnings: Vec::new(),
    })
}

/// Weighted pool-adjacent-violators for nondecreasing regression.
///
/// Returns the fitted value for each input position. Inputs are assumed
/// already ordered by the regressor; violations of monotonicity are pooled
/// into weighted-mean blocks.
pub fn pool_adjacent_violators<S: Scalar>(values: &[S], weights: &[S]) -> Vec<S> {
    assert_eq!(
        values.len(),
        weights.len(),
        "values/weights length mismatch"
    );
    let n = values.len();
    // Stack of blocks: (mean, weight, count of points covered).
    let mut mean: Vec<S> = Vec::with_capacity(n);
    let mut weight: Vec<S> = Vec::with_capacity(n);
    let mut span: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        mean.push(values[i]);
        weight.push(weights[i]);
        span.push(1);
        while mean.len() > 1 && mean[mean.len() - 2] > mean[mean.len() - 1] {
            let (m2, w2, s2) = (
                mean.pop().unwrap(),
                weight.pop().unwrap(),
                span.pop().unwrap(),
            );
            let j = mean.len() - 1;
            let pooled_w = weight[j] + w2;
            mean[j] = (mean[j] * weight[j] + m2 * w2) / pooled_w;
            weight[j] = pooled_w;
            span[j] += s2;
        }
    }
    let mut out = Vec::with_capacity(n);
    for (m, s) in mean.iter().zip(&span) {
        for _ in 0..*s {
            out.push(*m);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::SplitTag;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rec(stream: &str, t: i64, logits: Vec<f64>, label: usize) -> LogitRecord<f64> {
        LogitRecord {
            stream_id: stream.to_string(),
            t_ms: t,
            logits,
            label,
        }
    }

    fn ds(k: usize, records: Vec<LogitRecord<f64>>) -> Dataset<f64> {
        Dataset::new(k, records, SplitTag::Val).unwrap()
    }

    // ---- apply ---------------------------------------------------------

    #[test]
    fn temperature_one_matches_identity() {
        let r = rec("s", 0, vec![1.2, -0.4, 0.9], 0);
        let id = CalibrationMap::Identity.apply(&r).unwrap();
        let t1 = CalibrationMap::temperature(1.0).unwrap().apply(&r).unwrap();
        assert_eq!(id, t1);
    }

    #[test]
    fn temperature_two_closed_form() {
        let r = rec("s", 0, vec![2.0, 0.0], 0);
        let out = CalibrationMap::temperature(2.0).unwrap().apply(&r).unwrap();
        let e = std::f64::consts::E;
        assert_eq!(out.pred_class, 0);
        assert_abs_diff_eq!(out.confidence, e / (e + 1.0), epsilon = 1e-12);
        let probs = out.full_probs.unwrap();
        assert_abs_diff_eq!(probs[1], 1.0 / (e + 1.0), epsilon = 1e-12);
    }

    #[test]
    fn pred_class_is_raw_argmax_for_every_kind() {
        let r = rec("s", 0, vec![0.3, 2.5, 2.5, -1.0], 0);
        let maps = [
            CalibrationMap::Identity,
            CalibrationMap::temperature(5.0).unwrap(),
            CalibrationMap::platt(-2.0, 1.0).unwrap(),
            CalibrationMap::isotonic(vec![(0.0, 0.1), (0.5, 0.9)]).unwrap(),
        ];
        for map in maps {
            let out = map.apply(&r).unwrap();
            assert_eq!(out.pred_class, 1, "{}", map.kind_name());
            assert!(out.confidence >= 0.0 && out.confidence <= 1.0);
        }
    }

    #[test]
    fn platt_and_isotonic_omit_full_probs() {
        let r = rec("s", 0, vec![1.0, 0.0], 0);
        assert!(CalibrationMap::platt(1.0, 0.0)
            .unwrap()
            .apply(&r)
            .unwrap()
            .full_probs
            .is_none());
        assert!(CalibrationMap::isotonic(vec![(0.5, 0.5)])
            .unwrap()
            .apply(&r)
            .unwrap()
            .full_probs
            .is_none());
    }

    #[test]
    fn step_lookup_is_right_continuous_with_clamped_ends() {
        let bp = vec![(0.2, 0.1), (0.5, 0.4), (0.8, 0.9)];
        assert_eq!(step_lookup(&bp, 0.1), 0.1); // below first
        assert_eq!(step_lookup(&bp, 0.2), 0.1); // exactly on a breakpoint
        assert_eq!(step_lookup(&bp, 0.49), 0.1);
        assert_eq!(step_lookup(&bp, 0.5), 0.4);
        assert_eq!(step_lookup(&bp, 0.79), 0.4);
        assert_eq!(step_lookup(&bp, 0.95), 0.9); // above last
    }

    // ---- temperature fitting -------------------------------------------

    /// Deterministic pseudo-labelled set: records whose label matches the
    /// softmax of their logits often enough to be roughly calibrated at T=1.
    fn roughly_calibrated(n: usize) -> Dataset<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let mut records = Vec::new();
        for i in 0..n {
            let p_true: f64 = rng.random_range(0.35..0.95);
            let rest = (1.0 - p_true) / 2.0;
            let probs = [p_true, rest, rest];
            let correct = rng.random_bool(p_true);
            // The intended top class is index 0; the label agrees with
            // probability p_true.
            let label = if correct { 0 } else { rng.random_range(1..3) };
            let logits: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
            records.push(rec(
                &format!("s{}", i % 4),
                (i / 4) as i64 * 40,
                logits,
                label,
            ));
        }
        ds(3, records)
    }

    #[test]
    fn fit_temperature_near_one_on_calibrated_data() {
        let val = roughly_calibrated(4000);
        let fit = fit_temperature(&val).unwrap();
        let CalibrationMap::Temperature { t } = fit.map else {
            panic!("expected temperature map")
        };
        assert!((0.9..=1.1).contains(&t), "t = {t}");
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn fit_temperature_recovers_logit_scale() {
        let val = roughly_calibrated(4000);
        let scaled = Dataset::new(
            3,
            val.records()
                .iter()
                .map(|r| LogitRecord {
                    logits: r.logits.iter().map(|&l| l * 3.0).collect(),
                    ..r.clone()
                })
                .collect(),
            SplitTag::Val,
        )
        .unwrap();
        let fit = fit_temperature(&scaled).unwrap();
        let CalibrationMap::Temperature { t } = fit.map else {
            panic!("expected temperature map")
        };
        assert!((2.7..=3.3).contains(&t), "t = {t}");
    }

    #[test]
    fn fit_temperature_flags_boundary_on_always_correct_singleton() {
        let val = ds(3, vec![rec("s", 0, vec![4.0, 0.0, 0.0], 0)]);
        let fit = fit_temperature(&val).unwrap();
        let CalibrationMap::Temperature { t } = fit.map else {
            panic!("expected temperature map")
        };
        assert!(t <= TEMPERATURE_MIN * 1.01, "t = {t}");
        assert_eq!(fit.warnings, vec![FitWarning::TemperatureAtLowerBound]);
    }

    #[test]
    fn fit_temperature_rejects_empty() {
        let empty = Dataset::<f64>::new(3, vec![], SplitTag::Val).unwrap();
        assert!(matches!(fit_temperature(&empty), Err(Error::EmptyDataset)));
    }

    // ---- platt fitting ---------------------------------------------------

    /// Brute-force grid oracle for the Platt log-likelihood maximum.
    fn platt_grid_oracle(points: &[(f64, f64)], lo: f64, hi: f64, steps: usize) -> (f64, f64, f64) {
        let mut best = (0.0, 0.0, f64::NEG_INFINITY);
        for i in 0..=steps {
            for j in 0..=steps {
                let a = lo + (hi - lo) * i as f64 / steps as f64;
                let b = lo + (hi - lo) * j as f64 / steps as f64;
                let ll = platt_loglik(points, a, b);
                if ll > best.2 {
                    best = (a, b, ll);
                }
            }
        }
        best
    }

    #[test]
    fn platt_independent_correctness_gives_zero_params() {
        // Correctness independent of the top logit value, accuracy 1/2:
        // for each top-logit level, one correct and one incorrect record.
        let mut records = Vec::new();
        for (i, &m) in [1.0f64, 2.0, 3.0, 4.0].iter().enumerate() {
            records.push(rec("s", 80 * i as i64, vec![m, 0.0], 0)); // correct
            records.push(rec("s", 80 * i as i64 + 40, vec![m, 0.0], 1)); // wrong
        }
        let val = ds(2, records);
        let fit = fit_platt(&val).unwrap();
        let CalibrationMap::Platt { a, b } = fit.map else {
            panic!("expected platt map")
        };
        assert!(a.abs() < 1e-6, "a = {a}");
        assert!(b.abs() < 1e-6, "b = {b}");

        // Grid oracle confirms the likelihood peak sits at the origin.
        let points: Vec<(f64, f64)> = val
            .records()
            .iter()
            .map(|r| (r.logits[0], if r.label == 0 { 1.0 } else { 0.0 }))
            .collect();
        let (ga, gb, gll) = platt_grid_oracle(&points, -2.0, 2.0, 80);
        assert!(
            ga.abs() <= 0.06 && gb.abs() <= 0.06,
            "grid peak ({ga}, {gb})"
        );
        assert!(platt_loglik(&points, a, b) >= gll - 1e-9);
    }

    #[test]
    fn platt_all_correct_is_separable_and_confident() {
        let val = ds(
            2,
            (0..6)
                .map(|i| rec("s", 40 * i, vec![1.0 + i as f64, 0.0], 0))
                .collect(),
        );
        let fit = fit_platt(&val).unwrap();
        assert!(fit.warnings.contains(&FitWarning::PlattSeparable));
        let out = fit.map.apply(&val.records()[0]).unwrap();
        assert!(out.confidence > 0.99, "confidence = {}", out.confidence);
    }

    #[test]
    fn platt_two_point_separable_has_positive_slope() {
        let val = ds(
            2,
            vec![
                rec("s", 0, vec![2.0, 0.0], 0),    // top logit 2, correct
                rec("s", 40, vec![-2.0, -5.0], 1), // top logit -2, wrong
            ],
        );
        let fit = fit_platt(&val).unwrap();
        assert!(fit.warnings.contains(&FitWarning::PlattSeparable));
        let CalibrationMap::Platt { a, .. } = fit.map else {
            panic!("expected platt map")
        };
        assert!(a > 0.0, "a = {a}");

        // Sign agrees with a coarse grid oracle.
        let points = [(2.0, 1.0), (-2.0, 0.0)];
        let (ga, _, _) = platt_grid_oracle(&points, -8.0, 8.0, 64);
        assert!(ga > 0.0);
    }

    #[test]
    fn platt_outputs_lie_in_unit_interval() {
        let map = CalibrationMap::platt(50.0, -25.0).unwrap();
        for m in [-100.0, -1.0, 0.0, 1.0, 100.0] {
            let r = rec("s", 0, vec![m, m - 1.0], 0);
            let c = map.apply(&r).unwrap().confidence;
            assert!((0.0..=1.0).contains(&c));
        }
    }

    // ---- isotonic fitting ------------------------------------------------

    #[test]
    fn isotonic_pools_single_violation_to_half() {
        // Higher-confidence record incorrect, lower-confidence record correct:
        // sorted ascending the correctness sequence is 1 then 0, a single
        // violation, pooled to 0.5 over both confidences.
        let hi = [9.0f64.ln(), 0.0, 0.0]; // top prob ≈ 0.818
        let lo = [4.0f64.ln(), 0.0, -(4.0f64.ln())]; // top prob ≈ 0.762
        let val = ds(
            3,
            vec![
                rec("s", 0, hi.to_vec(), 1),  // wrong
                rec("s", 40, lo.to_vec(), 0), // correct
            ],
        );
        let fit = fit_isotonic(&val).unwrap();
        let CalibrationMap::Isotonic { breakpoints } = &fit.map else {
            panic!("expected isotonic map")
        };
        assert_eq!(breakpoints.len(), 1);
        assert_abs_diff_eq!(breakpoints[0].1, 0.5, epsilon = 1e-12);
        // Both training confidences map to the pooled value.
        for r in val.records() {
            assert_abs_diff_eq!(fit.map.apply(r).unwrap().confidence, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn isotonic_identity_on_monotone_input() {
        // Low-confidence records wrong, high-confidence records right:
        // already isotonic, so the fitted values equal block accuracies.
        let val = ds(
            2,
            vec![
                rec("s", 0, vec![0.2, 0.0], 1),
                rec("s", 40, vec![0.2, 0.0], 1),
                rec("s", 80, vec![3.0, 0.0], 0),
                rec("s", 120, vec![3.0, 0.0], 0),
            ],
        );
        let fit = fit_isotonic(&val).unwrap();
        let CalibrationMap::Isotonic { breakpoints } = &fit.map else {
            panic!("expected isotonic map")
        };
        assert_eq!(breakpoints.len(), 2);
        assert_eq!(breakpoints[0].1, 0.0);
        assert_eq!(breakpoints[1].1, 1.0);
    }

    #[test]
    fn isotonic_all_correct_is_constant_one() {
        let val = ds(
            2,
            (0..5)
                .map(|i| rec("s", 40 * i, vec![0.5 + i as f64, 0.0], 0))
                .collect(),
        );
        let fit = fit_isotonic(&val).unwrap();
        let CalibrationMap::Isotonic { breakpoints } = &fit.map else {
            panic!("expected isotonic map")
        };
        assert!(breakpoints.iter().all(|&(_, v)| v == 1.0));
    }

    #[test]
    fn pava_matches_hand_example() {
        let y = [1.0f64, 0.0];
        let w = [1.0f64, 1.0];
        assert_eq!(pool_adjacent_violators(&y, &w), vec![0.5, 0.5]);

        let y = [0.0f64, 1.0, 0.0, 1.0];
        let fitted = pool_adjacent_violators(&y, &[1.0; 4]);
        assert_eq!(fitted, vec![0.0, 0.5, 0.5, 1.0]);
    }

    // ---- serialization ----------------------------------------------------

    #[test]
    fn map_json_round_trip() {
        let maps = [
            CalibrationMap::Identity,
            CalibrationMap::temperature(3.0000000000000004).unwrap(),
            CalibrationMap::platt(1.0 / 3.0, -0.1).unwrap(),
            CalibrationMap::isotonic(vec![(0.1, 0.05), (0.7, 0.65)]).unwrap(),
        ];
        for map in maps {
            let json = serde_json::to_string(&map).unwrap();
            let back: CalibrationMap<f64> = serde_json::from_str(&json).unwrap();
            back.validate().unwrap();
            assert_eq!(map, back, "{json}");
        }
    }

    #[test]
    fn invalid_maps_rejected() {
        assert!(CalibrationMap::temperature(0.0).is_err());
        assert!(CalibrationMap::temperature(-2.0).is_err());
        assert!(CalibrationMap::isotonic(vec![(0.5, 0.2), (0.5, 0.3)]).is_err());
        assert!(CalibrationMap::isotonic(vec![(0.2, 0.8), (0.5, 0.3)]).is_err());
        assert!(CalibrationMap::isotonic(vec![(0.2, 1.5)]).is_err());
    }

    // ---- properties --------------------------------------------------------

    proptest! {
        #[test]
        fn temperature_monotonically_flattens_confidence(
            logits in proptest::collection::vec(-8.0f64..8.0, 2..7),
            t1 in 0.1f64..5.0,
            ratio in 1.01f64..4.0,
        ) {
            let r = rec("s", 0, logits, 0);
            let c1 = CalibrationMap::temperature(t1).unwrap().apply(&r).unwrap().confidence;
            let c2 = CalibrationMap::temperature(t1 * ratio).unwrap().apply(&r).unwrap().confidence;
            prop_assert!(c2 <= c1 + 1e-12, "t={t1} c={c1} vs t'={} c'={c2}", t1 * ratio);
        }

        #[test]
        fn pava_output_is_nondecreasing_and_mean_preserving(
            ys in proptest::collection::vec(0.0f64..1.0, 1..40),
        ) {
            let w = vec![1.0; ys.len()];
            let fitted = pool_adjacent_violators(&ys, &w);
            for pair in fitted.windows(2) {
                prop_assert!(pair[0] <= pair[1] + 1e-12);
            }
            let sum_in: f64 = ys.iter().sum();
            let sum_out: f64 = fitted.iter().sum();
            prop_assert!((sum_in - sum_out).abs() < 1e-9);
        }

        #[test]
        fn fitted_isotonic_is_monotone_in_confidence(
            seed in 0u64..500,
            n in 5usize..60,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
            let records: Vec<LogitRecord<f64>> = (0..n)
                .map(|i| {
                    let m: f64 = rng.random_range(0.0..4.0);
                    let label = usize::from(!rng.random_bool(0.6));
                    rec("s", 40 * i as i64, vec![m, 0.0], label)
                })
                .collect();
            let val = ds(2, records);
            let fit = fit_isotonic(&val).unwrap();
            let CalibrationMap::Isotonic { breakpoints } = &fit.map else {
                panic!("expected isotonic map")
            };
            let mut prev = -1.0f64;
            for step in 0..=200 {
                let x = step as f64 / 200.0;
                let y = step_lookup(breakpoints, x);
                prop_assert!(y + 1e-12 >= prev);
                prop_assert!((0.0..=1.0).contains(&y));
                prev = y;
            }
        }
    }
}
