//! Offline closed-loop stream replay: per-tick exponential smoothing of
//! class probabilities, a top-k eligibility filter, calibrated confidence,
//! and the Act/Hold gate, measured as coverage / act-only precision across
//! a threshold sweep.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationMap;
use crate::datamodel::{atomic_write, Dataset, StreamSequence};
use crate::error::{Error, Result};
use crate::gate::{step, GateConfig, GateEvent, GateState, Mode};
use crate::modelmath::{argmax, check_distribution, softmax, topk_indices};
use crate::num::Scalar;

/// Smoothing factor and top-k filter defaults used by the stream replay.
pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_TOPK: usize = 3;

/// Closed-loop replay configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<S> {
    /// Exponential smoothing factor in (0, 1]; 1 disables smoothing.
    pub alpha: S,
    /// The smoothed candidate must rank in the top `k_filter` classes of the
    /// current raw distribution to be eligible; otherwise the gate input is
    /// forced to 0.
    pub k_filter: usize,
    pub gate: GateConfig<S>,
    pub map: CalibrationMap<S>,
}

impl<S: Scalar> SimConfig<S> {
    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.alpha > S::zero() && self.alpha <= S::one()) {
            return Err(Error::invalid(format!(
                "alpha = {} outside (0, 1]",
                self.alpha
            )));
        }
        if self.k_filter < 1 || self.k_filter > k {
            return Err(Error::invalid(format!(
                "k_filter = {} outside [1, {k}]",
                self.k_filter
            )));
        }
        self.map.validate()
    }
}

/// Per-tick audit entry: the gate event plus the candidate decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickTrace<S> {
    pub stream_id: String,
    pub event: GateEvent<S>,
    pub candidate: usize,
    pub label: usize,
    pub eligible: bool,
}

/// Aggregated closed-loop outcome.
///
/// `act_only_precision` is absent when no tick was spent in Act. In the
/// aggregate path, `skipped_streams` counts streams with no records, which
/// contribute nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult<S> {
    pub tau_on: S,
    pub tau_off: S,
    pub ticks: usize,
    pub act_ticks: usize,
    pub act_correct: usize,
    pub coverage: S,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub act_only_precision: Option<S>,
    pub transitions: usize,
    #[serde(default)]
    pub skipped_streams: usize,
    #[serde(skip)]
    pub per_tick_trace: Option<Vec<TickTrace<S>>>,
}

impl<S: Scalar> SimResult<S> {
    fn from_counts(
        gate: &GateConfig<S>,
        ticks: usize,
        act_ticks: usize,
        act_correct: usize,
        transitions: usize,
        trace: Option<Vec<TickTrace<S>>>,
    ) -> Self {
        let coverage = if ticks == 0 {
            S::zero()
        } else {
            S::from_usize_lossy(act_ticks) / S::from_usize_lossy(ticks)
        };
        let act_only_precision = (act_ticks > 0)
            .then(|| S::from_usize_lossy(act_correct) / S::from_usize_lossy(act_ticks));
        SimResult {
            tau_on: gate.tau_on,
            tau_off: gate.tau_off,
            ticks,
            act_ticks,
            act_correct,
            coverage,
            act_only_precision,
            transitions,
            skipped_streams: 0,
            per_tick_trace: trace,
        }
    }
}

/// One smoothing step: pass-through on the first tick, otherwise
/// `alpha * current + (1 - alpha) * prev`.
///
/// The result sums to 1 analytically; renormalization only kicks in when
/// accumulated drift exceeds 1e-12, so an α = 1 pass-through reproduces the
/// input bit for bit.
pub fn smooth_step<S: Scalar>(prev: Option<&[S]>, current: &[S], alpha: S) -> Result<Vec<S>> {
    check_distribution(current, 1e-9)?;
    let mut out: Vec<S> = match prev {
        None => current.to_vec(),
        Some(prev) => {
            if prev.len() != current.len() {
                return Err(Error::invalid(format!(
                    "smoothing state has {} classes, current has {}",
                    prev.len(),
                    current.len()
                )));
            }
            current
                .iter()
                .zip(prev)
                .map(|(&c, &p)| alpha * c + (S::one() - alpha) * p)
                .collect()
        }
    };
    let sum: S = out.iter().copied().sum();
    if (sum - S::one()).abs() > S::from_f64_lossy(1e-12) {
        for p in &mut out {
            *p = *p / sum;
        }
    }
    Ok(out)
}

/// Replays one stream through smoothing, top-k filtering, calibration and
/// the gate. Set `record_trace` to keep the per-tick audit log.
pub fn simulate_stream<S: Scalar>(
    seq: &StreamSequence<S>,
    cfg: &SimConfig<S>,
    record_trace: bool,
) -> Result<SimResult<S>> {
    if seq.records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate(seq.records[0].logits.len())?;

    let mut smoothed: Option<Vec<S>> = None;
    let mut state = GateState::new();
    let mut trace = record_trace.then(Vec::new);
    let (mut act_ticks, mut act_correct, mut transitions) = (0usize, 0usize, 0usize);

    for r in &seq.records {
        let raw = softmax(&r.logits)?;
        let s = smooth_step(smoothed.as_deref(), &raw, cfg.alpha)?;
        let candidate = argmax(&s);
        let eligible = topk_indices(&raw, cfg.k_filter).contains(&candidate);
        let confidence = if eligible {
            cfg.map.confidence_from_probs(&s)
        } else {
            S::zero()
        };
        let (next, event) = step(&state, &cfg.gate, r.t_ms, confidence)?;
        state = next;
        smoothed = Some(s);

        if event.transitioned {
            transitions += 1;
        }
        if event.mode_out == Mode::Act {
            act_ticks += 1;
            if candidate == r.label {
                act_correct += 1;
            }
        }
        if let Some(t) = trace.as_mut() {
            t.push(TickTrace {
                stream_id: seq.stream_id.clone(),
                event,
                candidate,
                label: r.label,
                eligible,
            });
        }
    }

    Ok(SimResult::from_counts(
        &cfg.gate,
        seq.records.len(),
        act_ticks,
        act_correct,
        transitions,
        trace,
    ))
}

/// Runs every stream of `ds` at each τ (τ_on = τ_off = τ, or τ ± band when
/// `band` is given) and pools tick counts across streams.
pub fn simulate_sweep<S: Scalar>(
    ds: &Dataset<S>,
    cfg_base: &SimConfig<S>,
    taus: &[S],
    band: Option<S>,
) -> Result<Vec<(S, SimResult<S>)>> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let streams = ds.streams();
    let mut out = Vec::with_capacity(taus.len());
    for &tau in taus {
        let gate = match band {
            None => GateConfig::new(tau, tau, cfg_base.gate.refractory_ms)?,
            Some(h) => GateConfig::new(
                (tau + h).min(S::one()),
                (tau - h).max(S::zero()),
                cfg_base.gate.refractory_ms,
            )?,
        };
        let cfg = SimConfig {
            alpha: cfg_base.alpha,
            k_filter: cfg_base.k_filter,
            gate,
            map: cfg_base.map.clone(),
        };
        let (mut ticks, mut act, mut correct, mut transitions) = (0usize, 0usize, 0usize, 0usize);
        let mut skipped = 0usize;
        for stream in &streams {
            if stream.records.is_empty() {
                skipped += 1;
                continue;
            }
            let r = simulate_stream(stream, &cfg, false)?;
            ticks += r.ticks;
            act += r.act_ticks;
            correct += r.act_correct;
            transitions += r.transitions;
        }
        let mut result = SimResult::from_counts(&cfg.gate, ticks, act, correct, transitions, None);
        result.skipped_streams = skipped;
        out.push((tau, result));
    }
    Ok(out)
}

/// Writes sweep results as `tau,coverage,precision,transitions`.
pub fn write_sweep_csv<S: Scalar>(rows: &[(S, SimResult<S>)], path: &Path) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "tau,coverage,precision,transitions")?;
        for (tau, r) in rows {
            let precision = r
                .act_only_precision
                .map(|p| p.to_string())
                .unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{}",
                tau, r.coverage, precision, r.transitions
            )?;
        }
        Ok(())
    })
}

/// Per-tick audit CSV: gate columns plus the candidate decision.
pub fn write_trace_csv<S: Scalar>(trace: &[TickTrace<S>], path: &Path) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(
            out,
            "stream_id,t_ms,confidence,mode,transitioned,suppressed,candidate,label,eligible"
        )?;
        for t in trace {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                t.stream_id,
                t.event.t_ms,
                t.event.confidence_in,
                t.event.mode_out,
                t.event.transitioned,
                t.event.suppressed_by_refractory,
                t.candidate,
                t.label,
                t.eligible
            )?;
        }
        Ok(())
    })
}

/// Wall-clock statistics for one full pipeline tick (softmax, smoothing,
/// top-k filter, calibration, gate) on random logits of width `k`.
///
/// Returns `(mean_us, p99_us)`.
pub fn benchmark_tick_latency<S: Scalar>(
    cfg: &SimConfig<S>,
    k: usize,
    n_ticks: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    use rand::{Rng, SeedableRng};
    if n_ticks < 1000 {
        return Err(Error::invalid(format!(
            "n_ticks = {n_ticks} must be >= 1000 for stable percentiles"
        )));
    }
    cfg.validate(k)?;

    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<S>> = (0..n_ticks)
        .map(|_| {
            (0..k)
                .map(|_| S::from_f64_lossy(rng.random_range(-4.0..4.0)))
                .collect()
        })
        .collect();

    let mut state = GateState::new();
    let mut smoothed: Option<Vec<S>> = None;
    let mut nanos: Vec<u64> = Vec::with_capacity(n_ticks);
    let mut t_ms: i64 = 0;

    for logits in &inputs {
        let started = Instant::now();
        let raw = softmax(logits)?;
        let s = smooth_step(smoothed.as_deref(), &raw, cfg.alpha)?;
        let candidate = argmax(&s);
        let eligible = topk_indices(&raw, cfg.k_filter).contains(&candidate);
        let confidence = if eligible {
            cfg.map.confidence_from_probs(&s)
        } else {
            S::zero()
        };
        let (next, _event) = step(&state, &cfg.gate, t_ms, confidence)?;
        let elapsed = started.elapsed();

        state = next;
        smoothed = Some(s);
        t_ms += 40;
        nanos.push(elapsed.as_nanos() as u64);
    }

    nanos.sort_unstable();
    let mean_us = nanos.iter().sum::<u64>() as f64 / n_ticks as f64 / 1000.0;
    let idx = ((n_ticks as f64 * 0.99).ceil() as usize).clamp(1, n_ticks) - 1;
    let p99_us = nanos[idx] as f64 / 1000.0;
    Ok((mean_us, p99_us))
}
