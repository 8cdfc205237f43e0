//! The hysteretic Act/Hold decision automaton: an upper entry threshold
//! τ_on, a lower exit threshold τ_off, and a refractory period that blanks
//! transitions for `refractory_ms` after each switch.
//!
//! With τ_on = τ_off = τ and no refractory the automaton reduces exactly to
//! the bare threshold rule: Act ⇔ confidence ≥ τ.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::atomic_write;
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Default half-width of the hysteresis band around a center threshold.
pub const DEFAULT_BAND: f64 = 0.05;
/// Default refractory period in milliseconds.
pub const DEFAULT_REFRACTORY_MS: u64 = 200;

/// Gate thresholds and refractory duration.
///
/// Invariant: 0 ≤ τ_off ≤ τ_on ≤ 1. Equality of the thresholds is the
/// degenerate no-hysteresis case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig<S> {
    pub tau_on: S,
    pub tau_off: S,
    pub refractory_ms: u64,
}

impl<S: Scalar> GateConfig<S> {
    pub fn new(tau_on: S, tau_off: S, refractory_ms: u64) -> Result<Self> {
        for (name, t) in [("tau_on", tau_on), ("tau_off", tau_off)] {
            if !(t >= S::zero() && t <= S::one()) {
                return Err(Error::invalid(format!("{name} = {t} outside [0, 1]")));
            }
        }
        if tau_on < tau_off {
            return Err(Error::invalid(format!(
                "tau_on = {tau_on} must be >= tau_off = {tau_off}"
            )));
        }
        Ok(Self {
            tau_on,
            tau_off,
            refractory_ms,
        })
    }

    /// No hysteresis, no refractory: the bare Act ⇔ ĉ ≥ τ rule.
    pub fn bare(tau: S) -> Result<Self> {
        Self::new(tau, tau, 0)
    }

    /// The default band around a center threshold: τ ± 0.05 (clamped to
    /// [0, 1]) with a 200 ms refractory.
    pub fn around(tau: S) -> Result<Self> {
        let band = S::from_f64_lossy(DEFAULT_BAND);
        Self::new(
            (tau + band).min(S::one()),
            (tau - band).max(S::zero()),
            DEFAULT_REFRACTORY_MS,
        )
    }
}

/// Gate mode: Act triggers assistance, Hold withholds it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Act,
    Hold,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Act => write!(f, "act"),
            Mode::Hold => write!(f, "hold"),
        }
    }
}

/// The automaton state. Fresh gates start in Hold with no transition on
/// record, so the refractory period never applies before the first switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateState {
    pub mode: Mode,
    pub last_transition_ms: Option<i64>,
    last_step_ms: Option<i64>,
}

impl GateState {
    pub fn new() -> Self {
        Self {
            mode: Mode::Hold,
            last_transition_ms: None,
            last_step_ms: None,
        }
    }
}

impl Default for GateState {
    fn default() -> Self {
        Self::new()
    }
}

/// Audit record for one gate step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateEvent<S> {
    pub t_ms: i64,
    pub confidence_in: S,
    pub mode_out: Mode,
    pub transitioned: bool,
    pub suppressed_by_refractory: bool,
}

/// Advances the automaton by one tick.
///
/// The desired mode follows the hysteresis rule: Hold → Act when
/// confidence ≥ τ_on, Act → Hold when confidence < τ_off, otherwise stay.
/// A desired change inside the refractory window is suppressed (not
/// latched): the comparison simply resumes on the next tick.
pub fn step<S: Scalar>(
    state: &GateState,
    config: &GateConfig<S>,
    t_ms: i64,
    confidence: S,
) -> Result<(GateState, GateEvent<S>)> {
    if let Some(prev) = state.last_step_ms {
        if t_ms <= prev {
            return Err(Error::NonMonotoneTime {
                t_ms,
                prev_ms: prev,
            });
        }
    }
    if !(confidence >= S::zero() && confidence <= S::one()) {
        return Err(Error::invalid(format!(
            "gate confidence {confidence} outside [0, 1]"
        )));
    }

    let desired = match state.mode {
        Mode::Hold if confidence >= config.tau_on => Mode::Act,
        Mode::Act if confidence < config.tau_off => Mode::Hold,
        current => current,
    };

    let wants_transition = desired != state.mode;
    let refractory_open = match state.last_transition_ms {
        None => true,
        Some(last) => t_ms - last >= config.refractory_ms as i64,
    };

    let (next_mode, transitioned, suppressed) = if wants_transition && refractory_open {
        (desired, true, false)
    } else {
        (state.mode, false, wants_transition)
    };

    let next = GateState {
        mode: next_mode,
        last_transition_ms: if transitioned {
            Some(t_ms)
        } else {
            state.last_transition_ms
        },
        last_step_ms: Some(t_ms),
    };
    let event = GateEvent {
        t_ms,
        confidence_in: confidence,
        mode_out: next_mode,
        transitioned,
        suppressed_by_refractory: suppressed,
    };
    Ok((next, event))
}

/// Folds [`step`] over a `(t_ms, confidence)` trace from the initial Hold
/// state. Output length equals input length.
pub fn run_gate<S: Scalar>(
    config: &GateConfig<S>,
    trace: &[(i64, S)],
) -> Result<Vec<GateEvent<S>>> {
    let mut state = GateState::new();
    let mut events = Vec::with_capacity(trace.len());
    for &(t_ms, confidence) in trace {
        let (next, event) = step(&state, config, t_ms, confidence)?;
        state = next;
        events.push(event);
    }
    Ok(events)
}

/// Audit CSV: `t_ms,confidence,mode,transitioned,suppressed`.
pub fn write_events_csv<S: Scalar>(events: &[GateEvent<S>], path: &Path) -> Result<()> {
    atomic_write(path, |out| {
        writeln!(out, "t_ms,confidence,mode,transitioned,suppressed")?;
        for e in events {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.t_ms, e.confidence_in, e.mode_out, e.transitioned, e.suppressed_by_refractory
            )?;
        }
        Ok(())
    })
}
