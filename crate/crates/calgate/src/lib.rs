//! calgate: confidence calibration, selective prediction, and a hysteretic
//! Act/Hold safety gate for classifier logit streams.
//!
//! The pipeline turns raw logits into calibrated top-class confidences
//! (temperature, Platt, or isotonic maps fitted on a validation set),
//! quantifies reliability (ECE / NLL / Brier / top-k with reliability-diagram
//! bins), sweeps an act threshold τ against the coverage / act-only-precision
//! trade-off with the AOP ≥ τ − ε bound check, and replays streams through a
//! smoothed, top-k-filtered, hysteretic gate in a closed-loop simulation.
//! A synthetic generator with a known calibration oracle stands in for a
//! trained model so every claim is testable at desk scale.
//!
//! All numeric code is generic over [`num::Scalar`] (`f32` or `f64`); the
//! crate root exports `f64` aliases for the common case.

pub mod calibration;
pub mod datamodel;
mod error;
pub mod gate;
pub mod manifest;
pub mod metrics;
pub mod modelmath;
pub mod num;
pub mod opt;
pub mod selective;
pub mod simulator;
pub mod synth;

pub use error::{Error, Result};

/// Default scalar type for the CLI and most callers.
pub type Real = f64;

pub type LogitRecord = datamodel::LogitRecord<Real>;
pub type ProbRecord = datamodel::ProbRecord<Real>;
pub type Dataset = datamodel::Dataset<Real>;
pub type StreamSequence = datamodel::StreamSequence<Real>;
pub type CalibrationMap = calibration::CalibrationMap<Real>;
pub type CalibratedPrediction = calibration::CalibratedPrediction<Real>;
pub type ReliabilityReport = metrics::ReliabilityReport<Real>;
pub type SweepCurve = selective::SweepCurve<Real>;
pub type SweepPoint = selective::SweepPoint<Real>;
pub type GateConfig = gate::GateConfig<Real>;
pub type GateEvent = gate::GateEvent<Real>;
pub type SimConfig = simulator::SimConfig<Real>;
pub type SimResult = simulator::SimResult<Real>;
