//! Synthetic logit-stream generator with a known calibration oracle.
//!
//! Labels form persistent segments (geometric run lengths) drawn from a
//! long-tailed class marginal. Within a segment, the emitted predictions are
//! organized into shorter geometric "prediction runs": each run draws a
//! target top-class probability `c` from a Beta distribution with mean
//! `base_accuracy`, a correctness coin with success probability `c`, and a
//! distractor class. Every tick of the run emits the log of the intended
//! distribution (probability `c` on the true label if the run is correct,
//! else on the distractor; the remainder uniform) plus mild i.i.d. logit
//! noise, all multiplied by the overconfidence scale `s`.
//!
//! Run-level persistence matters: a model that is wrong tends to stay wrong
//! on the same class for a few windows. Making correctness i.i.d. per tick
//! instead lets downstream exponential smoothing majority-vote independent
//! draws into a far better selective predictor than the per-window scores
//! support, which inverts the closed-loop comparison this generator exists
//! to exercise.
//!
//! Oracle guarantees:
//! - at `s = 1` the emitted confidences are calibrated by construction
//!   (`P(correct | c) = c` exactly, so ECE → 0 as the run count grows);
//! - for `s > 1` the unique temperature restoring calibration is `T = s`;
//! - top-1 accuracy converges to `base_accuracy`.
//!
//! Generation is deterministic per seed, with per-stream substreams derived
//! from `(seed, stream_index)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{Dataset, LogitRecord, SplitTag, DEFAULT_TICK_MS};
use crate::error::{Error, Result};
use crate::num::Scalar;

/// Generator configuration. Defaults mirror the 21-verb, 25 Hz setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Class count (K ≥ 2).
    pub k: usize,
    pub n_streams: usize,
    pub ticks_per_stream: usize,
    /// Target top-1 accuracy, strictly between 1/K and 1.
    pub base_accuracy: f64,
    /// Logit multiplier s ≥ 1; s = 1 is calibrated, s > 1 overconfident.
    pub overconfidence_scale: f64,
    /// Expected run length of one label segment, in ticks.
    pub label_persistence: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            k: 21,
            n_streams: 8,
            ticks_per_stream: 1000,
            base_accuracy: 0.4,
            overconfidence_scale: 1.0,
            label_persistence: 25.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid(format!("k = {} must be >= 2", self.k)));
        }
        if self.n_streams == 0 || self.ticks_per_stream == 0 {
            return Err(Error::invalid("n_streams and ticks_per_stream must be > 0"));
        }
        let floor = 1.0 / self.k as f64;
        if !(self.base_accuracy > floor && self.base_accuracy < 1.0) {
            return Err(Error::invalid(format!(
                "base_accuracy = {} must lie in (1/K = {floor:.4}, 1)",
                self.base_accuracy
            )));
        }
        if self.overconfidence_scale < 1.0 {
            return Err(Error::invalid(format!(
                "overconfidence_scale = {} must be >= 1",
                self.overconfidence_scale
            )));
        }
        if self.label_persistence < 1.0 {
            return Err(Error::invalid(format!(
                "label_persistence = {} must be >= 1",
                self.label_persistence
            )));
        }
        Ok(())
    }
}

/// Standard deviation of the i.i.d. logit noise applied before scaling.
const LOGIT_NOISE_SIGMA: f64 = 0.1;
/// Concentration of the Beta distribution the per-run confidence is drawn
/// from; the mean is pinned to `base_accuracy`.
const CONFIDENCE_CONCENTRATION: f64 = 5.0;
/// Expected length of one prediction run in ticks: twice the memory of the
/// default α = 0.2 smoother, so smoothing cannot average out independent
/// evidence within a run.
const PREDICTION_RUN_TICKS: f64 = 10.0;

/// Generates a synthetic dataset per the module-level construction.
pub fn generate<S: Scalar>(cfg: &SynthConfig) -> Result<Dataset<S>> {
    cfg.validate()?;
    let marginal = long_tail_marginal(cfg.k);
    let beta = Beta::new(
        CONFIDENCE_CONCENTRATION * cfg.base_accuracy,
        CONFIDENCE_CONCENTRATION * (1.0 - cfg.base_accuracy),
    )
    .expect("valid beta parameters");
    let noise = Normal::new(0.0, LOGIT_NOISE_SIGMA).expect("valid normal parameters");

    let mut records = Vec::with_capacity(cfg.n_streams * cfg.ticks_per_stream);
    for stream_idx in 0..cfg.n_streams {
        let mut rng = ChaCha20Rng::seed_from_u64(mix_seed(cfg.seed, stream_idx as u64));
        let stream_id = format!("synth-{:04}", stream_idx);
        let label_continue_p = 1.0 - 1.0 / cfg.label_persistence;
        let run_continue_p = 1.0 - 1.0 / PREDICTION_RUN_TICKS.min(cfg.label_persistence);
        // Intended top-class probability stays strictly above 1/K so the
        // peaked class is the true argmax of the intended distribution.
        let conf_floor = 1.0 / cfg.k as f64 + 1e-3;

        let mut label = sample_marginal(&marginal, &mut rng);
        // Current prediction run: (top-class probability, peaked class).
        let mut run: Option<(f64, usize)> = None;
        for tick in 0..cfg.ticks_per_stream {
            if tick > 0 && !rng.random_bool(label_continue_p) {
                label = sample_marginal(&marginal, &mut rng);
                run = None;
            }
            if run.is_some() && !rng.random_bool(run_continue_p) {
                run = None;
            }
            let (c, peak) = *run.get_or_insert_with(|| {
                let c = beta.sample(&mut rng).clamp(conf_floor, 0.9999);
                let peak = if rng.random_bool(c) {
                    label
                } else {
                    // A distractor class other than the label.
                    let mut d = rng.random_range(0..cfg.k - 1);
                    if d >= label {
                        d += 1;
                    }
                    d
                };
                (c, peak)
            });

            let rest = (1.0 - c) / (cfg.k - 1) as f64;
            let logits: Vec<S> = (0..cfg.k)
                .map(|class| {
                    let p = if class == peak { c } else { rest };
                    let raw = p.ln() + noise.sample(&mut rng);
                    S::from_f64_lossy(raw * cfg.overconfidence_scale)
                })
                .collect();

            records.push(LogitRecord {
                stream_id: stream_id.clone(),
                t_ms: tick as i64 * DEFAULT_TICK_MS,
                logits,
                label,
            });
        }
    }
    Dataset::new(cfg.k, records, SplitTag::Unsplit)
}

/// The canonical overconfident fixture: K = 21, base accuracy 0.40, scale 4,
/// 120k ticks. Identity-map ECE lands near 0.55 (≥ 0.3 guaranteed by
/// construction at this size) and a fitted temperature restores calibration.
pub fn generate_uncalibrated_fixture<S: Scalar>(seed: u64) -> Dataset<S> {
    let cfg = uncalibrated_fixture_config(seed);
    generate(&cfg).expect("fixture config is valid")
}

/// Parameters behind [`generate_uncalibrated_fixture`], exposed so runs can
/// record provenance.
pub fn uncalibrated_fixture_config(seed: u64) -> SynthConfig {
    SynthConfig {
        k: 21,
        n_streams: 48,
        ticks_per_stream: 2500,
        base_accuracy: 0.40,
        overconfidence_scale: 4.0,
        label_persistence: 25.0,
        seed,
    }
}

/// Zipf-like class marginal: p(class at popularity rank r) ∝ 1/(r+1).
fn long_tail_marginal(k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|r| 1.0 / (r + 1) as f64).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / sum).collect()
}

fn sample_marginal(marginal: &[f64], rng: &mut ChaCha20Rng) -> usize {
    let u: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (class, &p) in marginal.iter().enumerate() {
        acc += p;
        if u < acc {
            return class;
        }
    }
    marginal.len() - 1
}

/// SplitMix64-style mixing of (seed, stream index) into a substream seed.
fn mix_seed(seed: u64, stream_idx: u64) -> u64 {
    let mut z = seed ^ stream_idx.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
