//! Shared dataset types: logit records grouped into time-ordered streams,
//! plus splitting and (de)serialization.

mod io;

pub use io::{atomic_write, load_dataset, save_dataset, FileFormat};

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;

/// Which split a dataset belongs to. Not persisted by the file formats;
/// loading always yields [`SplitTag::Unsplit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Val,
    Test,
    Unsplit,
}

/// One prediction window: a logit vector with its ground-truth label,
/// stamped with the stream it came from and milliseconds since stream start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitRecord<S> {
    pub stream_id: String,
    pub t_ms: i64,
    pub logits: Vec<S>,
    pub label: usize,
}

impl<S: Scalar> LogitRecord<S> {
    /// Validates the per-record invariants against a class count `k`.
    pub fn validate(&self, k: usize) -> Result<()> {
        if self.logits.len() != k {
            return Err(Error::Record {
                stream_id: self.stream_id.clone(),
                t_ms: self.t_ms,
                msg: format!("has {} logits, expected {k}", self.logits.len()),
            });
        }
        if let Some((i, &bad)) = self.logits.iter().enumerate().find(|(_, l)| !l.is_finite()) {
            return Err(Error::Record {
                stream_id: self.stream_id.clone(),
                t_ms: self.t_ms,
                msg: format!("logit_{i} = {bad} is not finite"),
            });
        }
        if self.label >= k {
            return Err(Error::Record {
                stream_id: self.stream_id.clone(),
                t_ms: self.t_ms,
                msg: format!("label {} out of range [0, {k})", self.label),
            });
        }
        Ok(())
    }
}

/// Same shape as [`LogitRecord`] but carrying a probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbRecord<S> {
    pub stream_id: String,
    pub t_ms: i64,
    pub probs: Vec<S>,
    pub label: usize,
}

impl<S: Scalar> ProbRecord<S> {
    pub fn new(stream_id: String, t_ms: i64, probs: Vec<S>, label: usize) -> Result<Self> {
        crate::modelmath::check_distribution(&probs, 1e-9)?;
        for (i, &p) in probs.iter().enumerate() {
            if p > S::one() {
                return Err(Error::invalid(format!("prob[{i}] = {p} exceeds 1")));
            }
        }
        if label >= probs.len() {
            return Err(Error::invalid(format!(
                "label {label} out of range [0, {})",
                probs.len()
            )));
        }
        Ok(Self {
            stream_id,
            t_ms,
            probs,
            label,
        })
    }
}

/// An ordered collection of validated records sharing one class count.
///
/// Immutable after construction; within each stream, `t_ms` is strictly
/// increasing in record order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    k: usize,
    records: Vec<LogitRecord<S>>,
    split_tag: SplitTag,
}

impl<S: Scalar> Dataset<S> {
    /// Validates all invariants: shared K ≥ 2, finite logits, labels in
    /// range, and strictly increasing `t_ms` within each stream.
    pub fn new(k: usize, records: Vec<LogitRecord<S>>, split_tag: SplitTag) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("class count {k} must be >= 2")));
        }
        let mut last_t: HashMap<&str, i64> = HashMap::new();
        for r in &records {
            r.validate(k)?;
            if let Some(&prev) = last_t.get(r.stream_id.as_str()) {
                if r.t_ms <= prev {
                    return Err(Error::Record {
                        stream_id: r.stream_id.clone(),
                        t_ms: r.t_ms,
                        msg: format!("t_ms not strictly increasing (previous {prev})"),
                    });
                }
            }
            last_t.insert(r.stream_id.as_str(), r.t_ms);
        }
        Ok(Self {
            k,
            records,
            split_tag,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn records(&self) -> &[LogitRecord<S>] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split_tag(&self) -> SplitTag {
        self.split_tag
    }

    /// Distinct stream ids in first-appearance order.
    pub fn stream_ids(&self) -> Vec<&str> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for r in &self.records {
            if seen.insert(r.stream_id.as_str(), ()).is_none() {
                out.push(r.stream_id.as_str());
            }
        }
        out
    }

    /// Groups records into per-stream, time-ordered sequences with the
    /// nominal 40 ms tick.
    pub fn streams(&self) -> Vec<StreamSequence<S>> {
        let ids = self.stream_ids();
        let mut by_id: HashMap<&str, Vec<LogitRecord<S>>> = HashMap::new();
        for r in &self.records {
            by_id
                .entry(r.stream_id.as_str())
                .or_default()
                .push(r.clone());
        }
        ids.into_iter()
            .map(|id| StreamSequence {
                stream_id: id.to_string(),
                records: by_id.remove(id).unwrap_or_default(),
                tick_ms: DEFAULT_TICK_MS,
            })
            .collect()
    }

    /// Equality on the persisted content (class count and records); the
    /// split tag is in-memory provenance only.
    pub fn same_data(&self, other: &Self) -> bool {
        self.k == other.k && self.records == other.records
    }

    fn with_tag(k: usize, records: Vec<LogitRecord<S>>, tag: SplitTag) -> Self {
        // Records taken from an already validated dataset.
        Self {
            k,
            records,
            split_tag: tag,
        }
    }
}

/// Nominal inter-record period: one 25 Hz sensing cycle.
pub const DEFAULT_TICK_MS: i64 = 40;

/// A single stream's time-ordered records.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSequence<S> {
    pub stream_id: String,
    pub records: Vec<LogitRecord<S>>,
    /// Nominal inter-record period; consumers replay actual `t_ms` values,
    /// so irregular files are fine.
    pub tick_ms: i64,
}

/// Partitions a dataset into train/val/test by whole stream.
///
/// Streams play the role of subjects: no stream straddles two splits. The
/// assignment is deterministic for a given seed. Each nonzero fraction is
/// guaranteed at least one stream.
pub fn split_by_stream<S: Scalar>(
    ds: &Dataset<S>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(Dataset<S>, Dataset<S>, Dataset<S>)> {
    let (ft, fv, fe) = fractions;
    for f in [ft, fv, fe] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::invalid(format!("fraction {f} must be in [0, 1]")));
        }
    }
    if (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "fractions sum to {}, expected 1",
            ft + fv + fe
        )));
    }

    let mut ids: Vec<String> = ds.stream_ids().iter().map(|s| s.to_string()).collect();
    let nonzero = [ft, fv, fe].iter().filter(|&&f| f > 0.0).count();
    if ids.len() < nonzero {
        return Err(Error::TooFewStreams {
            streams: ids.len(),
            nonzero_fractions: nonzero,
        });
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let counts = allocate_counts(ids.len(), [ft, fv, fe]);
    let mut buckets: [Vec<&str>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let mut cursor = 0;
    for (b, &n) in counts.iter().enumerate() {
        for id in &ids[cursor..cursor + n] {
            buckets[b].push(id.as_str());
        }
        cursor += n;
    }

    let take = |bucket: &[&str], tag: SplitTag| {
        let wanted: HashMap<&str, ()> = bucket.iter().map(|&s| (s, ())).collect();
        let records: Vec<LogitRecord<S>> = ds
            .records
            .iter()
            .filter(|r| wanted.contains_key(r.stream_id.as_str()))
            .cloned()
            .collect();
        Dataset::with_tag(ds.k, records, tag)
    };

    Ok((
        take(&buckets[0], SplitTag::Train),
        take(&buckets[1], SplitTag::Val),
        take(&buckets[2], SplitTag::Test),
    ))
}

/// Largest-remainder apportionment of `n` streams across three fractions,
/// then a fix-up so every nonzero fraction receives at least one stream.
fn allocate_counts(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    let mut remainders = [0.0f64; 3];
    let mut assigned = 0;
    for i in 0..3 {
        let target = fractions[i] * n as f64;
        counts[i] = target.floor() as usize;
        remainders[i] = target - target.floor();
        assigned += counts[i];
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        remainders[b]
            .partial_cmp(&remainders[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut leftover = n - assigned;
    for &i in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        counts[i] += 1;
        leftover -= 1;
    }
    // Every nonzero fraction gets at least one stream, at the expense of
    // the currently largest bucket.
    for i in 0..3 {
        if fractions[i] > 0.0 && counts[i] == 0 {
            let donor = (0..3).max_by_key(|&j| counts[j]).expect("three buckets");
            counts[donor] -= 1;
            counts[i] += 1;
        }
    }
    counts
}
