//! Reward-score data cleaning.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::ModelParams;
use crate::error::{invalid, Error, Result};
use crate::model::{self, Pooling, SequenceSample};
use crate::rng;
use crate::vocab::{DELIM, STOP};

use super::tasks::{count_observation, gold_response, GoldAnswer, SyntheticTask};
use super::verify::answer_span;

#[derive(Debug, Clone, PartialEq)]
pub struct CleanSample {
    pub id: u64,
    pub sample: SequenceSample,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    /// Flag the lowest `p` percent (`0 ≤ p ≤ 100`).
    Percentile(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub p05: f64,
    pub p25: f64,
    pub p75: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleaningReport {
    /// `(id, rm_score)` in input order.
    pub scores: Vec<(u64, f64)>,
    /// Ids with a score strictly below `threshold`, in input order.
    pub flagged: Vec<u64>,
    pub threshold: f64,
    pub threshold_spec: Threshold,
    pub summary: ScoreSummary,
}

/// Linear-interpolated quantile of sorted data, `q ∈ [0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = libm::ceil(pos) as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize(scores: &[f64]) -> ScoreSummary {
    let mut s = scores.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ScoreSummary {
        count: s.len(),
        min: s[0],
        max: s[s.len() - 1],
        mean: s.iter().sum::<f64>() / s.len() as f64,
        median: quantile(&s, 0.5),
        p05: quantile(&s, 0.05),
        p25: quantile(&s, 0.25),
        p75: quantile(&s, 0.75),
        p95: quantile(&s, 0.95),
    }
}

/// Builds the report from precomputed scores (one per sample, same order).
pub fn report_from_scores(ids: &[u64], scores: &[f64], threshold: Threshold) -> Result<CleaningReport> {
    if ids.is_empty() {
        return Err(Error::EmptyInput("clean_dataset"));
    }
    if ids.len() != scores.len() {
        return Err(Error::LengthMismatch {
            what: "ids vs scores",
            left: ids.len(),
            right: scores.len(),
        });
    }
    let cut = match threshold {
        Threshold::Absolute(t) => {
            if t.is_nan() {
                return Err(invalid("threshold is NaN"));
            }
            t
        }
        Threshold::Percentile(p) => {
            if !(0.0..=100.0).contains(&p) {
                return Err(invalid("percentile must lie in [0, 100]"));
            }
            // k lowest get flagged; ties at the cut are kept
            let k = libm::floor(p / 100.0 * ids.len() as f64 + 1e-9) as usize;
            let mut s = scores.to_vec();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if k >= s.len() {
                f64::INFINITY
            } else {
                s[k]
            }
        }
    };
    let flagged = ids
        .iter()
        .zip(scores)
        .filter(|(_, &s)| s < cut)
        .map(|(&id, _)| id)
        .collect();
    Ok(CleaningReport {
        scores: ids.iter().copied().zip(scores.iter().copied()).collect(),
        flagged,
        threshold: cut,
        threshold_spec: threshold,
        summary: summarize(scores),
    })
}

pub fn score_samples(rm: &ModelParams, samples: &[CleanSample], pooling: Pooling) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(256) {
        let seqs: Vec<SequenceSample> = chunk.iter().map(|c| c.sample.clone()).collect();
        out.extend(model::reward_scores(rm, &seqs, pooling)?);
    }
    Ok(out)
}

/// Scores every sample with `rm` and flags those below the threshold.
pub fn clean_dataset(rm: &ModelParams, samples: &[CleanSample], threshold: Threshold, pooling: Pooling) -> Result<CleaningReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("clean_dataset"));
    }
    let scores = score_samples(rm, samples, pooling)?;
    let ids: Vec<u64> = samples.iter().map(|s| s.id).collect();
    report_from_scores(&ids, &scores, threshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Corruption {
    /// Answer taken from a task with a different gold answer.
    ShuffledAnswer,
    /// Delimiter followed by nothing.
    EmptyAnswer,
    /// Observation replaced by one encoding a different count.
    MismatchedModal,
}

/// A clean QA corpus from verifiable answer tasks, with `fraction` of the
/// samples corrupted. Returns the corpus and the corrupted ids.
pub fn corpus_with_corruption(
    tasks: &[SyntheticTask],
    fraction: f64,
    modal_dim: usize,
    seed: u64,
) -> Result<(Vec<CleanSample>, Vec<(u64, Corruption)>)> {
    let usable: Vec<&SyntheticTask> = tasks
        .iter()
        .filter(|t| matches!(t.gold, GoldAnswer::Tokens(_)))
        .collect();
    if usable.len() < 2 {
        return Err(Error::EmptyInput("answer tasks"));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(invalid("fraction must lie in [0, 1]"));
    }
    let mut r = rng::substream(seed, "corrupt", 0);
    let mut samples: Vec<CleanSample> = usable
        .iter()
        .map(|t| CleanSample {
            id: t.id,
            sample: t.prompt().with_response(gold_response(t)),
        })
        .collect();
    let originals: Vec<Vec<usize>> = samples.iter().map(|s| s.sample.response.clone()).collect();
    let n_bad = libm::round(fraction * samples.len() as f64) as usize;
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut r);
    let mut bad = Vec::with_capacity(n_bad);
    for (j, &i) in idx[..n_bad].iter().enumerate() {
        let task = usable[i];
        let has_modal = task.modal.is_some();
        let kind = match j % 3 {
            2 if has_modal => Corruption::MismatchedModal,
            0 | 2 => Corruption::ShuffledAnswer,
            _ => Corruption::EmptyAnswer,
        };
        let own = answer_span(&samples[i].sample.response).unwrap().to_vec();
        match kind {
            Corruption::ShuffledAnswer => {
                // first other sample, in shuffled order, with a different answer
                let donor = idx
                    .iter()
                    .map(|&d| &originals[d])
                    .find(|resp| answer_span(resp).unwrap() != own.as_slice())
                    .cloned()
                    .ok_or(Error::EmptyInput("distinct answers"))?;
                samples[i].sample.response = donor;
            }
            Corruption::EmptyAnswer => {
                samples[i].sample.response = alloc::vec![DELIM, STOP];
            }
            Corruption::MismatchedModal => {
                let c = own[0];
                let mut other = r.random_range(0..=super::tasks::MAX_COUNT);
                if other == c {
                    other = (other + 1) % (super::tasks::MAX_COUNT + 1);
                }
                samples[i].sample.modal = Some(count_observation(other, modal_dim, &mut r));
            }
        }
        bad.push((task.id, kind));
    }
    Ok((samples, bad))
}
