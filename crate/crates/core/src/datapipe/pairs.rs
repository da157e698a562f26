//! Preference-pair construction from policy samples.

use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::ModelParams;
use crate::error::{Error, Result};
use crate::reward::{PreferencePair, SourceTag};
use crate::rng;
use crate::sampling::{generate_batch, DecodeConfig};
use crate::vocab;

use super::tasks::{gold_response, gold_reward_raw, pad_with_filler, style_score, SyntheticTask, FREEFORM_SCALE};
use super::verify::verify;

/// Picks `(chosen, rejected)` among candidate responses, or declines.
pub trait PairJudge {
    fn source(&self) -> SourceTag;
    fn judge(&self, task: &SyntheticTask, candidates: &[Vec<usize>]) -> Option<(Vec<usize>, Vec<usize>)>;
}

/// Chosen verifies, rejected does not. With `gold_fallback`, a task whose
/// candidates all fail gets the canonical gold response as chosen.
#[derive(Debug, Clone, Copy)]
pub struct VerifierJudge {
    pub gold_fallback: bool,
}

impl PairJudge for VerifierJudge {
    fn source(&self) -> SourceTag {
        SourceTag::Verifier
    }

    fn judge(&self, task: &SyntheticTask, candidates: &[Vec<usize>]) -> Option<(Vec<usize>, Vec<usize>)> {
        if !task.kind.verifiable() {
            return None;
        }
        let ok = |c: &Vec<usize>| verify(task, c).unwrap_or(false);
        let rejected = candidates.iter().find(|c| !ok(c))?;
        let chosen = match candidates.iter().find(|c| ok(c)) {
            Some(c) => c.clone(),
            None if self.gold_fallback => gold_response(task),
            None => return None,
        };
        Some((chosen, rejected.clone()))
    }
}

/// Top versus bottom candidate by the hidden gold reward. Ties are broken by
/// token content so the outcome does not depend on candidate order.
#[derive(Debug, Clone, Copy, Default)]
pub struct GoldRewardJudge;

impl PairJudge for GoldRewardJudge {
    fn source(&self) -> SourceTag {
        SourceTag::SyntheticGold
    }

    fn judge(&self, task: &SyntheticTask, candidates: &[Vec<usize>]) -> Option<(Vec<usize>, Vec<usize>)> {
        let scored: Vec<(f64, &Vec<usize>)> = candidates.iter().map(|c| (gold_reward_raw(task, c), c)).collect();
        let best = scored
            .iter()
            .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| b.1.cmp(a.1)))?;
        let worst = scored
            .iter()
            .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| b.1.cmp(a.1)))?;
        if best.0 <= worst.0 || best.1 == worst.1 {
            return None;
        }
        Some((best.1.clone(), worst.1.clone()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JudgeKind {
    Verifier,
    GoldReward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairBuild {
    pub pairs: Vec<PreferencePair>,
    /// Ids of tasks that produced no valid pair.
    pub skipped: Vec<u64>,
}

/// Samples `k_candidates` responses per task from `policy` and lets `judge`
/// turn them into at most one pair per task.
pub fn build_pairs_with(
    policy: &ModelParams,
    tasks: &[SyntheticTask],
    k_candidates: usize,
    judge: &dyn PairJudge,
    decode: &DecodeConfig,
    seed: u64,
) -> Result<PairBuild> {
    if k_candidates < 2 {
        return Err(crate::error::invalid("k_candidates must be at least 2"));
    }
    let mut pairs = Vec::new();
    let mut skipped = Vec::new();
    for chunk in tasks.chunks(64) {
        let mut prompts = Vec::with_capacity(chunk.len() * k_candidates);
        let mut seeds = Vec::with_capacity(chunk.len() * k_candidates);
        for t in chunk {
            let base = rng::derive_seed(seed, "build_pairs", t.id);
            for j in 0..k_candidates as u64 {
                prompts.push(t.prompt());
                seeds.push(base.wrapping_add(j));
            }
        }
        let responses = generate_batch(policy, &prompts, decode, &seeds)?;
        for (t, cands) in chunk.iter().zip(responses.chunks(k_candidates)) {
            match judge.judge(t, cands) {
                Some((chosen, rejected)) => pairs.push(PreferencePair::new(
                    t.prompt.clone(),
                    t.modal.clone(),
                    chosen,
                    rejected,
                    t.kind.domain(),
                    judge.source(),
                )?),
                None => skipped.push(t.id),
            }
        }
    }
    if pairs.is_empty() {
        return Err(Error::NoPairs {
            skipped: skipped.len(),
        });
    }
    Ok(PairBuild { pairs, skipped })
}

pub fn build_pairs(
    policy: &ModelParams,
    tasks: &[SyntheticTask],
    k_candidates: usize,
    judge: JudgeKind,
    decode: &DecodeConfig,
    seed: u64,
) -> Result<PairBuild> {
    match judge {
        JudgeKind::Verifier => build_pairs_with(
            policy,
            tasks,
            k_candidates,
            &VerifierJudge { gold_fallback: true },
            decode,
            seed,
        ),
        JudgeKind::GoldReward => build_pairs_with(policy, tasks, k_candidates, &GoldRewardJudge, decode, seed),
    }
}

/// Freeform pairs whose gold margin exceeds `min_margin`. A `verbose_fraction`
/// of them get filler appended to the chosen side until it is more than
/// twice as long as the rejected side, mimicking a judge that favors length.
pub fn gold_margin_pairs(
    tasks: &[SyntheticTask],
    n: usize,
    min_margin: f64,
    verbose_fraction: f64,
    seed: u64,
) -> Result<Vec<PreferencePair>> {
    let free: Vec<&SyntheticTask> = tasks.iter().filter(|t| !t.kind.verifiable()).collect();
    if free.is_empty() {
        return Err(Error::EmptyInput("freeform tasks"));
    }
    if !(min_margin < 2.0 * FREEFORM_SCALE) {
        return Err(crate::error::invalid("min_margin exceeds the gold reward range"));
    }
    let mut out = Vec::with_capacity(n);
    let mut r = rng::substream(seed, "gold_margin_pairs", 0);
    let draw = |r: &mut rng::StreamRng| {
        let len = r.random_range(1..=4);
        let mut v: Vec<usize> = (0..len)
            .map(|_| vocab::word(r.random_range(0..vocab::NUM_WORDS)))
            .collect();
        v.push(vocab::STOP);
        v
    };
    let mut i = 0;
    while out.len() < n {
        let task = free[i % free.len()];
        i += 1;
        let a = draw(&mut r);
        let b = draw(&mut r);
        let margin = FREEFORM_SCALE * (style_score(&a) - style_score(&b));
        if margin.abs() <= min_margin {
            continue;
        }
        let (mut chosen, rejected) = if margin > 0.0 { (a, b) } else { (b, a) };
        if r.random::<f64>() < verbose_fraction {
            let extra = (2 * rejected.len() + 1).saturating_sub(chosen.len());
            chosen = pad_with_filler(&chosen, extra.max(1));
        }
        out.push(PreferencePair::new(
            task.prompt.clone(),
            task.modal.clone(),
            chosen,
            rejected,
            task.kind.domain(),
            SourceTag::SyntheticGold,
        )?);
    }
    Ok(out)
}
