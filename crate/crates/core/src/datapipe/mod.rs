//! Synthetic tasks, verifiers, preference-pair construction, length
//! filtering, and reward-score data cleaning.

mod clean;
mod pairs;
mod tasks;
mod verify;

use alloc::vec::Vec;

pub use clean::{
    clean_dataset, corpus_with_corruption, quantile, report_from_scores, score_samples, CleanSample,
    CleaningReport, Corruption, ScoreSummary, Threshold,
};
pub use pairs::{
    build_pairs, build_pairs_with, gold_margin_pairs, GoldRewardJudge, JudgeKind, PairBuild, PairJudge,
    VerifierJudge,
};
pub use tasks::{
    count_observation, demonstration, generate_tasks, gold_response, gold_reward, gold_reward_raw, make_task,
    pad_with_filler, style_score, style_weight, words_by_style, Constraint, GoldAnswer, SyntheticTask,
    TaskKind, TaskMix, CORRECTNESS_BONUS, FREEFORM_SCALE, GOLD_REWARD_V1, MALFORMED_FRACTION, MAX_COUNT,
    MAX_EXACT_LEN, MAX_OPERAND,
};
pub use verify::{answer_span, check_constraint, verify};

use crate::error::{invalid, Result};
use crate::reward::PreferencePair;

/// Default chosen/rejected length ratio above which a pair is dropped.
pub const DEFAULT_LENGTH_RATIO_MAX: f64 = 2.0;

/// Splits pairs into `(kept, removed)`, removing those whose chosen response
/// is longer than the rejected one by more than a factor `ratio_max`. Pairs
/// whose chosen side is not longer are always kept. Order is preserved.
pub fn length_filter(pairs: &[PreferencePair], ratio_max: f64) -> Result<(Vec<PreferencePair>, Vec<PreferencePair>)> {
    if !(ratio_max > 0.0) {
        return Err(invalid("ratio_max must be positive"));
    }
    let (removed, kept): (Vec<_>, Vec<_>) = pairs
        .iter()
        .cloned()
        .partition(|p| p.chosen.len() > p.rejected.len() && p.chosen.len() as f64 / p.rejected.len() as f64 > ratio_max);
    Ok((kept, removed))
}
