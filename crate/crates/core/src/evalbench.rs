//! Pairwise-accuracy benchmark reports and the length-bias probe.

use alloc::string::String;
use alloc::vec::Vec;

use crate::autodiff::ModelParams;
use crate::datapipe::pad_with_filler;
use crate::error::{invalid, Error, Result};
use crate::model::{self, Pooling, SequenceSample};
use crate::reward::{pair_scores, PreferencePair};

/// Named categories of preference pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSet {
    categories: Vec<(String, Vec<PreferencePair>)>,
}

impl BenchmarkSet {
    pub fn new(categories: Vec<(String, Vec<PreferencePair>)>) -> Result<Self> {
        if categories.is_empty() {
            return Err(Error::EmptyInput("benchmark"));
        }
        for (i, (name, pairs)) in categories.iter().enumerate() {
            if pairs.is_empty() {
                return Err(invalid(alloc::format!("category `{name}` is empty")));
            }
            if categories[..i].iter().any(|(n, _)| n == name) {
                return Err(invalid(alloc::format!("duplicate category `{name}`")));
            }
        }
        Ok(Self { categories })
    }

    pub fn categories(&self) -> &[(String, Vec<PreferencePair>)] {
        &self.categories
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryResult {
    pub name: String,
    pub pairs: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub mean_chosen_len: f64,
    pub mean_rejected_len: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub categories: Vec<CategoryResult>,
    pub overall_acc: f64,
    pub macro_acc: f64,
}

/// Unweighted mean of per-category accuracies.
pub fn macro_accuracy(per_category: &[f64]) -> Result<f64> {
    if per_category.is_empty() {
        return Err(Error::EmptyInput("macro_accuracy"));
    }
    Ok(per_category.iter().sum::<f64>() / per_category.len() as f64)
}

/// Aggregates `(category name, per-pair correctness, lengths)` into a report.
pub fn report_from_outcomes(outcomes: &[(String, Vec<bool>, f64, f64)]) -> Result<BenchReport> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("benchmark"));
    }
    let mut categories = Vec::with_capacity(outcomes.len());
    let (mut total, mut correct_all) = (0usize, 0usize);
    for (name, flags, lw, ll) in outcomes {
        if flags.is_empty() {
            return Err(invalid(alloc::format!("category `{name}` is empty")));
        }
        let correct = flags.iter().filter(|&&c| c).count();
        total += flags.len();
        correct_all += correct;
        categories.push(CategoryResult {
            name: name.clone(),
            pairs: flags.len(),
            correct,
            accuracy: correct as f64 / flags.len() as f64,
            mean_chosen_len: *lw,
            mean_rejected_len: *ll,
        });
    }
    let accs: Vec<f64> = categories.iter().map(|c| c.accuracy).collect();
    Ok(BenchReport {
        overall_acc: correct_all as f64 / total as f64,
        macro_acc: macro_accuracy(&accs)?,
        categories,
    })
}

pub fn evaluate_rm(rm: &ModelParams, bench: &BenchmarkSet, pooling: Pooling) -> Result<BenchReport> {
    let mut outcomes = Vec::with_capacity(bench.categories.len());
    for (name, pairs) in &bench.categories {
        let flags: Vec<bool> = pair_scores(rm, pairs, pooling)?
            .into_iter()
            .map(|(w, l)| w > l)
            .collect();
        let n = pairs.len() as f64;
        let lw = pairs.iter().map(|p| p.chosen.len() as f64).sum::<f64>() / n;
        let ll = pairs.iter().map(|p| p.rejected.len() as f64).sum::<f64>() / n;
        outcomes.push((name.clone(), flags, lw, ll));
    }
    report_from_outcomes(&outcomes)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LengthBiasReport {
    pub pairs: usize,
    pub padding: usize,
    /// Mean of `r(x, padded y_w) - r(x, y_w)`.
    pub mean_delta: f64,
    /// Fraction of pairs whose pairwise decision changes under padding.
    pub flip_fraction: f64,
}

/// Scores each chosen response with `padding` filler tokens inserted before
/// its stop token and compares against the unpadded score.
pub fn length_bias_probe(
    rm: &ModelParams,
    pairs: &[PreferencePair],
    padding: usize,
    pooling: Pooling,
) -> Result<LengthBiasReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("length_bias_probe"));
    }
    let base = pair_scores(rm, pairs, pooling)?;
    let (mut delta_sum, mut flips) = (0.0, 0usize);
    for (chunk, base) in pairs.chunks(256).zip(base.chunks(256)) {
        let padded: Vec<SequenceSample> = chunk
            .iter()
            .map(|p| SequenceSample::new(p.prompt.clone(), pad_with_filler(&p.chosen, padding), p.modal.clone()))
            .collect();
        let scores = model::reward_scores(rm, &padded, pooling)?;
        for (&s, &(w, l)) in scores.iter().zip(base) {
            delta_sum += s - w;
            if (s > l) != (w > l) {
                flips += 1;
            }
        }
    }
    Ok(LengthBiasReport {
        pairs: pairs.len(),
        padding,
        mean_delta: delta_sum / pairs.len() as f64,
        flip_fraction: flips as f64 / pairs.len() as f64,
    })
}
