//! Ancestral sampling and best-of-N selection.

use alloc::vec::Vec;

use rand::Rng;

use crate::autodiff::ModelParams;
use crate::error::{invalid, Result};
use crate::model::{self, Pooling, Prompt, SequenceSample};
use crate::rng::{self, StreamRng};
use crate::vocab;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    /// Softmax temperature; `0.0` selects greedy argmax decoding.
    pub temperature: f64,
    pub max_len: usize,
    pub stop_token: Option<usize>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            max_len: 8,
            stop_token: Some(vocab::STOP),
        }
    }
}

impl DecodeConfig {
    pub fn greedy(self) -> Self {
        Self {
            temperature: 0.0,
            ..self
        }
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(invalid("temperature must be positive (or 0 for greedy)"));
        }
        if self.max_len == 0 {
            return Err(invalid("max_len must be at least 1"));
        }
        Ok(())
    }
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `softmax(logits / temperature)`.
pub fn probabilities(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits
        .iter()
        .map(|&l| libm::exp((l - max) / temperature))
        .collect();
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    p
}

/// Draws one index from `softmax(logits / temperature)` by inverse CDF.
pub fn sample_categorical(logits: &[f64], temperature: f64, rng: &mut StreamRng) -> usize {
    if temperature == 0.0 {
        return argmax(logits);
    }
    let p = probabilities(logits, temperature);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// One response per prompt; prompt `i` draws from its own stream seeded by `seeds[i]`.
/// Every sequence is identical to what [`generate`] returns for the same seed.
pub fn generate_batch(
    policy: &ModelParams,
    prompts: &[Prompt],
    decode: &DecodeConfig,
    seeds: &[u64],
) -> Result<Vec<Vec<usize>>> {
    decode.validate()?;
    if prompts.len() != seeds.len() {
        return Err(crate::Error::LengthMismatch {
            what: "prompts vs seeds",
            left: prompts.len(),
            right: seeds.len(),
        });
    }
    let mut rngs: Vec<StreamRng> = seeds.iter().map(|&s| rng::from_seed(s)).collect();
    let mut responses: Vec<Vec<usize>> = alloc::vec![Vec::new(); prompts.len()];
    let mut active: Vec<usize> = (0..prompts.len()).collect();
    for _ in 0..decode.max_len {
        if active.is_empty() {
            break;
        }
        let samples: Vec<SequenceSample> = active
            .iter()
            .map(|&i| prompts[i].with_response(responses[i].clone()))
            .collect();
        let logits = model::next_token_logits(policy, &samples)?;
        let mut still = Vec::with_capacity(active.len());
        for (row, &i) in logits.iter().zip(&active) {
            let tok = sample_categorical(row, decode.temperature, &mut rngs[i]);
            responses[i].push(tok);
            if Some(tok) != decode.stop_token {
                still.push(i);
            }
        }
        active = still;
    }
    Ok(responses)
}

pub fn generate(policy: &ModelParams, prompt: &Prompt, decode: &DecodeConfig, seed: u64) -> Result<Vec<usize>> {
    Ok(generate_batch(policy, core::slice::from_ref(prompt), decode, &[seed])?.remove(0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub response: Vec<usize>,
    pub rm_score: f64,
    pub seed: u64,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestOfN {
    pub winner: usize,
    pub candidates: Vec<ScoredCandidate>,
}

impl BestOfN {
    pub fn best(&self) -> &ScoredCandidate {
        &self.candidates[self.winner]
    }
}

/// Index of the highest score; ties go to the lowest index.
pub fn select_best(scores: &[f64]) -> usize {
    argmax(scores)
}

/// `n` generations with seeds `seed, seed + 1, …`, scored by `rm`; the best wins.
pub fn best_of_n(
    policy: &ModelParams,
    rm: &ModelParams,
    prompt: &Prompt,
    n: usize,
    decode: &DecodeConfig,
    seed: u64,
    pooling: Pooling,
) -> Result<BestOfN> {
    if n == 0 {
        return Err(invalid("best_of_n needs n >= 1"));
    }
    let seeds: Vec<u64> = (0..n as u64).map(|i| seed.wrapping_add(i)).collect();
    let prompts = alloc::vec![prompt.clone(); n];
    let responses = generate_batch(policy, &prompts, decode, &seeds)?;
    let samples: Vec<SequenceSample> = responses.iter().map(|r| prompt.with_response(r.clone())).collect();
    let scores = model::reward_scores(rm, &samples, pooling)?;
    let candidates: Vec<ScoredCandidate> = responses
        .into_iter()
        .zip(&scores)
        .zip(seeds)
        .map(|((response, &rm_score), seed)| ScoredCandidate {
            len: response.len(),
            response,
            rm_score,
            seed,
        })
        .collect();
    Ok(BestOfN {
        winner: select_best(&scores),
        candidates,
    })
}
