mod common;

use common::*;
use prefrl_core::autodiff::{ModelParams, Tensor};
use prefrl_core::model::{self, ModelDims, Pooling, Prompt};
use prefrl_core::sampling::{
    argmax, best_of_n, generate, generate_batch, probabilities, sample_categorical, select_best, DecodeConfig,
};
use prefrl_core::vocab;
use proptest::prelude::*;

fn params(seed: u64) -> ModelParams {
    model::init_params(&ModelDims::default(), &mut rng(seed))
}

fn prompt() -> Prompt {
    Prompt::new(vec![vocab::TASK_ARITH, 3, vocab::PLUS, 1], None)
}

/// A model whose next-token distribution is `softmax(logits)` everywhere.
fn categorical_policy(logits: &[f64]) -> ModelParams {
    let dims = ModelDims {
        vocab: logits.len(),
        ..ModelDims::default()
    };
    let mut p = model::init_params(&dims, &mut rng(1));
    let shape = p.tensor(model::LM_HEAD).unwrap().shape().to_vec();
    p.get_mut(model::LM_HEAD).unwrap().tensor = Tensor::zeros(&shape);
    p.get_mut(model::LM_BIAS).unwrap().tensor = Tensor::vector(logits.to_vec()).unwrap();
    p
}

fn within_three_sigma(counts: &[usize], probs: &[f64], n: usize) {
    for (&c, &p) in counts.iter().zip(probs) {
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let dev = (c as f64 - n as f64 * p).abs();
        assert!(dev <= 3.0 * sigma, "count {c} vs expected {} (sigma {sigma})", n as f64 * p);
    }
}

#[test]
fn greedy_runs_repeat() {
    let p = params(2);
    let d = DecodeConfig::default().greedy();
    let a = generate(&p, &prompt(), &d, 1).unwrap();
    assert_eq!(a, generate(&p, &prompt(), &d, 99).unwrap());
    assert!(a.len() <= d.max_len);
}

#[test]
fn same_seed_same_response() {
    let p = params(2);
    let d = DecodeConfig::default();
    for s in 0..20 {
        assert_eq!(generate(&p, &prompt(), &d, s).unwrap(), generate(&p, &prompt(), &d, s).unwrap());
    }
}

#[test]
fn generation_stops_at_stop_token_or_max_len() {
    let p = params(3);
    let d = DecodeConfig {
        max_len: 5,
        ..DecodeConfig::default()
    };
    for s in 0..50 {
        let r = generate(&p, &prompt(), &d, s).unwrap();
        assert!(!r.is_empty() && r.len() <= 5);
        if let Some(i) = r.iter().position(|&t| t == vocab::STOP) {
            assert_eq!(i, r.len() - 1);
        } else {
            assert_eq!(r.len(), 5);
        }
    }
}

#[test]
fn batch_generation_matches_single() {
    let p = params(4);
    let d = DecodeConfig::default();
    let prompts: Vec<Prompt> = (0..6).map(|i| Prompt::new(vec![vocab::TASK_ARITH, i, vocab::PLUS, 1], None)).collect();
    let seeds: Vec<u64> = (100..106).collect();
    let batch = generate_batch(&p, &prompts, &d, &seeds).unwrap();
    for ((pr, &s), b) in prompts.iter().zip(&seeds).zip(&batch) {
        assert_eq!(&generate(&p, pr, &d, s).unwrap(), b);
    }
}

#[test]
fn invalid_decode_rejected() {
    let p = params(4);
    let bad_t = DecodeConfig {
        temperature: -1.0,
        ..DecodeConfig::default()
    };
    let bad_len = DecodeConfig {
        max_len: 0,
        ..DecodeConfig::default()
    };
    assert!(generate(&p, &prompt(), &bad_t, 0).is_err());
    assert!(generate(&p, &prompt(), &bad_len, 0).is_err());
}

#[test]
fn categorical_frequencies_match_softmax() {
    let logits = [0.3, -1.0, 1.2];
    let probs = probabilities(&logits, 1.0);
    let n = 10_000;
    let mut r = rng(5);
    let mut counts = [0usize; 3];
    for _ in 0..n {
        counts[sample_categorical(&logits, 1.0, &mut r)] += 1;
    }
    within_three_sigma(&counts, &probs, n);

    // the same distribution through the full model and decoder
    let policy = categorical_policy(&logits);
    let d = DecodeConfig {
        temperature: 1.0,
        max_len: 1,
        stop_token: None,
    };
    let prompts = vec![Prompt::new(vec![0, 1], None); n];
    let seeds: Vec<u64> = (0..n as u64).collect();
    let mut counts = [0usize; 3];
    for resp in generate_batch(&policy, &prompts, &d, &seeds).unwrap() {
        counts[resp[0]] += 1;
    }
    within_three_sigma(&counts, &probs, n);
}

#[test]
fn temperature_sharpens() {
    let p1 = probabilities(&[0.0, 1.0], 1.0);
    let p_half = probabilities(&[0.0, 1.0], 0.5);
    assert!((p1[1] - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
    assert!(p_half[1] > p1[1]);
    let mut r = rng(6);
    assert_eq!(sample_categorical(&[0.0, 3.0, 1.0], 0.0, &mut r), 1);
}

#[test]
fn argmax_examples() {
    assert_eq!(select_best(&[0.1, 0.9, 0.5]), 1);
    assert_eq!(argmax(&[0.4, 0.4, 0.1]), 0);
    assert_eq!(argmax(&[-1.0]), 0);
}

#[test]
fn best_of_one_is_identity() {
    let policy = params(7);
    let rm = params(8);
    let d = DecodeConfig::default();
    let b = best_of_n(&policy, &rm, &prompt(), 1, &d, 42, Pooling::AllTokens).unwrap();
    assert_eq!(b.winner, 0);
    assert_eq!(b.candidates.len(), 1);
    assert_eq!(b.best().response, generate(&policy, &prompt(), &d, 42).unwrap());
}

#[test]
fn best_of_zero_is_an_error() {
    let p = params(7);
    assert!(best_of_n(&p, &p, &prompt(), 0, &DecodeConfig::default(), 0, Pooling::AllTokens).is_err());
}

#[test]
fn winner_is_the_rescored_maximum() {
    let policy = params(9);
    let rm = params(10);
    let d = DecodeConfig::default();
    for seed in 0..20 {
        let b = best_of_n(&policy, &rm, &prompt(), 8, &d, seed * 100, Pooling::AllTokens).unwrap();
        let rescored: Vec<f64> = b
            .candidates
            .iter()
            .map(|c| model::reward_score(&rm, &prompt().with_response(c.response.clone())).unwrap())
            .collect();
        for (c, s) in b.candidates.iter().zip(&rescored) {
            assert_eq!(c.rm_score, *s);
            assert!(b.best().rm_score >= c.rm_score);
            assert_eq!(c.len, c.response.len());
        }
        let first_max = rescored.iter().position(|&s| s == b.best().rm_score).unwrap();
        assert_eq!(b.winner, first_max);
        for (i, c) in b.candidates.iter().enumerate() {
            assert_eq!(c.seed, seed * 100 + i as u64);
            assert_eq!(c.response, generate(&policy, &prompt(), &d, c.seed).unwrap());
        }
    }
}

proptest! {
    #[test]
    fn selection_invariant_under_increasing_maps(scores in prop::collection::vec(-10.0f64..10.0, 1..20), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let i = select_best(&scores);
        for &s in &scores {
            prop_assert!(scores[i] >= s);
        }
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s + s).collect();
        let squashed: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
        prop_assert_eq!(select_best(&affine), i);
        prop_assert_eq!(select_best(&cubed), i);
        prop_assert_eq!(select_best(&squashed), i);
    }
}
