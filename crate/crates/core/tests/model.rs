mod common;

use common::*;
use prefrl_core::autodiff::{ModelParams, Tensor};
use prefrl_core::model::{self, ModalContext, ModelDims, Pooling, SequenceSample};
use prefrl_core::rl::{sft_train, SftConfig};
use prefrl_core::sampling::{generate, DecodeConfig};
use prefrl_core::model::Prompt;
use prefrl_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn params(seed: u64) -> ModelParams {
    model::init_params(&ModelDims::default(), &mut rng(seed))
}

fn modal(r: &mut prefrl_core::rng::StreamRng) -> ModalContext {
    ModalContext {
        observation: uniform(r, 8, -1.0, 1.0),
    }
}

fn random_sample(r: &mut prefrl_core::rng::StreamRng) -> SequenceSample {
    let p = r.random_range(1..6);
    let q = r.random_range(1..6);
    let m = if r.random::<bool>() { Some(modal(r)) } else { None };
    SequenceSample::new(
        (0..p).map(|_| r.random_range(0..32)).collect(),
        (0..q).map(|_| r.random_range(0..32)).collect(),
        m,
    )
}

fn zero(p: &mut ModelParams, name: &str) {
    let t = p.tensor(name).unwrap();
    let z = Tensor::zeros(t.shape());
    p.get_mut(name).unwrap().tensor = z;
}

#[test]
fn encode_lengths() {
    let p = params(1);
    let s = SequenceSample::new(vec![1, 2, 3], vec![4, 5], None);
    assert_eq!(model::encode(&p, &s).unwrap().shape(), &[5, 48]);
    let s = SequenceSample::new(vec![1, 2, 3], vec![4, 5], Some(modal(&mut rng(2))));
    assert_eq!(model::encode(&p, &s).unwrap().shape(), &[6, 48]);
    assert_eq!(model::encode(&p, &s).unwrap(), model::encode(&p, &s).unwrap());
}

#[test]
fn out_of_range_token_is_an_error() {
    let p = params(1);
    let s = SequenceSample::new(vec![1, 32], vec![4], None);
    assert!(matches!(model::encode(&p, &s), Err(Error::TokenOutOfRange { token: 32, vocab: 32 })));
    assert!(model::reward_score(&p, &s).is_err());
    assert!(model::policy_logprobs(&p, &s).is_err());
}

#[test]
fn empty_response_cannot_be_scored() {
    let p = params(1);
    let s = SequenceSample::new(vec![1, 2], vec![], None);
    assert!(model::reward_score(&p, &s).is_err());
}

#[test]
fn frozen_mask_at_init() {
    let p = params(3);
    for (name, param) in p.iter() {
        let frozen = model::FROZEN.contains(&name.as_str());
        assert_eq!(param.trainable, !frozen, "{name}");
        assert!(param.tensor.all_finite());
    }
}

#[test]
fn zero_score_head_scores_zero() {
    let mut p = params(4);
    zero(&mut p, model::SCORE_HEAD);
    let mut r = rng(5);
    for _ in 0..50 {
        assert_eq!(model::reward_score(&p, &random_sample(&mut r)).unwrap(), 0.0);
    }
}

#[test]
fn zero_value_head_values_zero() {
    let mut p = params(4);
    zero(&mut p, model::VALUE_HEAD);
    let mut r = rng(6);
    for _ in 0..20 {
        let s = random_sample(&mut r);
        let v = model::value_estimates(&p, &s).unwrap();
        assert_eq!(v.len(), s.response.len());
        assert!(v.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn score_is_head_applied_to_mean_hidden_state() {
    let p = params(7);
    let mut r = rng(8);
    for _ in 0..20 {
        let s = random_sample(&mut r);
        let h = model::encode(&p, &s).unwrap();
        let (rows, d) = h.as_2d();
        let w = p.tensor(model::SCORE_HEAD).unwrap().data();
        let b = p.tensor(model::SCORE_BIAS).unwrap().data()[0];
        // duplicated hidden states have the same mean
        let pooled = |copies: usize| -> f64 {
            let mut mean = vec![0.0; d];
            for _ in 0..copies {
                for i in 0..rows {
                    for (m, v) in mean.iter_mut().zip(h.row(i)) {
                        *m += v;
                    }
                }
            }
            mean.iter().zip(w).map(|(m, w)| m / (rows * copies) as f64 * w).sum::<f64>() + b
        };
        let score = model::reward_score(&p, &s).unwrap();
        assert!((score - pooled(1)).abs() < 1e-12);
        assert!((score - pooled(2)).abs() < 1e-12);
        assert_eq!(score, model::reward_score(&p, &s).unwrap());
    }
}

#[test]
fn response_only_pooling_ignores_context_rows() {
    let p = params(9);
    let s = SequenceSample::new(vec![1, 2, 3], vec![4, 5], None);
    let h = model::encode(&p, &s).unwrap();
    let w = p.tensor(model::SCORE_HEAD).unwrap().data();
    let b = p.tensor(model::SCORE_BIAS).unwrap().data()[0];
    let want: f64 = (0..48).map(|j| (h.row(3)[j] + h.row(4)[j]) / 2.0 * w[j]).sum::<f64>() + b;
    let got = model::reward_score_with(&p, &s, Pooling::ResponseOnly).unwrap();
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn uniform_logits_give_uniform_logprobs() {
    let dims = ModelDims {
        vocab: 8,
        ..ModelDims::default()
    };
    let mut p = model::init_params(&dims, &mut rng(10));
    zero(&mut p, model::LM_HEAD);
    let s = SequenceSample::new(vec![1, 2], vec![3, 4, 7], None);
    for lp in model::policy_logprobs(&p, &s).unwrap() {
        assert!((lp - (1.0f64 / 8.0).ln()).abs() < 1e-12);
        assert!((lp + 2.0794).abs() < 1e-4);
    }
}

#[test]
fn next_token_distributions_are_normalized() {
    let p = params(11);
    let mut r = rng(12);
    let samples: Vec<SequenceSample> = (0..30).map(|_| random_sample(&mut r)).collect();
    for row in model::next_token_logits(&p, &samples).unwrap() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        let total: f64 = row.iter().map(|x| (x - lse).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
    for s in &samples {
        assert!(model::policy_logprobs(&p, s).unwrap().iter().all(|&x| x <= 0.0));
    }
}

#[test]
fn logprobs_sum_over_vocab_to_one() {
    let p = params(13);
    let s = SequenceSample::new(vec![5, 6], vec![7, 8, 9], None);
    for t in 0..3 {
        let total: f64 = (0..32)
            .map(|v| {
                let mut resp = s.response[..=t].to_vec();
                resp[t] = v;
                model::policy_logprobs(&p, &SequenceSample::new(s.prompt.clone(), resp, None)).unwrap()[t].exp()
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
    }
}

#[test]
fn greedy_tokens_dominate_substitutions() {
    let p = params(14);
    let decode = DecodeConfig::default().greedy();
    let mut r = rng(15);
    for i in 0..10 {
        let prompt = Prompt::new((0..3).map(|_| r.random_range(0..32)).collect(), None);
        let resp = generate(&p, &prompt, &decode, i).unwrap();
        let greedy_lp = model::policy_logprobs(&p, &prompt.with_response(resp.clone())).unwrap();
        for t in 0..resp.len() {
            for v in 0..32 {
                let mut alt = resp.clone();
                alt[t] = v;
                let lp = model::policy_logprobs(&p, &prompt.with_response(alt)).unwrap();
                assert!(greedy_lp[t] >= lp[t] - 1e-12);
            }
        }
    }
}

#[test]
fn critic_init_matches_reward_at_final_step() {
    let rm = params(16);
    let critic = model::critic_from_reward(&rm).unwrap();
    let mut r = rng(17);
    for pooling in [Pooling::AllTokens, Pooling::ResponseOnly] {
        for _ in 0..30 {
            let s = random_sample(&mut r);
            let v = model::terminal_value(&critic, &s, pooling).unwrap();
            let score = model::reward_score_with(&rm, &s, pooling).unwrap();
            assert!((v - score).abs() < 1e-12);
        }
    }
    assert_eq!(critic.tensor(model::VALUE_HEAD).unwrap(), rm.tensor(model::SCORE_HEAD).unwrap());
    assert_ne!(critic.tensor(model::VALUE_HEAD).unwrap(), rm.tensor(model::VALUE_HEAD).unwrap());
}

#[test]
fn values_are_deterministic() {
    let p = params(18);
    let s = random_sample(&mut rng(19));
    assert_eq!(model::value_estimates(&p, &s).unwrap(), model::value_estimates(&p, &s).unwrap());
}

#[test]
fn frozen_tensors_survive_training() {
    let init = params(20);
    let mut r = rng(21);
    let demos: Vec<SequenceSample> = (0..40)
        .map(|_| {
            let mut s = random_sample(&mut r);
            s.modal = Some(modal(&mut r));
            s
        })
        .collect();
    let cfg = SftConfig {
        lr: 1e-2,
        batch_size: 8,
        steps: 15,
    };
    let (trained, _) = sft_train(init.clone(), &demos, &cfg, 22).unwrap();
    assert!(model::frozen_unchanged(&init, &trained));
    for name in model::FROZEN {
        let a: Vec<u64> = init.tensor(name).unwrap().data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = trained.tensor(name).unwrap().data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }
    assert_ne!(init.tensor(model::TOKEN_EMBED).unwrap(), trained.tensor(model::TOKEN_EMBED).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scoring_is_batch_invariant(seed in any::<u64>(), n in 1usize..8, pick in 0usize..8) {
        let p = params(23);
        let mut r = rng(seed);
        let batch: Vec<SequenceSample> = (0..n).map(|_| random_sample(&mut r)).collect();
        let i = pick % n;
        for pooling in [Pooling::AllTokens, Pooling::ResponseOnly] {
            let together = model::reward_scores(&p, &batch, pooling).unwrap();
            let alone = model::reward_score_with(&p, &batch[i], pooling).unwrap();
            prop_assert!((together[i] - alone).abs() < 1e-12);
        }
        let lp_batch = model::batch_logprobs(&p, &batch).unwrap();
        let lp_alone = model::policy_logprobs(&p, &batch[i]).unwrap();
        for (a, b) in lp_batch[i].iter().zip(&lp_alone) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
