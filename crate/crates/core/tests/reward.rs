mod common;

use common::*;
use prefrl_core::autodiff::{Graph, Tensor};
use prefrl_core::datapipe::{generate_tasks, gold_margin_pairs, gold_reward_raw, SyntheticTask, TaskKind, TaskMix};
use prefrl_core::model::{self, ModelDims, Pooling};
use prefrl_core::reward::{
    accuracy_from_scores, bt_batch_loss, bt_loss, pair_scores, pairwise_accuracy, train_reward_model, DomainTag,
    PreferencePair, RMTrainConfig, SourceTag,
};
use prefrl_core::Error;
use proptest::prelude::*;

fn freeform(n: usize, seed: u64) -> Vec<SyntheticTask> {
    generate_tasks(n, &TaskMix::only(TaskKind::FreeformGold), 8, seed).unwrap()
}

fn quick_cfg(steps: usize) -> RMTrainConfig {
    RMTrainConfig {
        lr: 1e-3,
        batch_size: 64,
        max_steps: steps,
        eval_every: steps,
        ..RMTrainConfig::default()
    }
}

#[test]
fn bt_loss_anchors() {
    assert!((bt_loss(0.3, 0.3).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((bt_loss(1.0, 0.0).unwrap() - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-12);
    assert!((bt_loss(1.0, 0.0).unwrap() - 0.313262).abs() < 1e-6);
    let (l0, l1, l5) = (bt_loss(0.0, 0.0).unwrap(), bt_loss(1.0, 0.0).unwrap(), bt_loss(5.0, 0.0).unwrap());
    assert!(l5 < l1 && l1 < l0);
    assert!(bt_loss(800.0, -800.0).unwrap() >= 0.0);
    assert!(bt_loss(-800.0, 800.0).unwrap().is_finite());
}

#[test]
fn bt_loss_rejects_non_finite() {
    assert!(matches!(bt_loss(f64::NAN, 0.0), Err(Error::NonFinite { .. })));
    assert!(bt_loss(0.0, f64::INFINITY).is_err());
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gradient through the graph form `-log σ(r_w - r_l)`.
fn graph_grad(rw: f64, rl: f64) -> (f64, f64) {
    let mut g = Graph::new();
    let a = g.param("w", Tensor::vector(vec![rw]).unwrap(), true);
    let b = g.param("l", Tensor::vector(vec![rl]).unwrap(), true);
    let m = g.sub(a, b).unwrap();
    let s = g.sigmoid(m).unwrap();
    let lg = g.log(s).unwrap();
    let t = g.sum(lg).unwrap();
    let loss = g.neg(t).unwrap();
    let grads = g.backward(loss).unwrap();
    (grads.get("w").unwrap().data()[0], grads.get("l").unwrap().data()[0])
}

proptest! {
    #[test]
    fn bt_gradient_matches_closed_form_and_fd(rw in -6.0f64..6.0, rl in -6.0f64..6.0) {
        let m = rw - rl;
        let want = (-sigmoid(-m), sigmoid(-m));
        let h = 1e-6;
        let fd_w = (bt_loss(rw + h, rl).unwrap() - bt_loss(rw - h, rl).unwrap()) / (2.0 * h);
        let fd_l = (bt_loss(rw, rl + h).unwrap() - bt_loss(rw, rl - h).unwrap()) / (2.0 * h);
        prop_assert!(((fd_w - want.0) / want.0).abs() < 1e-6);
        prop_assert!(((fd_l - want.1) / want.1).abs() < 1e-6);
        let (gw, gl) = graph_grad(rw, rl);
        prop_assert!(((gw - want.0) / want.0).abs() < 1e-9);
        prop_assert!(((gl - want.1) / want.1).abs() < 1e-9);
    }

    #[test]
    fn bt_translation_invariant(rw in -20.0f64..20.0, rl in -20.0f64..20.0, c in -50.0f64..50.0) {
        let a = bt_loss(rw, rl).unwrap();
        let b = bt_loss(rw + c, rl + c).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a));
    }

    #[test]
    fn bt_strictly_positive_and_decreasing(m in -30.0f64..30.0, d in 0.01f64..5.0) {
        let a = bt_loss(m, 0.0).unwrap();
        prop_assert!(a > 0.0);
        prop_assert!(bt_loss(m + d, 0.0).unwrap() < a);
    }
}

#[test]
fn swapping_pairs_negates_margin() {
    let tasks = freeform(20, 1);
    let pairs = gold_margin_pairs(&tasks, 16, 0.5, 0.0, 2).unwrap();
    let p = model::init_params(&ModelDims::default(), &mut rng(3));
    let swapped: Vec<PreferencePair> = pairs.iter().map(|p| p.swapped()).collect();
    let a = pair_scores(&p, &pairs, Pooling::AllTokens).unwrap();
    let b = pair_scores(&p, &swapped, Pooling::AllTokens).unwrap();
    for (&(w, l), &(w2, l2)) in a.iter().zip(&b) {
        let m = w - l;
        assert_eq!((w2, l2), (l, w));
        assert!((bt_loss(w2, l2).unwrap() - bt_loss(-m, 0.0).unwrap()).abs() < 1e-12);
    }
    let mean = |pp: &[PreferencePair]| {
        let refs: Vec<&PreferencePair> = pp.iter().collect();
        let mut g = Graph::new();
        let l = bt_batch_loss(&mut g, &p, &refs, Pooling::AllTokens).unwrap();
        g.value(l).item()
    };
    let want: f64 = a.iter().map(|&(w, l)| bt_loss(l, w).unwrap()).sum::<f64>() / a.len() as f64;
    assert!((mean(&swapped) - want).abs() < 1e-12);
    let want: f64 = a.iter().map(|&(w, l)| bt_loss(w, l).unwrap()).sum::<f64>() / a.len() as f64;
    assert!((mean(&pairs) - want).abs() < 1e-12);
}

#[test]
fn accuracy_counting() {
    let acc = accuracy_from_scores(&[(0.2, 0.0), (0.0, 0.1), (0.5, 0.0)]).unwrap();
    assert!((acc - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(accuracy_from_scores(&[(1.0, 1.0)]).unwrap(), 0.0);
    assert!(accuracy_from_scores(&[]).is_err());
}

#[test]
fn zero_score_head_has_zero_accuracy() {
    let tasks = freeform(20, 1);
    let pairs = gold_margin_pairs(&tasks, 40, 0.5, 0.0, 2).unwrap();
    let mut p = model::init_params(&ModelDims::default(), &mut rng(3));
    p.get_mut(model::SCORE_HEAD).unwrap().tensor = Tensor::zeros(&[48, 1]);
    assert_eq!(pairwise_accuracy(&p, &pairs).unwrap(), 0.0);
    assert!(pairwise_accuracy(&p, &[]).is_err());
}

#[test]
fn gold_scorer_is_perfect_on_gold_pairs() {
    let tasks = freeform(50, 4);
    let pairs = gold_margin_pairs(&tasks, 300, 0.1, 0.0, 5).unwrap();
    let task = &tasks[0];
    let scores: Vec<(f64, f64)> = pairs
        .iter()
        .map(|p| (gold_reward_raw(task, &p.chosen), gold_reward_raw(task, &p.rejected)))
        .collect();
    assert_eq!(accuracy_from_scores(&scores).unwrap(), 1.0);
}

#[test]
fn pair_invariants_enforced() {
    assert!(PreferencePair::new(vec![1], None, vec![2, 12], vec![2, 12], DomainTag::General, SourceTag::Judge).is_err());
    assert!(PreferencePair::new(vec![1], None, vec![], vec![2], DomainTag::General, SourceTag::Judge).is_err());
    assert!(PreferencePair::new(vec![1], None, vec![3], vec![2], DomainTag::General, SourceTag::Judge).is_ok());
}

#[test]
fn large_margin_pairs_are_learned() {
    let tasks = freeform(200, 1);
    let pairs = gold_margin_pairs(&tasks, 2000, 1.0, 0.0, 2).unwrap();
    let out = train_reward_model(&pairs, &quick_cfg(200), 3).unwrap();
    let acc = out.log.last().unwrap().heldout_acc.unwrap();
    assert!(acc >= 0.90, "held-out accuracy {acc}");
    assert_eq!(out.heldout_pairs + out.train_pairs, pairs.len());
    assert!(model::frozen_unchanged(&model::init_params(&ModelDims::default(), &mut prefrl_core::rng::substream(3, "rm/init", 0)), &out.params));
}

#[test]
fn zero_lr_leaves_params_unchanged() {
    let tasks = freeform(20, 1);
    let pairs = gold_margin_pairs(&tasks, 50, 0.5, 0.0, 2).unwrap();
    let cfg = RMTrainConfig {
        lr: 0.0,
        ..quick_cfg(1)
    };
    let out = train_reward_model(&pairs, &cfg, 7).unwrap();
    let init = model::init_params(&ModelDims::default(), &mut prefrl_core::rng::substream(7, "rm/init", 0));
    assert_eq!(out.params, init);
    assert_eq!(out.log.len(), 1);
}

#[test]
fn training_is_deterministic() {
    let tasks = freeform(20, 1);
    let pairs = gold_margin_pairs(&tasks, 100, 0.5, 0.0, 2).unwrap();
    let a = train_reward_model(&pairs, &quick_cfg(10), 8).unwrap();
    let b = train_reward_model(&pairs, &quick_cfg(10), 8).unwrap();
    let bits = |o: &prefrl_core::reward::RMTrainOutput| {
        o.params
            .iter()
            .flat_map(|(_, p)| p.tensor.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(a.log, b.log);
    let c = train_reward_model(&pairs, &quick_cfg(10), 9).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn empty_after_filter_names_the_filter() {
    let tasks = freeform(20, 1);
    let pairs = gold_margin_pairs(&tasks, 30, 0.5, 1.0, 2).unwrap();
    let cfg = RMTrainConfig {
        length_ratio_max: Some(1.0),
        ..quick_cfg(1)
    };
    match train_reward_model(&pairs, &cfg, 1) {
        Err(Error::FilteredEmpty { filter, before }) => {
            assert_eq!(filter, "length_filter");
            assert_eq!(before, 30);
        }
        other => panic!("expected FilteredEmpty, got {other:?}"),
    }
    assert!(train_reward_model(&pairs[..1], &quick_cfg(1), 1).is_err());
}

#[test]
fn bad_config_rejected() {
    let tasks = freeform(20, 1);
    let pairs = gold_margin_pairs(&tasks, 30, 0.5, 0.0, 2).unwrap();
    for cfg in [
        RMTrainConfig { eval_fraction: 0.0, ..quick_cfg(1) },
        RMTrainConfig { eval_fraction: 1.0, ..quick_cfg(1) },
        RMTrainConfig { lr: -1.0, ..quick_cfg(1) },
        RMTrainConfig { batch_size: 0, ..quick_cfg(1) },
    ] {
        assert!(train_reward_model(&pairs, &cfg, 1).is_err());
    }
}
