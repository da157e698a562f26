use std::path::Path;

use prefrl::config::{RunConfig, KEYS};
use prefrl::CliError;
use proptest::prelude::*;

#[test]
fn defaults_carry_training_hyperparameters() {
    let c = RunConfig::default();
    let rm = c.rm_config();
    assert_eq!((rm.lr, rm.batch_size), (1e-5, 256));
    let ppo = c.ppo_config();
    assert_eq!((ppo.lr, ppo.batch_size), (5e-5, 256));
    assert_eq!((ppo.gamma, ppo.gae_beta, ppo.clip_epsilon), (0.99, 0.95, 0.2));
    assert_eq!(ppo.kl_penalty_coeff, 0.0);
}

#[test]
fn round_trip() {
    let mut c = RunConfig::default();
    c.apply_override("rm.lr=0.00123").unwrap();
    c.apply_override("ppo.ratio_denominator=reference_model").unwrap();
    c.apply_override("rm.length_ratio_max=2.5").unwrap();
    c.apply_override("clean.threshold=absolute:-1.5").unwrap();
    c.apply_override("model.pooling=response_only").unwrap();
    let text = c.serialize();
    let back = RunConfig::parse(&text, Path::new("cfg")).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.serialize(), text);
    assert_eq!(back.hash(), c.hash());
    assert_eq!(RunConfig::parse(&RunConfig::default().serialize(), Path::new("d")).unwrap(), RunConfig::default());
}

#[test]
fn every_key_serializes_once() {
    let text = RunConfig::default().serialize();
    assert_eq!(text.lines().count(), KEYS.len());
    for k in KEYS {
        assert_eq!(text.lines().filter(|l| l.starts_with(&format!("{k} ="))).count(), 1, "{k}");
    }
}

#[test]
fn comments_and_blank_lines() {
    let c = RunConfig::parse("# a run\n\nrun.seed = 7\n  rm.max_steps=12  \n", Path::new("x")).unwrap();
    assert_eq!(c.seed, 7);
    assert_eq!(c.rm.max_steps, 12);
}

#[test]
fn unknown_key_is_listed() {
    let err = RunConfig::parse("rm.lrr = 1\n", Path::new("x")).unwrap_err();
    assert!(matches!(&err, CliError::UnknownKey(k) if k == "rm.lrr"));
    assert!(err.to_string().contains("rm.lrr"));
}

#[test]
fn bad_values_and_lines() {
    assert!(matches!(RunConfig::parse("rm.lr = fast\n", Path::new("x")), Err(CliError::BadValue { .. })));
    assert!(matches!(
        RunConfig::parse("run.seed = 1\nnot an assignment\n", Path::new("x")),
        Err(CliError::Parse { line: 2, .. })
    ));
    assert!(RunConfig::parse("ppo.gamma = 1.5\n", Path::new("x")).is_err());
    assert!(RunConfig::parse("rm.eval_fraction = 1.0\n", Path::new("x")).is_err());
    assert!(RunConfig::default().apply_override("no-equals").is_err());
}

#[test]
fn hash_tracks_content() {
    let a = RunConfig::default();
    let mut b = a.clone();
    b.apply_override("run.seed=1").unwrap();
    assert_ne!(a.hash(), b.hash());
    assert_eq!(a.hash().len(), 16);
    assert_eq!(u64::from_str_radix(&a.hash(), 16).unwrap(), a.hash_u64());
}

proptest! {
    #[test]
    fn numeric_overrides_round_trip(seed in any::<u64>(), lr in 1e-9f64..1.0, steps in 1usize..100000, gamma in 0.01f64..1.0) {
        let mut c = RunConfig::default();
        c.apply_override(&format!("run.seed={seed}")).unwrap();
        c.apply_override(&format!("rm.lr={lr:?}")).unwrap();
        c.apply_override(&format!("rm.max_steps={steps}")).unwrap();
        c.apply_override(&format!("ppo.gamma={gamma:?}")).unwrap();
        let back = RunConfig::parse(&c.serialize(), Path::new("p")).unwrap();
        prop_assert_eq!(back, c);
    }
}
