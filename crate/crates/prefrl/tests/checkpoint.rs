use prefrl::checkpoint::{self, decode, encode, Checkpoint, CheckpointMeta, MAGIC};
use prefrl::CliError;
use prefrl_core::autodiff::{ModelParams, Tensor};
use prefrl_core::model::{init_params, ModelDims};
use prefrl_core::rng;
use proptest::prelude::*;

fn model_checkpoint(meta: bool) -> Checkpoint {
    Checkpoint {
        params: init_params(&ModelDims::default(), &mut rng::from_seed(1)),
        meta: meta.then_some(CheckpointMeta {
            seed: 42,
            config_hash: 0xdead_beef_0123_4567,
        }),
    }
}

#[test]
fn model_round_trip_is_byte_exact() {
    for meta in [false, true] {
        let ck = model_checkpoint(meta);
        let bytes = encode(&ck);
        assert_eq!(&bytes[..4], MAGIC);
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        let back = decode(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(encode(&back), bytes);
    }
}

#[test]
fn frozen_flags_survive() {
    let ck = model_checkpoint(true);
    let back = decode(&encode(&ck)).unwrap();
    for (name, p) in back.params.iter() {
        assert_eq!(p.trainable, ck.params.get(name).unwrap().trainable);
    }
}

#[test]
fn save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub/model.prfl");
    let ck = model_checkpoint(true);
    checkpoint::save(&path, &ck).unwrap();
    assert_eq!(checkpoint::load(&path).unwrap(), ck);
}

#[test]
fn missing_checkpoint_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nope.prfl");
    match checkpoint::load(&path) {
        Err(CliError::MissingCheckpoint(p)) => assert_eq!(p, path),
        other => panic!("unexpected {other:?}"),
    }
    let msg = checkpoint::load(&path).unwrap_err().to_string();
    assert!(msg.contains("nope.prfl"));
}

#[test]
fn corrupt_inputs_are_rejected() {
    let bytes = encode(&model_checkpoint(true));
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(decode(&bad_magic).unwrap_err().contains("magic"));
    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    assert!(decode(&bad_version).unwrap_err().contains("version"));
    for cut in [3, 8, 11, 20, bytes.len() / 2, bytes.len() - 1] {
        assert!(decode(&bytes[..cut]).is_err(), "cut at {cut}");
    }
    let mut trailing = bytes.clone();
    trailing.push(0);
    assert!(decode(&trailing).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.prfl");
    std::fs::write(&path, &bad_magic).unwrap();
    assert!(matches!(checkpoint::load(&path), Err(CliError::BadCheckpoint { .. })));
}

fn arb_params() -> impl Strategy<Value = ModelParams> {
    prop::collection::vec(
        (
            "[a-z.]{1,12}",
            prop::collection::vec(1usize..4, 1..4),
            any::<bool>(),
            any::<u64>(),
        ),
        0..6,
    )
    .prop_map(|specs| {
        let mut p = ModelParams::new();
        for (name, shape, trainable, seed) in specs {
            let n: usize = shape.iter().product();
            let mut r = rng::from_seed(seed);
            let data: Vec<f64> = (0..n)
                .map(|_| {
                    let x: f64 = rand::Rng::random_range(&mut r, -1e6..1e6);
                    x
                })
                .collect();
            p.insert(&name, Tensor::new(shape, data).unwrap(), trainable);
        }
        p
    })
}

proptest! {
    #[test]
    fn arbitrary_params_round_trip(params in arb_params(), seed in any::<u64>(), hash in any::<u64>(), with_meta in any::<bool>()) {
        let ck = Checkpoint {
            params,
            meta: with_meta.then_some(CheckpointMeta { seed, config_hash: hash }),
        };
        let bytes = encode(&ck);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(encode(&back), bytes);
    }
}
