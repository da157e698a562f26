use prefrl::formats::{self, Provenance, TaskRecord, PAIRS_FORMAT, TASKS_FORMAT};
use prefrl::CliError;
use prefrl_core::datapipe::{corpus_with_corruption, generate_tasks, gold_margin_pairs, TaskKind, TaskMix};
use prefrl_core::reward::PreferencePair;

fn prov() -> Provenance {
    Provenance {
        config_hash: "0123456789abcdef".into(),
        seed: 9,
    }
}

#[test]
fn tasks_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tasks.jsonl");
    let tasks = generate_tasks(200, &TaskMix::default(), 8, 1).unwrap();
    formats::write_tasks(&path, &tasks, &prov()).unwrap();
    assert_eq!(formats::read_tasks(&path).unwrap(), tasks);
    let rows: Vec<(usize, TaskRecord)> = formats::read_jsonl(&path).unwrap();
    assert_eq!(rows.len(), 200);
    for (_, r) in &rows {
        assert_eq!(r.format, TASKS_FORMAT);
        assert_eq!(r.seed, 9);
        assert_eq!(r.config_hash, "0123456789abcdef");
    }
}

fn some_pairs() -> Vec<PreferencePair> {
    let mut tasks = generate_tasks(30, &TaskMix::only(TaskKind::FreeformGold), 8, 2).unwrap();
    tasks.extend(generate_tasks(30, &TaskMix::only(TaskKind::ModalCount), 8, 3).unwrap());
    let mut pairs = gold_margin_pairs(&tasks, 40, 0.5, 0.3, 4).unwrap();
    // give some pairs a modal prefix
    for (p, t) in pairs.iter_mut().zip(tasks.iter().skip(30)) {
        p.modal = t.modal.clone();
    }
    pairs
}

#[test]
fn pairs_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.jsonl");
    let pairs = some_pairs();
    formats::write_pairs(&path, &pairs, &prov()).unwrap();
    assert_eq!(formats::read_pairs(&path).unwrap(), pairs);
    let text = std::fs::read_to_string(&path).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    for key in ["id", "prompt_tokens", "chosen_tokens", "rejected_tokens", "domain_tag", "source_tag", "format"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    assert_eq!(first["format"], PAIRS_FORMAT);
}

#[test]
fn bench_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.jsonl");
    let pairs = some_pairs();
    let cats = vec![("general".to_string(), pairs[..10].to_vec()), ("reasoning".to_string(), pairs[10..].to_vec())];
    formats::write_bench(&path, &cats, &prov()).unwrap();
    assert_eq!(formats::read_bench(&path).unwrap(), cats);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.lines().all(|l| l.contains("\"category\"")));
}

#[test]
fn samples_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    let tasks = generate_tasks(100, &TaskMix::default(), 8, 5).unwrap();
    let (corpus, _) = corpus_with_corruption(&tasks, 0.1, 8, 6).unwrap();
    formats::write_samples(&path, &corpus, &prov()).unwrap();
    assert_eq!(formats::read_samples(&path).unwrap(), corpus);
}

#[test]
fn malformed_lines_report_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pairs.jsonl");
    formats::write_pairs(&path, &some_pairs()[..2], &prov()).unwrap();
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{not json}\n");
    std::fs::write(&path, text).unwrap();
    match formats::read_pairs(&path) {
        Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("unexpected {other:?}"),
    }
}
