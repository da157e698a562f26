//! JSON-lines dataset files and JSON reports.
//!
//! Every line and every report carries `format`, `config_hash`, and `seed`.

use std::io::Write as _;
use std::path::Path;

use prefrl_core::datapipe::{CleanSample, Constraint, GoldAnswer, SyntheticTask, TaskKind};
use prefrl_core::model::{ModalContext, SequenceSample};
use prefrl_core::reward::{DomainTag, PreferencePair, SourceTag};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

pub const TASKS_FORMAT: &str = "prefrl.tasks/1";
pub const PAIRS_FORMAT: &str = "prefrl.pairs/1";
pub const BENCH_FORMAT: &str = "prefrl.bench/1";
pub const SAMPLES_FORMAT: &str = "prefrl.samples/1";
pub const RM_LOG_FORMAT: &str = "prefrl.rm_log/1";
pub const PPO_LOG_FORMAT: &str = "prefrl.ppo_log/1";

/// Run identity stamped into every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldRecord {
    Answer(Vec<usize>),
    ExactLength(usize),
    Include(usize),
    Exclude(usize),
    Unverifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub id: u64,
    pub kind: String,
    pub prompt_tokens: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modal: Option<Vec<f64>>,
    pub gold: GoldRecord,
    pub gold_reward_fn: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub id: u64,
    pub prompt_tokens: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modal: Option<Vec<f64>>,
    pub chosen_tokens: Vec<usize>,
    pub rejected_tokens: Vec<usize>,
    pub domain_tag: String,
    pub source_tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub format: String,
    pub config_hash: String,
    pub seed: u64,
    pub id: u64,
    pub prompt_tokens: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modal: Option<Vec<f64>>,
    pub response_tokens: Vec<usize>,
}

fn bad(path: &Path, line: usize, msg: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r).map_err(|e| CliError::Invalid(e.to_string()))?;
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(io_err(path))
}

/// Reads `(line number, record)` pairs, skipping blank lines.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map(|r| (i + 1, r))
                .map_err(|e| bad(path, i + 1, e.to_string()))
        })
        .collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| CliError::Invalid(e.to_string()))?;
    f.write_all(b"\n").map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| bad(path, e.line(), e.to_string()))
}

fn check_format(path: &Path, line: usize, got: &str, want: &str) -> Result<()> {
    if got != want {
        return Err(bad(path, line, format!("format `{got}`, expected `{want}`")));
    }
    Ok(())
}

fn modal_of(m: &Option<ModalContext>) -> Option<Vec<f64>> {
    m.as_ref().map(|m| m.observation.clone())
}

fn modal_from(v: Option<Vec<f64>>) -> Option<ModalContext> {
    v.map(|observation| ModalContext { observation })
}

pub fn task_record(t: &SyntheticTask, prov: &Provenance) -> TaskRecord {
    let gold = match &t.gold {
        GoldAnswer::Tokens(a) => GoldRecord::Answer(a.clone()),
        GoldAnswer::Constraint(Constraint::ExactLength(k)) => GoldRecord::ExactLength(*k),
        GoldAnswer::Constraint(Constraint::Include(w)) => GoldRecord::Include(*w),
        GoldAnswer::Constraint(Constraint::Exclude(w)) => GoldRecord::Exclude(*w),
        GoldAnswer::Unverifiable => GoldRecord::Unverifiable,
    };
    TaskRecord {
        format: TASKS_FORMAT.into(),
        config_hash: prov.config_hash.clone(),
        seed: prov.seed,
        id: t.id,
        kind: t.kind.as_str().into(),
        prompt_tokens: t.prompt.clone(),
        modal: modal_of(&t.modal),
        gold,
        gold_reward_fn: t.gold_reward_fn,
    }
}

pub fn write_tasks(path: &Path, tasks: &[SyntheticTask], prov: &Provenance) -> Result<()> {
    let rows: Vec<TaskRecord> = tasks.iter().map(|t| task_record(t, prov)).collect();
    write_jsonl(path, &rows)
}

pub fn read_tasks(path: &Path) -> Result<Vec<SyntheticTask>> {
    read_jsonl::<TaskRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            check_format(path, line, &r.format, TASKS_FORMAT)?;
            let kind = TaskKind::parse(&r.kind).ok_or_else(|| bad(path, line, format!("unknown task kind `{}`", r.kind)))?;
            let gold = match r.gold {
                GoldRecord::Answer(a) => GoldAnswer::Tokens(a),
                GoldRecord::ExactLength(k) => GoldAnswer::Constraint(Constraint::ExactLength(k)),
                GoldRecord::Include(w) => GoldAnswer::Constraint(Constraint::Include(w)),
                GoldRecord::Exclude(w) => GoldAnswer::Constraint(Constraint::Exclude(w)),
                GoldRecord::Unverifiable => GoldAnswer::Unverifiable,
            };
            Ok(SyntheticTask {
                id: r.id,
                kind,
                prompt: r.prompt_tokens,
                modal: modal_from(r.modal),
                gold,
                gold_reward_fn: r.gold_reward_fn,
            })
        })
        .collect()
}

pub fn pair_record(id: u64, p: &PreferencePair, category: Option<&str>, prov: &Provenance) -> PairRecord {
    PairRecord {
        format: if category.is_some() { BENCH_FORMAT } else { PAIRS_FORMAT }.into(),
        config_hash: prov.config_hash.clone(),
        seed: prov.seed,
        id,
        prompt_tokens: p.prompt.clone(),
        modal: modal_of(&p.modal),
        chosen_tokens: p.chosen.clone(),
        rejected_tokens: p.rejected.clone(),
        domain_tag: p.domain.as_str().into(),
        source_tag: p.source.as_str().into(),
        category: category.map(String::from),
    }
}

fn pair_from(path: &Path, line: usize, r: PairRecord) -> Result<PreferencePair> {
    let domain = DomainTag::parse(&r.domain_tag).ok_or_else(|| bad(path, line, format!("unknown domain_tag `{}`", r.domain_tag)))?;
    let source = SourceTag::parse(&r.source_tag).ok_or_else(|| bad(path, line, format!("unknown source_tag `{}`", r.source_tag)))?;
    PreferencePair::new(r.prompt_tokens, modal_from(r.modal), r.chosen_tokens, r.rejected_tokens, domain, source)
        .map_err(|e| bad(path, line, e.to_string()))
}

pub fn write_pairs(path: &Path, pairs: &[PreferencePair], prov: &Provenance) -> Result<()> {
    let rows: Vec<PairRecord> = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| pair_record(i as u64, p, None, prov))
        .collect();
    write_jsonl(path, &rows)
}

pub fn read_pairs(path: &Path) -> Result<Vec<PreferencePair>> {
    read_jsonl::<PairRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            check_format(path, line, &r.format, PAIRS_FORMAT)?;
            pair_from(path, line, r)
        })
        .collect()
}

/// Benchmark rows, grouped by category in first-appearance order.
pub fn write_bench(path: &Path, categories: &[(String, Vec<PreferencePair>)], prov: &Provenance) -> Result<()> {
    let mut rows = Vec::new();
    for (name, pairs) in categories {
        for p in pairs {
            rows.push(pair_record(rows.len() as u64, p, Some(name), prov));
        }
    }
    write_jsonl(path, &rows)
}

pub fn read_bench(path: &Path) -> Result<Vec<(String, Vec<PreferencePair>)>> {
    let mut out: Vec<(String, Vec<PreferencePair>)> = Vec::new();
    for (line, r) in read_jsonl::<PairRecord>(path)? {
        check_format(path, line, &r.format, BENCH_FORMAT)?;
        let cat = r.category.clone().ok_or_else(|| bad(path, line, "missing category"))?;
        let pair = pair_from(path, line, r)?;
        match out.iter_mut().find(|(c, _)| *c == cat) {
            Some((_, v)) => v.push(pair),
            None => out.push((cat, vec![pair])),
        }
    }
    Ok(out)
}

pub fn write_samples(path: &Path, samples: &[CleanSample], prov: &Provenance) -> Result<()> {
    let rows: Vec<SampleRecord> = samples
        .iter()
        .map(|s| SampleRecord {
            format: SAMPLES_FORMAT.into(),
            config_hash: prov.config_hash.clone(),
            seed: prov.seed,
            id: s.id,
            prompt_tokens: s.sample.prompt.clone(),
            modal: modal_of(&s.sample.modal),
            response_tokens: s.sample.response.clone(),
        })
        .collect();
    write_jsonl(path, &rows)
}

pub fn read_samples(path: &Path) -> Result<Vec<CleanSample>> {
    read_jsonl::<SampleRecord>(path)?
        .into_iter()
        .map(|(line, r)| {
            check_format(path, line, &r.format, SAMPLES_FORMAT)?;
            Ok(CleanSample {
                id: r.id,
                sample: SequenceSample::new(r.prompt_tokens, r.response_tokens, modal_from(r.modal)),
            })
        })
        .collect()
}
