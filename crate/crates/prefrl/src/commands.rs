//! One function per pipeline stage. Each reads its inputs from the run
//! directories, writes its outputs there, and returns a one-line summary.

use std::path::{Path, PathBuf};

use prefrl_core::autodiff::ModelParams;
use prefrl_core::datapipe::{
    build_pairs_with, clean_dataset, corpus_with_corruption, demonstration, generate_tasks, gold_reward,
    GoldRewardJudge, JudgeKind, PairJudge, SyntheticTask, Threshold, VerifierJudge,
};
use prefrl_core::evalbench::{evaluate_rm, length_bias_probe, BenchReport, BenchmarkSet};
use prefrl_core::model::{self, SequenceSample};
use prefrl_core::reward::{train_reward_model, train_reward_model_from, DomainTag, PreferencePair};
use prefrl_core::rl::{ppo_train, sft_train};
use prefrl_core::rng;
use prefrl_core::sampling::{best_of_n, generate};
use prefrl_core::vocab;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde_json::{json, Value as Json};

use crate::checkpoint::{self, Checkpoint, CheckpointMeta};
use crate::config::{PolicyChoice, ProbeSource, RunConfig, RunDirs};
use crate::error::{CliError, Result};
use crate::formats::{self, Provenance};
use crate::lock::DirLock;
use crate::report;
use crate::threads;

pub const TASKS_FILE: &str = "tasks.jsonl";
pub const PAIRS_FILE: &str = "pairs.jsonl";
pub const BENCH_FILE: &str = "bench.jsonl";
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const POLICY_SFT: &str = "policy_sft.prfl";
pub const POLICY_PPO: &str = "policy_ppo.prfl";
pub const RM_CKPT: &str = "rm.prfl";
pub const CRITIC_CKPT: &str = "critic.prfl";
pub const SFT_LOG: &str = "sft_log.jsonl";
pub const PREFS_REPORT: &str = "prefs_report.json";
pub const RM_LOG: &str = "rm_log.jsonl";
pub const BENCH_REPORT: &str = "bench_report.json";
pub const BENCH_TABLE: &str = "bench_report.txt";
pub const PPO_LOG: &str = "ppo_log.jsonl";
pub const SAMPLES_REPORT: &str = "samples.json";
pub const BON_REPORT: &str = "bon.json";
pub const CLEAN_REPORT: &str = "cleaning_report.json";
pub const PROBE_REPORT: &str = "length_probe.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GenTasks,
    BuildPrefs,
    TrainRm,
    EvalRm,
    TrainPpo,
    Sample,
    Bon,
    CleanData,
    ProbeLength,
}

impl Command {
    pub const ALL: [Command; 9] = [
        Command::GenTasks,
        Command::BuildPrefs,
        Command::TrainRm,
        Command::EvalRm,
        Command::TrainPpo,
        Command::Sample,
        Command::Bon,
        Command::CleanData,
        Command::ProbeLength,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::GenTasks => "gen-tasks",
            Command::BuildPrefs => "build-prefs",
            Command::TrainRm => "train-rm",
            Command::EvalRm => "eval-rm",
            Command::TrainPpo => "train-ppo",
            Command::Sample => "sample",
            Command::Bon => "bon",
            Command::CleanData => "clean-data",
            Command::ProbeLength => "probe-length",
        }
    }
}

/// Resolved configuration, directories, and provenance for one invocation.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub dirs: RunDirs,
    pub prov: Provenance,
}

impl Context {
    pub fn new(cfg: RunConfig, out: &Path) -> Result<Self> {
        cfg.validate()?;
        let dirs = RunDirs::resolve(&cfg, out);
        let prov = Provenance {
            config_hash: cfg.hash(),
            seed: cfg.seed,
        };
        Ok(Self { cfg, dirs, prov })
    }

    fn data(&self, f: &str) -> PathBuf {
        self.dirs.data.join(f)
    }
    fn ckpt(&self, f: &str) -> PathBuf {
        self.dirs.checkpoints.join(f)
    }
    fn report(&self, f: &str) -> PathBuf {
        self.dirs.reports.join(f)
    }

    /// Seed for a stage, derived from the run seed by name.
    fn stage_seed(&self, stage: &str) -> u64 {
        rng::derive_seed(self.cfg.seed, stage, 0)
    }

    fn meta(&self) -> CheckpointMeta {
        CheckpointMeta {
            seed: self.cfg.seed,
            config_hash: self.cfg.hash_u64(),
        }
    }

    fn save(&self, file: &str, params: &ModelParams) -> Result<()> {
        checkpoint::save(
            &self.ckpt(file),
            &Checkpoint {
                params: params.clone(),
                meta: Some(self.meta()),
            },
        )
    }

    fn load(&self, file: &str) -> Result<ModelParams> {
        Ok(checkpoint::load(&self.ckpt(file))?.params)
    }

    /// Report header shared by all JSON documents.
    fn header(&self, format: &str) -> serde_json::Map<String, Json> {
        let mut m = serde_json::Map::new();
        m.insert("format".into(), json!(format));
        m.insert("config_hash".into(), json!(self.prov.config_hash));
        m.insert("seed".into(), json!(self.prov.seed));
        m
    }

    fn tasks(&self) -> Result<Vec<SyntheticTask>> {
        let path = self.data(TASKS_FILE);
        if !path.exists() {
            return Err(CliError::Invalid(format!("{} not found; run gen-tasks first", path.display())));
        }
        formats::read_tasks(&path)
    }

    fn policy_file(choice: PolicyChoice) -> &'static str {
        match choice {
            PolicyChoice::Sft => POLICY_SFT,
            PolicyChoice::Ppo => POLICY_PPO,
        }
    }
}

pub fn run(cmd: Command, ctx: &Context) -> Result<String> {
    ctx.dirs.create()?;
    match cmd {
        Command::GenTasks => gen_tasks(ctx),
        Command::BuildPrefs => build_prefs(ctx),
        Command::TrainRm => train_rm(ctx),
        Command::EvalRm => eval_rm(ctx),
        Command::TrainPpo => train_ppo(ctx),
        Command::Sample => sample(ctx),
        Command::Bon => bon(ctx),
        Command::CleanData => clean_data(ctx),
        Command::ProbeLength => probe_length(ctx),
    }
}

fn tail<T>(v: &[T], n: usize) -> &[T] {
    &v[v.len().saturating_sub(n)..]
}

fn render(tokens: &[usize]) -> String {
    tokens.iter().map(|&t| vocab::render(t)).collect::<Vec<_>>().join(" ")
}

/// Synthetic tasks plus the SFT warm-start policy trained on noisy demonstrations.
pub fn gen_tasks(ctx: &Context) -> Result<String> {
    let cfg = &ctx.cfg;
    let _lock = DirLock::acquire(&ctx.dirs.checkpoints)?;
    let seed = ctx.stage_seed("gen-tasks");
    let tasks = generate_tasks(cfg.tasks.count, &cfg.tasks.mix, cfg.dims.modal_dim, seed)?;
    let mut demo_rng = rng::substream(seed, "demos", 0);
    let demos: Vec<SequenceSample> = tasks[..cfg.sft.demos.min(tasks.len())]
        .iter()
        .map(|t| t.prompt().with_response(demonstration(t, cfg.sft.p_correct, &mut demo_rng)))
        .collect();
    let init = model::init_params(&cfg.dims, &mut rng::substream(seed, "policy/init", 0));
    let (policy, losses) = if cfg.sft.steps == 0 || demos.is_empty() {
        (init, Vec::new())
    } else {
        sft_train(init, &demos, &cfg.sft_config(), seed)?
    };
    formats::write_tasks(&ctx.data(TASKS_FILE), &tasks, &ctx.prov)?;
    let log: Vec<Json> = losses
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut m = ctx.header("prefrl.sft_log/1");
            m.insert("step".into(), json!(i + 1));
            m.insert("loss".into(), json!(l));
            Json::Object(m)
        })
        .collect();
    formats::write_jsonl(&ctx.report(SFT_LOG), &log)?;
    ctx.save(POLICY_SFT, &policy)?;
    let loss = match (losses.first(), losses.last()) {
        (Some(a), Some(b)) => format!("sft loss {a:.4} -> {b:.4}"),
        _ => "no sft".into(),
    };
    Ok(format!(
        "gen-tasks: {} tasks, {} demos, {loss}; wrote {}",
        tasks.len(),
        demos.len(),
        ctx.ckpt(POLICY_SFT).display()
    ))
}

/// Candidate sampling, judging, and the train/benchmark split.
pub fn build_prefs(ctx: &Context) -> Result<String> {
    let cfg = &ctx.cfg;
    let tasks = ctx.tasks()?;
    let policy = ctx.load(POLICY_SFT)?;
    let seed = ctx.stage_seed("build-prefs");
    let verifier = VerifierJudge {
        gold_fallback: cfg.prefs.gold_fallback,
    };
    let judge: &dyn PairJudge = match cfg.prefs.judge {
        JudgeKind::Verifier => &verifier,
        JudgeKind::GoldReward => &GoldRewardJudge,
    };
    let used = &tasks[..cfg.prefs.tasks.min(tasks.len())];
    let built = build_pairs_with(&policy, used, cfg.prefs.k_candidates, judge, &cfg.decode, seed)?;

    let mut order: Vec<usize> = (0..built.pairs.len()).collect();
    order.shuffle(&mut rng::substream(seed, "split", 0));
    let n_bench = (built.pairs.len() as f64 * cfg.prefs.bench_fraction).round() as usize;
    let n_bench = n_bench.min(built.pairs.len().saturating_sub(2));
    let mut bench_idx = order[..n_bench].to_vec();
    bench_idx.sort_unstable();
    let mut train_idx = order[n_bench..].to_vec();
    train_idx.sort_unstable();
    let train: Vec<PreferencePair> = train_idx.iter().map(|&i| built.pairs[i].clone()).collect();
    let mut categories: Vec<(String, Vec<PreferencePair>)> = Vec::new();
    for d in DomainTag::ALL {
        let members: Vec<PreferencePair> = bench_idx
            .iter()
            .map(|&i| &built.pairs[i])
            .filter(|p| p.domain == d)
            .cloned()
            .collect();
        if !members.is_empty() {
            categories.push((d.as_str().into(), members));
        }
    }

    formats::write_pairs(&ctx.data(PAIRS_FILE), &train, &ctx.prov)?;
    formats::write_bench(&ctx.data(BENCH_FILE), &categories, &ctx.prov)?;
    let mut rep = ctx.header("prefrl.prefs_report/1");
    rep.insert("tasks".into(), json!(used.len()));
    rep.insert("pairs".into(), json!(built.pairs.len()));
    rep.insert("train_pairs".into(), json!(train.len()));
    rep.insert("bench_pairs".into(), json!(n_bench));
    rep.insert("skipped".into(), json!(built.skipped.len()));
    rep.insert("skipped_ids".into(), json!(built.skipped));
    formats::write_json(&ctx.report(PREFS_REPORT), &Json::Object(rep))?;
    Ok(format!(
        "build-prefs: {} pairs from {} tasks ({} skipped), {} train / {} bench",
        built.pairs.len(),
        used.len(),
        built.skipped.len(),
        train.len(),
        n_bench
    ))
}

pub fn train_rm(ctx: &Context) -> Result<String> {
    let cfg = &ctx.cfg;
    let _lock = DirLock::acquire(&ctx.dirs.checkpoints)?;
    let pairs = formats::read_pairs(&ctx.data(PAIRS_FILE))?;
    let seed = ctx.stage_seed("train-rm");
    let rm_cfg = cfg.rm_config();
    let out = match cfg.rm.init {
        crate::config::RmInit::Scratch => train_reward_model(&pairs, &rm_cfg, seed)?,
        crate::config::RmInit::Policy => {
            let policy = ctx.load(POLICY_SFT)?;
            let init = model::reward_from_policy(&policy, &mut rng::substream(seed, "rm/head", 0))?;
            train_reward_model_from(init, &pairs, &rm_cfg, seed)?
        }
    };
    let log: Vec<Json> = out
        .log
        .iter()
        .map(|e| {
            let mut m = ctx.header(formats::RM_LOG_FORMAT);
            m.insert("step".into(), json!(e.step));
            m.insert("loss".into(), json!(e.loss));
            m.insert("heldout_acc".into(), json!(e.heldout_acc));
            m.insert("lr".into(), json!(e.lr));
            Json::Object(m)
        })
        .collect();
    formats::write_jsonl(&ctx.report(RM_LOG), &log)?;
    ctx.save(RM_CKPT, &out.params)?;
    let acc = out.log.iter().rev().find_map(|e| e.heldout_acc).unwrap_or(f64::NAN);
    Ok(format!(
        "train-rm: {} steps on {} pairs ({} held out, {} removed by length filter), held-out acc {acc:.4}",
        out.log.len(),
        out.train_pairs,
        out.heldout_pairs,
        out.removed_by_length_filter
    ))
}

pub fn bench_report_json(ctx: &Context, r: &BenchReport) -> Json {
    let mut m = ctx.header("prefrl.bench_report/1");
    let cats: Vec<Json> = r
        .categories
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "pairs": c.pairs,
                "correct": c.correct,
                "accuracy": c.accuracy,
                "mean_chosen_len": c.mean_chosen_len,
                "mean_rejected_len": c.mean_rejected_len,
            })
        })
        .collect();
    m.insert("categories".into(), Json::Array(cats));
    m.insert("overall_acc".into(), json!(r.overall_acc));
    m.insert("macro_acc".into(), json!(r.macro_acc));
    m.insert("tie_convention".into(), json!("ties count as incorrect"));
    Json::Object(m)
}

pub fn eval_rm(ctx: &Context) -> Result<String> {
    let rm = ctx.load(RM_CKPT)?;
    let bench = BenchmarkSet::new(formats::read_bench(&ctx.data(BENCH_FILE))?)?;
    let r = evaluate_rm(&rm, &bench, ctx.cfg.pooling)?;
    formats::write_json(&ctx.report(BENCH_REPORT), &bench_report_json(ctx, &r))?;
    let table = report::bench_table(&r);
    std::fs::write(ctx.report(BENCH_TABLE), &table).map_err(crate::error::io_err(ctx.report(BENCH_TABLE)))?;
    Ok(format!(
        "eval-rm: {} categories, overall {:.4}, macro {:.4}",
        r.categories.len(),
        r.overall_acc,
        r.macro_acc
    ))
}

pub fn train_ppo(ctx: &Context) -> Result<String> {
    let cfg = &ctx.cfg;
    let _lock = DirLock::acquire(&ctx.dirs.checkpoints)?;
    let tasks = ctx.tasks()?;
    let policy = ctx.load(POLICY_SFT)?;
    let rm = ctx.load(RM_CKPT)?;
    let prompts = &tasks[..cfg.ppo.prompts.min(tasks.len())];
    let out = ppo_train(&policy, &rm, &policy, prompts, &cfg.ppo_config(), ctx.stage_seed("train-ppo"))?;
    let log: Vec<Json> = out
        .log
        .iter()
        .map(|e| {
            let mut m = ctx.header(formats::PPO_LOG_FORMAT);
            m.insert("update".into(), json!(e.update));
            m.insert("mean_reward_rm".into(), json!(e.mean_reward_rm));
            m.insert("mean_reward_gold".into(), json!(e.mean_reward_gold));
            m.insert("mean_kl".into(), json!(e.mean_kl));
            m.insert("mean_len".into(), json!(e.mean_len));
            m.insert("policy_loss".into(), json!(e.policy_loss));
            m.insert("critic_loss".into(), json!(e.critic_loss));
            Json::Object(m)
        })
        .collect();
    formats::write_jsonl(&ctx.report(PPO_LOG), &log)?;
    ctx.save(POLICY_PPO, &out.policy)?;
    ctx.save(CRITIC_CKPT, &out.critic)?;
    let summary = match (out.log.first(), out.log.last()) {
        (Some(a), Some(b)) => format!(
            "rm reward {:.4} -> {:.4}, gold {:.4} -> {:.4}",
            a.mean_reward_rm,
            b.mean_reward_rm,
            a.mean_reward_gold.unwrap_or(f64::NAN),
            b.mean_reward_gold.unwrap_or(f64::NAN)
        ),
        _ => "no updates".into(),
    };
    Ok(format!("train-ppo: {} updates on {} prompts, {summary}", out.log.len(), prompts.len()))
}

/// Per-task decoding seed shared by `sample` and `bon`, so that
/// `bon` with `n = 1` reproduces `sample`.
pub fn decode_seed(cfg: &RunConfig, task: &SyntheticTask) -> u64 {
    rng::derive_seed(cfg.seed, "decode", task.id)
}

pub fn sample(ctx: &Context) -> Result<String> {
    let cfg = &ctx.cfg;
    let tasks = ctx.tasks()?;
    let policy = ctx.load(Context::policy_file(cfg.sample.policy))?;
    let chosen = tail(&tasks, cfg.sample.prompts);
    let rows: Vec<Result<Json>> = threads::pool().install(|| {
        chosen
            .par_iter()
            .map(|t| {
                let seed = decode_seed(cfg, t);
                let resp = generate(&policy, &t.prompt(), &cfg.decode, seed)?;
                Ok(json!({
                    "task_id": t.id,
                    "seed": seed,
                    "response_tokens": resp,
                    "text": render(&resp),
                    "gold_reward": gold_reward(t, &resp),
                }))
            })
            .collect()
    });
    let rows: Vec<Json> = rows.into_iter().collect::<Result<_>>()?;
    let mean = mean_of(&rows, "gold_reward");
    let mut m = ctx.header("prefrl.samples/1");
    m.insert("policy".into(), json!(policy_name(cfg.sample.policy)));
    m.insert("mean_gold_reward".into(), json!(mean));
    m.insert("samples".into(), Json::Array(rows));
    formats::write_json(&ctx.report(SAMPLES_REPORT), &Json::Object(m))?;
    Ok(format!("sample: {} prompts, mean gold reward {mean:.4}", chosen.len()))
}

fn policy_name(p: PolicyChoice) -> &'static str {
    match p {
        PolicyChoice::Sft => "sft",
        PolicyChoice::Ppo => "ppo",
    }
}

fn mean_of(rows: &[Json], key: &str) -> f64 {
    rows.iter().map(|r| r[key].as_f64().unwrap_or(0.0)).sum::<f64>() / rows.len().max(1) as f64
}

pub fn bon(ctx: &Context) -> Result<String> {
    let cfg = &ctx.cfg;
    let tasks = ctx.tasks()?;
    let policy = ctx.load(Context::policy_file(cfg.bon.policy))?;
    let rm = ctx.load(RM_CKPT)?;
    let chosen = tail(&tasks, cfg.bon.prompts);
    let rows: Vec<Result<Json>> = threads::pool().install(|| {
        chosen
            .par_iter()
            .map(|t| {
                let b = best_of_n(&policy, &rm, &t.prompt(), cfg.bon.n, &cfg.decode, decode_seed(cfg, t), cfg.pooling)?;
                let cands: Vec<Json> = b
                    .candidates
                    .iter()
                    .map(|c| {
                        json!({
                            "response_tokens": c.response,
                            "text": render(&c.response),
                            "rm_score": c.rm_score,
                            "seed": c.seed,
                            "len": c.len,
                            "gold_reward": gold_reward(t, &c.response),
                        })
                    })
                    .collect();
                let w = b.best();
                Ok(json!({
                    "task_id": t.id,
                    "winner": b.winner,
                    "response_tokens": w.response,
                    "rm_score": w.rm_score,
                    "gold_reward": gold_reward(t, &w.response),
                    "candidates": cands,
                }))
            })
            .collect()
    });
    let rows: Vec<Json> = rows.into_iter().collect::<Result<_>>()?;
    let mean = mean_of(&rows, "gold_reward");
    let mut m = ctx.header("prefrl.bon/1");
    m.insert("n".into(), json!(cfg.bon.n));
    m.insert("policy".into(), json!(policy_name(cfg.bon.policy)));
    m.insert("mean_gold_reward".into(), json!(mean));
    m.insert("results".into(), Json::Array(rows));
    formats::write_json(&ctx.report(BON_REPORT), &Json::Object(m))?;
    Ok(format!("bon: n={} over {} prompts, mean winner gold reward {mean:.4}", cfg.bon.n, chosen.len()))
}

fn threshold_json(t: Threshold) -> Json {
    match t {
        Threshold::Percentile(p) => json!({"percentile": p}),
        Threshold::Absolute(x) => json!({"absolute": x}),
    }
}

pub fn clean_data(ctx: &Context) -> Result<String> {
    let cfg = &ctx.cfg;
    let rm = ctx.load(RM_CKPT)?;
    let (samples, injected) = if cfg.clean.input.is_empty() {
        let tasks = ctx.tasks()?;
        let (s, bad) = corpus_with_corruption(&tasks, cfg.clean.corrupt_fraction, cfg.dims.modal_dim, ctx.stage_seed("clean-data"))?;
        formats::write_samples(&ctx.data(CORPUS_FILE), &s, &ctx.prov)?;
        (s, Some(bad))
    } else {
        (formats::read_samples(Path::new(&cfg.clean.input))?, None)
    };
    let rep = clean_dataset(&rm, &samples, cfg.clean.threshold, cfg.pooling)?;
    let s = &rep.summary;
    let mut m = ctx.header("prefrl.cleaning_report/1");
    m.insert("threshold_spec".into(), threshold_json(rep.threshold_spec));
    m.insert("threshold".into(), json!(rep.threshold));
    m.insert(
        "summary".into(),
        json!({
            "count": s.count, "min": s.min, "max": s.max, "mean": s.mean, "median": s.median,
            "p05": s.p05, "p25": s.p25, "p75": s.p75, "p95": s.p95,
        }),
    );
    m.insert("flagged".into(), json!(rep.flagged));
    m.insert(
        "scores".into(),
        Json::Array(rep.scores.iter().map(|(id, v)| json!({"id": id, "rm_score": v})).collect()),
    );
    let mut recall_note = String::new();
    if let Some(bad) = &injected {
        let hits = bad.iter().filter(|(id, _)| rep.flagged.contains(id)).count();
        let recall = hits as f64 / bad.len().max(1) as f64;
        m.insert(
            "injected".into(),
            Json::Array(bad.iter().map(|(id, c)| json!({"id": id, "kind": format!("{c:?}")})).collect()),
        );
        m.insert("recall".into(), json!(recall));
        recall_note = format!(", recall of {} injected {recall:.4}", bad.len());
    }
    formats::write_json(&ctx.report(CLEAN_REPORT), &Json::Object(m))?;
    Ok(format!(
        "clean-data: {} samples, {} flagged below {:.4}{recall_note}",
        samples.len(),
        rep.flagged.len(),
        rep.threshold
    ))
}

pub fn probe_length(ctx: &Context) -> Result<String> {
    let cfg = &ctx.cfg;
    let rm = ctx.load(RM_CKPT)?;
    let pairs: Vec<PreferencePair> = match cfg.probe.source {
        ProbeSource::Pairs => formats::read_pairs(&ctx.data(PAIRS_FILE))?,
        ProbeSource::Bench => formats::read_bench(&ctx.data(BENCH_FILE))?
            .into_iter()
            .flat_map(|(_, v)| v)
            .collect(),
    };
    let r = length_bias_probe(&rm, &pairs, cfg.probe.padding, cfg.pooling)?;
    let mut m = ctx.header("prefrl.length_probe/1");
    m.insert("pairs".into(), json!(r.pairs));
    m.insert("padding".into(), json!(r.padding));
    m.insert("filler_token".into(), json!(vocab::FILLER));
    m.insert("mean_delta".into(), json!(r.mean_delta));
    m.insert("flip_fraction".into(), json!(r.flip_fraction));
    formats::write_json(&ctx.report(PROBE_REPORT), &Json::Object(m))?;
    Ok(format!(
        "probe-length: {} pairs, padding {}, mean delta {:.4}, flip fraction {:.4}",
        r.pairs, r.padding, r.mean_delta, r.flip_fraction
    ))
}
