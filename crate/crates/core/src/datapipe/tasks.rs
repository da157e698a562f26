//! Synthetic tasks with a hidden gold reward.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::model::{ModalContext, Prompt};
use crate::reward::DomainTag;
use crate::rng::{self, StreamRng};
use crate::vocab::{self, DELIM, FILLER, STOP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TaskKind {
    Arithmetic,
    InstructionConstraint,
    ModalCount,
    FreeformGold,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Arithmetic,
        TaskKind::InstructionConstraint,
        TaskKind::ModalCount,
        TaskKind::FreeformGold,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Arithmetic => "arithmetic",
            TaskKind::InstructionConstraint => "instruction_constraint",
            TaskKind::ModalCount => "modal_count",
            TaskKind::FreeformGold => "freeform_gold",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    pub fn domain(self) -> DomainTag {
        match self {
            TaskKind::Arithmetic => DomainTag::Reasoning,
            TaskKind::InstructionConstraint => DomainTag::InstructionFollowing,
            TaskKind::ModalCount => DomainTag::VideoSurrogate,
            TaskKind::FreeformGold => DomainTag::General,
        }
    }

    pub fn verifiable(self) -> bool {
        self != TaskKind::FreeformGold
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Exactly `k` content tokens before the stop token.
    ExactLength(usize),
    /// The token must occur in the content.
    Include(usize),
    /// The token must not occur, and the content must be non-empty.
    Exclude(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoldAnswer {
    /// Canonical answer span following the delimiter.
    Tokens(Vec<usize>),
    Constraint(Constraint),
    /// Freeform tasks are judged only by the gold reward.
    Unverifiable,
}

/// Identifier of the hidden gold reward function.
pub const GOLD_REWARD_V1: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub id: u64,
    pub kind: TaskKind,
    pub prompt: Vec<usize>,
    pub modal: Option<ModalContext>,
    pub gold: GoldAnswer,
    pub gold_reward_fn: u32,
}

impl SyntheticTask {
    pub fn prompt(&self) -> Prompt {
        Prompt::new(self.prompt.clone(), self.modal.clone())
    }
}

pub const MAX_OPERAND: usize = 4;
pub const MAX_COUNT: usize = 4;
pub const MAX_EXACT_LEN: usize = 4;
/// Weight of correctness in the raw gold reward.
pub const CORRECTNESS_BONUS: f64 = 4.0;
/// Scale of the style functional for freeform tasks.
pub const FREEFORM_SCALE: f64 = 3.0;

/// Relative frequency of each task kind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskMix {
    pub arithmetic: f64,
    pub instruction_constraint: f64,
    pub modal_count: f64,
    pub freeform_gold: f64,
}

impl Default for TaskMix {
    fn default() -> Self {
        Self {
            arithmetic: 1.0,
            instruction_constraint: 1.0,
            modal_count: 1.0,
            freeform_gold: 1.0,
        }
    }
}

impl TaskMix {
    pub fn only(kind: TaskKind) -> Self {
        let mut m = Self {
            arithmetic: 0.0,
            instruction_constraint: 0.0,
            modal_count: 0.0,
            freeform_gold: 0.0,
        };
        *m.weight_mut(kind) = 1.0;
        m
    }

    pub fn weight(&self, kind: TaskKind) -> f64 {
        match kind {
            TaskKind::Arithmetic => self.arithmetic,
            TaskKind::InstructionConstraint => self.instruction_constraint,
            TaskKind::ModalCount => self.modal_count,
            TaskKind::FreeformGold => self.freeform_gold,
        }
    }

    pub fn weight_mut(&mut self, kind: TaskKind) -> &mut f64 {
        match kind {
            TaskKind::Arithmetic => &mut self.arithmetic,
            TaskKind::InstructionConstraint => &mut self.instruction_constraint,
            TaskKind::ModalCount => &mut self.modal_count,
            TaskKind::FreeformGold => &mut self.freeform_gold,
        }
    }

    fn pick(&self, rng: &mut StreamRng) -> Result<TaskKind> {
        let total: f64 = TaskKind::ALL.iter().map(|&k| self.weight(k)).sum();
        if TaskKind::ALL.iter().any(|&k| self.weight(k) < 0.0) || !(total > 0.0) {
            return Err(invalid("task mix weights must be non-negative with a positive sum"));
        }
        let u: f64 = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for k in TaskKind::ALL {
            acc += self.weight(k);
            if u < acc && self.weight(k) > 0.0 {
                return Ok(k);
            }
        }
        Ok(*TaskKind::ALL.iter().rev().find(|&&k| self.weight(k) > 0.0).unwrap())
    }
}

/// Observation whose first `MAX_COUNT + 1` coordinates one-hot encode `count`.
pub fn count_observation(count: usize, modal_dim: usize, rng: &mut StreamRng) -> ModalContext {
    let mut obs = vec![0.0; modal_dim];
    for v in obs.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = 0.05 * z;
    }
    obs[count] += 1.0;
    ModalContext { observation: obs }
}

pub fn make_task(id: u64, kind: TaskKind, modal_dim: usize, rng: &mut StreamRng) -> SyntheticTask {
    let (prompt, modal, gold) = match kind {
        TaskKind::Arithmetic => {
            let a = rng.random_range(0..=MAX_OPERAND);
            let b = rng.random_range(0..=MAX_OPERAND);
            (
                vec![vocab::TASK_ARITH, vocab::digit(a), vocab::PLUS, vocab::digit(b)],
                None,
                GoldAnswer::Tokens(vec![vocab::digit(a + b)]),
            )
        }
        TaskKind::InstructionConstraint => {
            let c = match rng.random_range(0..3) {
                0 => Constraint::ExactLength(rng.random_range(1..=MAX_EXACT_LEN)),
                1 => Constraint::Include(vocab::word(rng.random_range(0..vocab::NUM_WORDS))),
                _ => Constraint::Exclude(vocab::word(rng.random_range(0..vocab::NUM_WORDS))),
            };
            let prompt = match c {
                Constraint::ExactLength(k) => vec![vocab::TASK_LEN, vocab::digit(k)],
                Constraint::Include(w) => vec![vocab::TASK_INCLUDE, w],
                Constraint::Exclude(w) => vec![vocab::TASK_EXCLUDE, w],
            };
            (prompt, None, GoldAnswer::Constraint(c))
        }
        TaskKind::ModalCount => {
            let c = rng.random_range(0..=MAX_COUNT);
            (
                vec![vocab::TASK_COUNT],
                Some(count_observation(c, modal_dim, rng)),
                GoldAnswer::Tokens(vec![vocab::digit(c)]),
            )
        }
        TaskKind::FreeformGold => {
            let w = vocab::word(rng.random_range(0..vocab::NUM_WORDS));
            (vec![vocab::TASK_FREE, w], None, GoldAnswer::Unverifiable)
        }
    };
    SyntheticTask {
        id,
        kind,
        prompt,
        modal,
        gold,
        gold_reward_fn: GOLD_REWARD_V1,
    }
}

/// `n` tasks; task `i` is drawn from its own substream of `seed`.
pub fn generate_tasks(n: usize, mix: &TaskMix, modal_dim: usize, seed: u64) -> Result<Vec<SyntheticTask>> {
    if modal_dim <= MAX_COUNT {
        return Err(invalid("modal_dim must exceed the largest count"));
    }
    (0..n as u64)
        .map(|i| {
            let mut r = rng::substream(seed, "task", i);
            let kind = mix.pick(&mut r)?;
            Ok(make_task(i, kind, modal_dim, &mut r))
        })
        .collect()
}

/// Fixed style weight of every token: uniform in `[-1, 1]` for content words, 0 otherwise.
pub fn style_weight(tok: usize) -> f64 {
    if !vocab::is_word(tok) {
        return 0.0;
    }
    let bits = rng::derive_seed(0x5EED_601D, "gold/style", tok as u64);
    (bits >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Mean style weight over non-filler content tokens (0 when there are none).
pub fn style_score(response: &[usize]) -> f64 {
    let toks: Vec<usize> = vocab::content(response)
        .iter()
        .copied()
        .filter(|&t| t != FILLER)
        .collect();
    if toks.is_empty() {
        return 0.0;
    }
    toks.iter().map(|&t| style_weight(t)).sum::<f64>() / toks.len() as f64
}

/// Unnormalized hidden gold reward.
pub fn gold_reward_raw(task: &SyntheticTask, response: &[usize]) -> f64 {
    let style = style_score(response);
    match task.kind {
        TaskKind::FreeformGold => FREEFORM_SCALE * style,
        _ => {
            let ok = super::verify(task, response).unwrap_or(false);
            CORRECTNESS_BONUS * ok as u8 as f64 + style
        }
    }
}

/// Gold reward mapped affinely onto `[0, 1]`.
pub fn gold_reward(task: &SyntheticTask, response: &[usize]) -> f64 {
    let raw = gold_reward_raw(task, response);
    match task.kind {
        TaskKind::FreeformGold => (raw / FREEFORM_SCALE + 1.0) / 2.0,
        _ => (raw + 1.0) / (CORRECTNESS_BONUS + 2.0),
    }
}

/// Content words sorted by decreasing style weight.
pub fn words_by_style() -> Vec<usize> {
    let mut w: Vec<usize> = (0..vocab::NUM_WORDS).map(vocab::word).collect();
    w.sort_by(|a, b| style_weight(*b).partial_cmp(&style_weight(*a)).unwrap());
    w
}

/// A canonical response that passes the task's verifier.
pub fn gold_response(task: &SyntheticTask) -> Vec<usize> {
    let ranked = words_by_style();
    match &task.gold {
        GoldAnswer::Tokens(ans) => {
            let mut r = vec![DELIM];
            r.extend_from_slice(ans);
            r.push(STOP);
            r
        }
        GoldAnswer::Constraint(Constraint::ExactLength(k)) => {
            let mut r = vec![ranked[0]; *k];
            r.push(STOP);
            r
        }
        GoldAnswer::Constraint(Constraint::Include(w)) => vec![*w, STOP],
        GoldAnswer::Constraint(Constraint::Exclude(w)) => {
            let best = *ranked.iter().find(|&&t| t != *w).unwrap();
            vec![best, STOP]
        }
        GoldAnswer::Unverifiable => vec![ranked[0], STOP],
    }
}

fn random_words(rng: &mut StreamRng, n: usize) -> Vec<usize> {
    (0..n)
        .map(|_| vocab::word(rng.random_range(0..vocab::NUM_WORDS)))
        .collect()
}

/// Share of wrong answer-task demonstrations whose answer span is empty.
pub const MALFORMED_FRACTION: f64 = 0.25;

/// A noisy demonstration: correct with probability `p_correct`, otherwise a
/// usually wrong response, sometimes with an empty answer span.
pub fn demonstration(task: &SyntheticTask, p_correct: f64, rng: &mut StreamRng) -> Vec<usize> {
    let correct = rng.random::<f64>() < p_correct;
    let mut r = match &task.gold {
        GoldAnswer::Tokens(ans) => {
            let a = if correct {
                ans.clone()
            } else if rng.random::<f64>() < MALFORMED_FRACTION {
                Vec::new()
            } else {
                vec![vocab::digit(rng.random_range(0..=2 * MAX_OPERAND))]
            };
            let mut r = vec![DELIM];
            r.extend(a);
            r
        }
        GoldAnswer::Constraint(Constraint::ExactLength(k)) => {
            let n = if correct { *k } else { rng.random_range(1..=MAX_EXACT_LEN + 1) };
            random_words(rng, n)
        }
        GoldAnswer::Constraint(Constraint::Include(w)) => {
            let n = rng.random_range(1..=3);
            let mut r = random_words(rng, n);
            if correct {
                let at = rng.random_range(0..n);
                r[at] = *w;
            }
            r
        }
        GoldAnswer::Constraint(Constraint::Exclude(w)) => {
            let n = rng.random_range(1..=3);
            let mut r = random_words(rng, n);
            if !correct {
                let at = rng.random_range(0..n);
                r[at] = *w;
            }
            r
        }
        GoldAnswer::Unverifiable => {
            let n = rng.random_range(1..=4);
            random_words(rng, n)
        }
    };
    r.push(STOP);
    r
}

/// Inserts `n` filler tokens before the trailing stop token (or at the end).
pub fn pad_with_filler(response: &[usize], n: usize) -> Vec<usize> {
    let mut out = response.to_vec();
    let at = if out.last() == Some(&STOP) { out.len() - 1 } else { out.len() };
    out.splice(at..at, core::iter::repeat_n(FILLER, n));
    out
}
