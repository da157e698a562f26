//! Bradley-Terry reward-model training.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, ModelParams, Var};
use crate::datapipe::length_filter;
use crate::error::{invalid, Error, Result};
use crate::model::{self, ModalContext, ModelDims, Net, Pooling, SequenceSample};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DomainTag {
    General,
    TextRich,
    Reasoning,
    InstructionFollowing,
    VideoSurrogate,
}

impl DomainTag {
    pub const ALL: [DomainTag; 5] = [
        DomainTag::General,
        DomainTag::TextRich,
        DomainTag::Reasoning,
        DomainTag::InstructionFollowing,
        DomainTag::VideoSurrogate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DomainTag::General => "general",
            DomainTag::TextRich => "text_rich",
            DomainTag::Reasoning => "reasoning",
            DomainTag::InstructionFollowing => "instruction_following",
            DomainTag::VideoSurrogate => "video_surrogate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SourceTag {
    Judge,
    Verifier,
    SyntheticGold,
}

impl SourceTag {
    pub const ALL: [SourceTag; 3] = [SourceTag::Judge, SourceTag::Verifier, SourceTag::SyntheticGold];

    pub fn as_str(self) -> &'static str {
        match self {
            SourceTag::Judge => "judge",
            SourceTag::Verifier => "verifier",
            SourceTag::SyntheticGold => "synthetic_gold",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.as_str() == s)
    }
}

/// A prompt with a chosen (`y_w`) and a rejected (`y_l`) response.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub prompt: Vec<usize>,
    pub modal: Option<ModalContext>,
    pub chosen: Vec<usize>,
    pub rejected: Vec<usize>,
    pub domain: DomainTag,
    pub source: SourceTag,
}

impl PreferencePair {
    pub fn new(
        prompt: Vec<usize>,
        modal: Option<ModalContext>,
        chosen: Vec<usize>,
        rejected: Vec<usize>,
        domain: DomainTag,
        source: SourceTag,
    ) -> Result<Self> {
        if chosen.is_empty() || rejected.is_empty() {
            return Err(Error::EmptyResponse);
        }
        if chosen == rejected {
            return Err(invalid("chosen and rejected responses are identical"));
        }
        Ok(Self {
            prompt,
            modal,
            chosen,
            rejected,
            domain,
            source,
        })
    }

    pub fn chosen_sample(&self) -> SequenceSample {
        SequenceSample::new(self.prompt.clone(), self.chosen.clone(), self.modal.clone())
    }

    pub fn rejected_sample(&self) -> SequenceSample {
        SequenceSample::new(self.prompt.clone(), self.rejected.clone(), self.modal.clone())
    }

    pub fn swapped(&self) -> Self {
        Self {
            chosen: self.rejected.clone(),
            rejected: self.chosen.clone(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RMTrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub eval_fraction: f64,
    pub length_ratio_max: Option<f64>,
    pub eval_every: usize,
    pub pooling: Pooling,
    pub dims: ModelDims,
}

impl Default for RMTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            batch_size: 256,
            max_steps: 1000,
            eval_fraction: 0.1,
            length_ratio_max: None,
            eval_every: 50,
            pooling: Pooling::AllTokens,
            dims: ModelDims::default(),
        }
    }
}

impl RMTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(invalid("eval_fraction must lie in (0, 1)"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(invalid("lr must be finite and non-negative"));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size must be positive"));
        }
        if let Some(r) = self.length_ratio_max {
            if !(r > 0.0) {
                return Err(invalid("length_ratio_max must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RMLogEntry {
    pub step: usize,
    pub loss: f64,
    pub heldout_acc: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RMTrainOutput {
    pub params: ModelParams,
    pub log: Vec<RMLogEntry>,
    pub train_pairs: usize,
    pub heldout_pairs: usize,
    pub removed_by_length_filter: usize,
}

/// `-log σ(r_w - r_l)`, evaluated without overflow.
pub fn bt_loss(r_w: f64, r_l: f64) -> Result<f64> {
    if !r_w.is_finite() || !r_l.is_finite() {
        return Err(Error::NonFinite { op: "bt_loss" });
    }
    let m = r_w - r_l;
    Ok(if m > 0.0 {
        libm::log1p(libm::exp(-m))
    } else {
        -m + libm::log1p(libm::exp(m))
    })
}

/// Mean Bradley-Terry loss of a batch of pairs on `graph`.
pub fn bt_batch_loss(
    graph: &mut Graph,
    params: &ModelParams,
    pairs: &[&PreferencePair],
    pooling: Pooling,
) -> Result<Var> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pairs"));
    }
    let mut samples: Vec<SequenceSample> = pairs.iter().map(|p| p.chosen_sample()).collect();
    samples.extend(pairs.iter().map(|p| p.rejected_sample()));
    let n = pairs.len();
    let mut net = Net::bind(graph, params)?;
    let scores = net.scores(&samples, pooling)?;
    let g = &mut *net.graph;
    let col = g.reshape(scores, alloc::vec![2 * n, 1])?;
    let idx_w: Vec<usize> = (0..n).collect();
    let idx_l: Vec<usize> = (n..2 * n).collect();
    let r_w = g.gather_rows(col, &idx_w)?;
    let r_l = g.gather_rows(col, &idx_l)?;
    let margin = g.sub(r_w, r_l)?;
    let p = g.sigmoid(margin)?;
    let lp = g.log(p)?;
    let mean = g.mean(lp)?;
    g.neg(mean)
}

pub fn pairwise_accuracy(params: &ModelParams, pairs: &[PreferencePair]) -> Result<f64> {
    pairwise_accuracy_with(params, pairs, Pooling::AllTokens)
}

/// Fraction of pairs with `r(x, y_w) > r(x, y_l)`. Ties count as wrong.
pub fn pairwise_accuracy_with(params: &ModelParams, pairs: &[PreferencePair], pooling: Pooling) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pairwise_accuracy"));
    }
    accuracy_from_scores(&pair_scores(params, pairs, pooling)?)
}

/// Fraction of `(r_w, r_l)` with `r_w > r_l`.
pub fn accuracy_from_scores(scores: &[(f64, f64)]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::EmptyInput("pairwise_accuracy"));
    }
    let correct = scores.iter().filter(|(w, l)| w > l).count();
    Ok(correct as f64 / scores.len() as f64)
}

/// Per-pair scores `(r_w, r_l)`, scored in chunks.
pub fn pair_scores(params: &ModelParams, pairs: &[PreferencePair], pooling: Pooling) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(pairs.len());
    for chunk in pairs.chunks(256) {
        let mut samples: Vec<SequenceSample> = chunk.iter().map(|p| p.chosen_sample()).collect();
        samples.extend(chunk.iter().map(|p| p.rejected_sample()));
        let s = model::reward_scores(params, &samples, pooling)?;
        let n = chunk.len();
        out.extend((0..n).map(|i| (s[i], s[n + i])));
    }
    Ok(out)
}

pub fn pair_correctness(params: &ModelParams, pairs: &[PreferencePair], pooling: Pooling) -> Result<Vec<bool>> {
    Ok(pair_scores(params, pairs, pooling)?
        .into_iter()
        .map(|(w, l)| w > l)
        .collect())
}

pub fn train_reward_model(pairs: &[PreferencePair], cfg: &RMTrainConfig, seed: u64) -> Result<RMTrainOutput> {
    let mut init_rng = rng::substream(seed, "rm/init", 0);
    let init = model::init_params(&cfg.dims, &mut init_rng);
    train_reward_model_from(init, pairs, cfg, seed)
}

/// Trains from `init` (e.g. a policy backbone with a fresh score head).
pub fn train_reward_model_from(
    init: ModelParams,
    pairs: &[PreferencePair],
    cfg: &RMTrainConfig,
    seed: u64,
) -> Result<RMTrainOutput> {
    cfg.validate()?;
    let before = pairs.len();
    let (kept, removed) = match cfg.length_ratio_max {
        Some(r) => {
            let (k, rem) = length_filter(pairs, r)?;
            (k, rem.len())
        }
        None => (pairs.to_vec(), 0),
    };
    if kept.len() < 2 {
        return Err(Error::FilteredEmpty {
            filter: if cfg.length_ratio_max.is_some() {
                "length_filter"
            } else {
                "input (need at least 2 pairs)"
            },
            before,
        });
    }

    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.shuffle(&mut rng::substream(seed, "rm/split", 0));
    let n_eval = (libm::ceil(kept.len() as f64 * cfg.eval_fraction) as usize).clamp(1, kept.len() - 1);
    let heldout: Vec<PreferencePair> = order[..n_eval].iter().map(|&i| kept[i].clone()).collect();
    let train: Vec<&PreferencePair> = order[n_eval..].iter().map(|&i| &kept[i]).collect();

    let batch = cfg.batch_size.min(train.len());
    let mut params = init;
    let mut opt = AdamState::new(AdamConfig::default());
    let mut log = Vec::with_capacity(cfg.max_steps);
    let mut epoch_rng = rng::substream(seed, "rm/batches", 0);
    let mut perm: Vec<usize> = Vec::new();
    let mut cursor = 0;

    for step in 1..=cfg.max_steps {
        let mut idx = Vec::with_capacity(batch);
        while idx.len() < batch {
            if cursor == perm.len() {
                perm = (0..train.len()).collect();
                perm.shuffle(&mut epoch_rng);
                cursor = 0;
            }
            idx.push(perm[cursor]);
            cursor += 1;
        }
        let batch_pairs: Vec<&PreferencePair> = idx.iter().map(|&i| train[i]).collect();
        let mut g = Graph::new();
        let loss = bt_batch_loss(&mut g, &params, &batch_pairs, cfg.pooling)?;
        let loss_value = g.value(loss).item();
        if cfg.lr > 0.0 {
            let grads = g.backward(loss)?;
            adam_step(&mut params, &grads, &mut opt, cfg.lr)?;
        }
        let heldout_acc = if step % cfg.eval_every.max(1) == 0 || step == cfg.max_steps {
            Some(pairwise_accuracy_with(&params, &heldout, cfg.pooling)?)
        } else {
            None
        };
        log.push(RMLogEntry {
            step,
            loss: loss_value,
            heldout_acc,
            lr: cfg.lr,
        });
    }

    Ok(RMTrainOutput {
        params,
        log,
        train_pairs: train.len(),
        heldout_pairs: heldout.len(),
        removed_by_length_filter: removed,
    })
}
