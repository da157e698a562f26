//! PPO against a learned reward model: reward assignment, GAE, the clipped
//! policy objective, critic regression, and the training loop.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, ModelParams, Tensor, Var};
use crate::datapipe::{gold_reward, SyntheticTask};
use crate::error::{invalid, Error, Result};
use crate::model::{self, ModelDims, Net, Pooling, SequenceSample};
use crate::rng;
use crate::sampling::{generate_batch, DecodeConfig};

/// One sampled response with its rollout-time statistics. The actions are
/// the response tokens of `sample`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub sample: SequenceSample,
    pub old_logprobs: Vec<f64>,
    pub ref_logprobs: Option<Vec<f64>>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
}

impl Trajectory {
    pub fn new(sample: SequenceSample, old_logprobs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let t = Self {
            rewards: vec![0.0; sample.response.len()],
            sample,
            old_logprobs,
            ref_logprobs: None,
            values,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn actions(&self) -> &[usize] {
        &self.sample.response
    }

    pub fn len(&self) -> usize {
        self.sample.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample.response.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.len();
        if t == 0 {
            return Err(Error::EmptyResponse);
        }
        for (what, n) in [
            ("old_logprobs", self.old_logprobs.len()),
            ("values", self.values.len()),
            ("rewards", self.rewards.len()),
        ] {
            if n != t {
                return Err(Error::LengthMismatch { what, left: n, right: t });
            }
        }
        if let Some(r) = &self.ref_logprobs {
            if r.len() != t {
                return Err(Error::LengthMismatch {
                    what: "ref_logprobs",
                    left: r.len(),
                    right: t,
                });
            }
        }
        if self.old_logprobs.iter().any(|&l| l > 0.0) {
            return Err(invalid("log-probabilities must be <= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageTable {
    pub deltas: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardMode {
    /// Sequence score on the last step, zero elsewhere.
    #[default]
    TerminalOnly,
    /// Step `t` gets the score of the response truncated after token `t`.
    PerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RatioDenominator {
    /// Policy snapshot that generated the rollouts.
    #[default]
    RolloutSnapshot,
    /// The frozen reference policy.
    ReferenceModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PPOConfig {
    pub gamma: f64,
    pub gae_beta: f64,
    pub clip_epsilon: f64,
    pub lr: f64,
    /// Critic learning rate; defaults to `lr`.
    pub critic_lr: Option<f64>,
    pub batch_size: usize,
    pub updates: usize,
    pub rollouts_per_update: usize,
    pub kl_penalty_coeff: f64,
    pub ratio_denominator: RatioDenominator,
    pub reward_mode: RewardMode,
    pub normalize_advantages: bool,
    pub policy_epochs: usize,
    pub pooling: Pooling,
    pub decode: DecodeConfig,
}

impl Default for PPOConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_beta: 0.95,
            clip_epsilon: 0.2,
            lr: 5e-5,
            critic_lr: None,
            batch_size: 256,
            updates: 100,
            rollouts_per_update: 256,
            kl_penalty_coeff: 0.0,
            ratio_denominator: RatioDenominator::RolloutSnapshot,
            reward_mode: RewardMode::TerminalOnly,
            normalize_advantages: true,
            policy_epochs: 1,
            pooling: Pooling::AllTokens,
            decode: DecodeConfig::default(),
        }
    }
}

impl PPOConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(invalid("gamma must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.gae_beta) {
            return Err(invalid("gae_beta must lie in [0, 1]"));
        }
        if !(self.clip_epsilon > 0.0) {
            return Err(invalid("clip_epsilon must be positive"));
        }
        if !(self.lr >= 0.0) || self.critic_lr.is_some_and(|l| !(l >= 0.0)) {
            return Err(invalid("learning rates must be non-negative"));
        }
        if self.batch_size == 0 || self.rollouts_per_update == 0 || self.policy_epochs == 0 {
            return Err(invalid("batch_size, rollouts_per_update and policy_epochs must be positive"));
        }
        if !(self.kl_penalty_coeff >= 0.0) {
            return Err(invalid("kl_penalty_coeff must be non-negative"));
        }
        self.decode.validate()
    }
}

fn raw_rewards(rm: &ModelParams, samples: &[SequenceSample], mode: RewardMode, pooling: Pooling) -> Result<Vec<Vec<f64>>> {
    if samples.iter().any(|s| s.response.is_empty()) {
        return Err(Error::EmptyResponse);
    }
    match mode {
        RewardMode::TerminalOnly => {
            let scores = model::reward_scores(rm, samples, pooling)?;
            Ok(samples
                .iter()
                .zip(scores)
                .map(|(s, r)| {
                    let mut v = vec![0.0; s.response.len()];
                    *v.last_mut().unwrap() = r;
                    v
                })
                .collect())
        }
        RewardMode::PerStep => model::batch_prefix_scores(rm, samples, pooling),
    }
}

fn shape(traj: &mut Trajectory, raw: Vec<f64>, kl_coeff: f64) -> Result<()> {
    traj.rewards = raw;
    if kl_coeff > 0.0 {
        let refs = traj
            .ref_logprobs
            .as_ref()
            .ok_or_else(|| invalid("KL shaping needs reference log-probabilities"))?;
        for ((r, &lp), &lr) in traj.rewards.iter_mut().zip(&traj.old_logprobs).zip(refs) {
            *r -= kl_coeff * (lp - lr);
        }
    }
    Ok(())
}

/// Fills `rewards` from the reward model, minus the optional per-step KL term.
pub fn assign_rewards(
    rm: &ModelParams,
    traj: &Trajectory,
    mode: RewardMode,
    kl_coeff: f64,
    pooling: Pooling,
) -> Result<Trajectory> {
    let mut out = traj.clone();
    let raw = raw_rewards(rm, core::slice::from_ref(&traj.sample), mode, pooling)?.remove(0);
    shape(&mut out, raw, kl_coeff)?;
    Ok(out)
}

pub fn assign_rewards_batch(
    rm: &ModelParams,
    trajs: &mut [Trajectory],
    mode: RewardMode,
    kl_coeff: f64,
    pooling: Pooling,
) -> Result<()> {
    let mut all = Vec::with_capacity(trajs.len());
    for chunk in trajs.chunks(256) {
        let samples: Vec<SequenceSample> = chunk.iter().map(|t| t.sample.clone()).collect();
        all.extend(raw_rewards(rm, &samples, mode, pooling)?);
    }
    for (t, raw) in trajs.iter_mut().zip(all) {
        shape(t, raw, kl_coeff)?;
    }
    Ok(())
}

/// TD errors, GAE advantages, and returns, with `V(s_{T+1}) = 0`.
pub fn gae_from(rewards: &[f64], values: &[f64], gamma: f64, beta: f64) -> Result<AdvantageTable> {
    if rewards.len() != values.len() {
        return Err(Error::LengthMismatch {
            what: "rewards vs values",
            left: rewards.len(),
            right: values.len(),
        });
    }
    let n = rewards.len();
    let mut deltas = vec![0.0; n];
    let mut advantages = vec![0.0; n];
    let mut returns = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { 0.0 };
        deltas[t] = rewards[t] + gamma * next_value - values[t];
        advantages[t] = deltas[t] + gamma * beta * next_adv;
        returns[t] = advantages[t] + values[t];
        next_adv = advantages[t];
    }
    Ok(AdvantageTable {
        deltas,
        advantages,
        returns,
    })
}

pub fn gae(traj: &Trajectory, gamma: f64, beta: f64) -> Result<AdvantageTable> {
    gae_from(&traj.rewards, &traj.values, gamma, beta)
}

fn check_aligned(new: &[f64], old: &[f64], adv: &[f64]) -> Result<()> {
    if new.len() != old.len() || new.len() != adv.len() {
        return Err(Error::LengthMismatch {
            what: "policy loss inputs",
            left: new.len(),
            right: old.len().min(adv.len()),
        });
    }
    if new.is_empty() {
        return Err(Error::EmptyInput("ppo_policy_loss"));
    }
    Ok(())
}

/// `-mean_t min(ρ_t A_t, clip(ρ_t, 1-ε, 1+ε) A_t)` with `ρ_t = exp(new_t - old_t)`.
pub fn ppo_policy_loss(new_logprobs: &[f64], old_logprobs: &[f64], advantages: &[f64], epsilon: f64) -> Result<f64> {
    check_aligned(new_logprobs, old_logprobs, advantages)?;
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    let mut total = 0.0;
    for ((&n, &o), &a) in new_logprobs.iter().zip(old_logprobs).zip(advantages) {
        let ratio = libm::exp(n - o);
        if !ratio.is_finite() {
            return Err(Error::NonFinite { op: "ppo_policy_loss" });
        }
        let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
        total += (ratio * a).min(clipped * a);
    }
    Ok(-total / new_logprobs.len() as f64)
}

/// Graph version of [`ppo_policy_loss`]; gradients flow into `new_logprobs`.
pub fn ppo_policy_loss_graph(
    g: &mut Graph,
    new_logprobs: Var,
    old_logprobs: &[f64],
    advantages: &[f64],
    epsilon: f64,
) -> Result<Var> {
    let n = g.value(new_logprobs).len();
    check_aligned(&vec![0.0; n], old_logprobs, advantages)?;
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    let old = g.constant(Tensor::vector(old_logprobs.to_vec())?);
    let adv = g.constant(Tensor::vector(advantages.to_vec())?);
    let diff = g.sub(new_logprobs, old)?;
    let ratio = g.exp(diff)?;
    let unclipped = g.mul(ratio, adv)?;
    let clipped = g.clip(ratio, 1.0 - epsilon, 1.0 + epsilon)?;
    let clipped = g.mul(clipped, adv)?;
    let objective = g.minimum(unclipped, clipped)?;
    let mean = g.mean(objective)?;
    g.neg(mean)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticLoss {
    pub sum: f64,
    pub mean: f64,
}

/// `Σ_t (V(s_t) - R_t)²`.
pub fn critic_loss(values: &[f64], returns: &[f64]) -> Result<CriticLoss> {
    if values.len() != returns.len() {
        return Err(Error::LengthMismatch {
            what: "values vs returns",
            left: values.len(),
            right: returns.len(),
        });
    }
    if values.is_empty() {
        return Err(Error::EmptyInput("critic_loss"));
    }
    let sum: f64 = values.iter().zip(returns).map(|(v, r)| (v - r) * (v - r)).sum();
    Ok(CriticLoss {
        sum,
        mean: sum / values.len() as f64,
    })
}

pub fn critic_loss_graph(g: &mut Graph, values: Var, returns: &[f64]) -> Result<Var> {
    let n = g.value(values).len();
    if n != returns.len() {
        return Err(Error::LengthMismatch {
            what: "values vs returns",
            left: n,
            right: returns.len(),
        });
    }
    let r = g.constant(Tensor::vector(returns.to_vec())?);
    let e = g.sub(values, r)?;
    let sq = g.mul(e, e)?;
    g.sum(sq)
}

/// Zero-mean, unit-variance rescaling.
pub fn normalize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    for v in values.iter_mut() {
        *v = (*v - mean) / (std + 1e-8);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PPOLogEntry {
    pub update: usize,
    pub mean_reward_rm: f64,
    pub mean_reward_gold: Option<f64>,
    pub mean_kl: f64,
    pub mean_len: f64,
    pub policy_loss: f64,
    pub critic_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PPOOutput {
    pub policy: ModelParams,
    pub critic: ModelParams,
    pub log: Vec<PPOLogEntry>,
}

/// Rollouts for one update: sampled responses plus snapshot statistics.
pub fn collect_rollouts(
    policy: &ModelParams,
    critic: &ModelParams,
    reference: &ModelParams,
    tasks: &[&SyntheticTask],
    cfg: &PPOConfig,
    seeds: &[u64],
) -> Result<Vec<Trajectory>> {
    let prompts: Vec<_> = tasks.iter().map(|t| t.prompt()).collect();
    let responses = generate_batch(policy, &prompts, &cfg.decode, seeds)?;
    let samples: Vec<SequenceSample> = prompts
        .iter()
        .zip(responses)
        .map(|(p, r)| p.with_response(r))
        .collect();
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(256) {
        let old = model::batch_logprobs(policy, chunk)?;
        let refs = model::batch_logprobs(reference, chunk)?;
        let values = model::batch_values(critic, chunk, cfg.pooling)?;
        for (((s, o), r), v) in chunk.iter().zip(old).zip(refs).zip(values) {
            let mut t = Trajectory::new(s.clone(), o, v)?;
            t.ref_logprobs = Some(r);
            out.push(t);
        }
    }
    Ok(out)
}

/// Clipped policy loss of `policy` on one minibatch.
pub fn ppo_minibatch_loss(
    g: &mut Graph,
    policy: &ModelParams,
    samples: &[SequenceSample],
    denominators: &[f64],
    advantages: &[f64],
    epsilon: f64,
) -> Result<Var> {
    let mut net = Net::bind(g, policy)?;
    let new_lp = net.response_logprobs(samples)?;
    ppo_policy_loss_graph(g, new_lp, denominators, advantages, epsilon)
}

/// Critic regression on one minibatch, averaged over trajectories.
pub fn critic_minibatch_loss(
    g: &mut Graph,
    critic: &ModelParams,
    samples: &[SequenceSample],
    returns: &[f64],
    pooling: Pooling,
) -> Result<Var> {
    let mut net = Net::bind(g, critic)?;
    let v = net.values(samples, pooling)?;
    let cl = critic_loss_graph(g, v, returns)?;
    g.scale(cl, 1.0 / samples.len() as f64)
}

/// PPO on `tasks`. The policy starts from `policy_init`, the critic from `rm`.
pub fn ppo_train(
    policy_init: &ModelParams,
    rm: &ModelParams,
    reference: &ModelParams,
    tasks: &[SyntheticTask],
    cfg: &PPOConfig,
    seed: u64,
) -> Result<PPOOutput> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::EmptyInput("ppo prompts"));
    }
    let pd = ModelDims::of(policy_init)?;
    for (what, other) in [("reward model", rm), ("reference", reference)] {
        let od = ModelDims::of(other)?;
        if od.vocab != pd.vocab {
            return Err(invalid(alloc::format!(
                "{what} vocabulary {} does not match policy vocabulary {}",
                od.vocab, pd.vocab
            )));
        }
    }

    let mut policy = policy_init.clone();
    let mut critic = model::critic_from_reward(rm)?;
    let mut popt = AdamState::new(AdamConfig::default());
    let mut copt = AdamState::new(AdamConfig::default());
    let critic_lr = cfg.critic_lr.unwrap_or(cfg.lr);
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.shuffle(&mut rng::substream(seed, "ppo/prompts", 0));
    let mut log = Vec::with_capacity(cfg.updates);
    let r = cfg.rollouts_per_update;

    for update in 0..cfg.updates {
        let batch: Vec<&SyntheticTask> = (0..r).map(|i| &tasks[order[(update * r + i) % tasks.len()]]).collect();
        let seeds: Vec<u64> = (0..r)
            .map(|i| rng::derive_seed(seed, "rollout", (update * r + i) as u64))
            .collect();
        let mut trajs = collect_rollouts(&policy, &critic, reference, &batch, cfg, &seeds)?;
        assign_rewards_batch(rm, &mut trajs, cfg.reward_mode, cfg.kl_penalty_coeff, cfg.pooling)?;

        let n = trajs.len() as f64;
        // raw sequence scores, before KL shaping
        let samples: Vec<SequenceSample> = trajs.iter().map(|t| t.sample.clone()).collect();
        let mut total = 0.0;
        for chunk in samples.chunks(256) {
            total += model::reward_scores(rm, chunk, cfg.pooling)?.iter().sum::<f64>();
        }
        let mean_reward_rm = total / n;
        let mean_reward_gold = batch
            .iter()
            .zip(&trajs)
            .map(|(t, tr)| gold_reward(t, &tr.sample.response))
            .sum::<f64>()
            / n;
        let mean_kl = trajs
            .iter()
            .map(|t| {
                let refs = t.ref_logprobs.as_ref().unwrap();
                t.old_logprobs.iter().zip(refs).map(|(a, b)| a - b).sum::<f64>()
            })
            .sum::<f64>()
            / n;
        let mean_len = trajs.iter().map(|t| t.len() as f64).sum::<f64>() / n;

        let tables: Vec<AdvantageTable> = trajs
            .iter()
            .map(|t| gae(t, cfg.gamma, cfg.gae_beta))
            .collect::<Result<_>>()?;
        let mut flat_adv: Vec<f64> = tables.iter().flat_map(|t| t.advantages.iter().copied()).collect();
        if cfg.normalize_advantages {
            normalize(&mut flat_adv);
        }
        let mut adv_per: Vec<Vec<f64>> = Vec::with_capacity(trajs.len());
        let mut at = 0;
        for t in &trajs {
            adv_per.push(flat_adv[at..at + t.len()].to_vec());
            at += t.len();
        }

        let (mut pl_sum, mut cl_sum, mut steps) = (0.0, 0.0, 0usize);
        let mut crit_tokens = 0usize;
        let mut mb_rng = rng::substream(seed, "ppo/minibatch", update as u64);
        for _ in 0..cfg.policy_epochs {
            let mut idx: Vec<usize> = (0..trajs.len()).collect();
            if cfg.batch_size < trajs.len() {
                idx.shuffle(&mut mb_rng);
            }
            for mb in idx.chunks(cfg.batch_size) {
                let samples: Vec<SequenceSample> = mb.iter().map(|&i| trajs[i].sample.clone()).collect();
                let denom: Vec<f64> = mb
                    .iter()
                    .flat_map(|&i| match cfg.ratio_denominator {
                        RatioDenominator::RolloutSnapshot => trajs[i].old_logprobs.clone(),
                        RatioDenominator::ReferenceModel => trajs[i].ref_logprobs.clone().unwrap(),
                    })
                    .collect();
                let adv: Vec<f64> = mb.iter().flat_map(|&i| adv_per[i].iter().copied()).collect();
                let ret: Vec<f64> = mb.iter().flat_map(|&i| tables[i].returns.iter().copied()).collect();

                let mut g = Graph::new();
                let pl = ppo_minibatch_loss(&mut g, &policy, &samples, &denom, &adv, cfg.clip_epsilon)?;
                pl_sum += g.value(pl).item();
                if cfg.lr > 0.0 {
                    let grads = g.backward(pl)?;
                    adam_step(&mut policy, &grads, &mut popt, cfg.lr)?;
                }
                let mut g = Graph::new();
                let cl = critic_minibatch_loss(&mut g, &critic, &samples, &ret, cfg.pooling)?;
                cl_sum += g.value(cl).item() * samples.len() as f64;
                if critic_lr > 0.0 {
                    let grads = g.backward(cl)?;
                    adam_step(&mut critic, &grads, &mut copt, critic_lr)?;
                }
                crit_tokens += ret.len();
                steps += 1;
            }
        }

        log.push(PPOLogEntry {
            update,
            mean_reward_rm,
            mean_reward_gold: Some(mean_reward_gold),
            mean_kl,
            mean_len,
            policy_loss: pl_sum / steps as f64,
            critic_loss: cl_sum / crit_tokens as f64,
        });
    }

    Ok(PPOOutput { policy, critic, log })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SftConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
}

impl Default for SftConfig {
    fn default() -> Self {
        Self {
            lr: 3e-3,
            batch_size: 64,
            steps: 300,
        }
    }
}

/// Negative mean log-likelihood of the demonstrations' response tokens.
pub fn sft_loss(g: &mut Graph, params: &ModelParams, demos: &[SequenceSample]) -> Result<Var> {
    let mut net = Net::bind(g, params)?;
    let lp = net.response_logprobs(demos)?;
    let m = g.mean(lp)?;
    g.neg(m)
}

/// Supervised warm start of a policy on demonstration responses.
pub fn sft_train(init: ModelParams, demos: &[SequenceSample], cfg: &SftConfig, seed: u64) -> Result<(ModelParams, Vec<f64>)> {
    if demos.is_empty() {
        return Err(Error::EmptyInput("demonstrations"));
    }
    if !(cfg.lr > 0.0) || cfg.batch_size == 0 {
        return Err(invalid("sft needs a positive lr and batch size"));
    }
    let mut params = init;
    let mut opt = AdamState::new(AdamConfig::default());
    let mut r = rng::substream(seed, "sft/batches", 0);
    let mut perm: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut losses = Vec::with_capacity(cfg.steps);
    let batch = cfg.batch_size.min(demos.len());
    for _ in 0..cfg.steps {
        let mut mb = Vec::with_capacity(batch);
        while mb.len() < batch {
            if cursor == perm.len() {
                perm = (0..demos.len()).collect();
                perm.shuffle(&mut r);
                cursor = 0;
            }
            mb.push(demos[perm[cursor]].clone());
            cursor += 1;
        }
        let mut g = Graph::new();
        let loss = sft_loss(&mut g, &params, &mb)?;
        losses.push(g.value(loss).item());
        let grads = g.backward(loss)?;
        adam_step(&mut params, &grads, &mut opt, cfg.lr)?;
    }
    Ok((params, losses))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gae_zero_and_beta_zero() {
        let t = gae_from(&[0.0; 4], &[0.0; 4], 0.99, 0.95).unwrap();
        assert!(t.deltas.iter().chain(&t.advantages).chain(&t.returns).all(|&v| v == 0.0));
        let t = gae_from(&[0.3, -0.2, 1.0], &[0.1, 0.4, -0.3], 0.9, 0.0).unwrap();
        assert_eq!(t.advantages, t.deltas);
        assert!(gae_from(&[0.0; 2], &[0.0; 3], 1.0, 1.0).is_err());
    }

    #[test]
    fn gae_hand_unrolled() {
        let t = gae_from(&[0.0, 0.0, 1.0], &[0.5, 0.5, 0.5], 1.0, 1.0).unwrap();
        assert_eq!(t.deltas, vec![0.0, 0.0, 0.5]);
        assert_eq!(t.advantages, vec![0.5, 0.5, 0.5]);
        assert_eq!(t.returns, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn policy_loss_examples() {
        let adv = [0.5, -1.0, 2.0];
        let lp = [-1.0, -2.0, -0.5];
        let l = ppo_policy_loss(&lp, &lp, &adv, 0.2).unwrap();
        assert!((l + (0.5 - 1.0 + 2.0) / 3.0).abs() < 1e-15);
        let up = libm::log(1.5);
        assert!((ppo_policy_loss(&[up], &[0.0], &[1.0], 0.2).unwrap() + 1.2).abs() < 1e-12);
        let down = libm::log(0.5);
        assert!((ppo_policy_loss(&[down], &[0.0], &[-1.0], 0.2).unwrap() - 0.8).abs() < 1e-12);
        assert!(ppo_policy_loss(&[800.0], &[0.0], &[1.0], 0.2).is_err());
        assert!(ppo_policy_loss(&[0.0], &[0.0, 0.0], &[1.0], 0.2).is_err());
    }

    #[test]
    fn critic_loss_examples() {
        assert_eq!(critic_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().sum, 0.0);
        let c = critic_loss(&[0.0, 0.0], &[1.0, 2.0]).unwrap();
        assert_eq!(c.sum, 5.0);
        assert_eq!(c.mean, 2.5);
        assert!(critic_loss(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn normalize_moments() {
        let mut v = vec![1.0, 2.0, 3.0, 6.0];
        normalize(&mut v);
        let mean: f64 = v.iter().sum::<f64>() / 4.0;
        let var: f64 = v.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-6);
    }
}
