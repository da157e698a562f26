//! The toy sequence model shared by policy, reference, critic, and reward model.
//!
//! Architecture, per position `t` of one sequence:
//!
//! ```text
//! x_t  = embed(token_t) + pos_t            (or projector(tanh(obs · encoder)) + pos_0 for the modal prefix)
//! c_t  = mean(x_0 ..= x_t)                 causal context
//! h1_t = tanh(x_t · W_in + c_t · W_ctx + b1)
//! h_t  = h1_t + tanh(h1_t · W_mlp + b2)
//! ```
//!
//! The language-model head reads `h_t` directly. The score and value heads
//! read the mean of `h` over the pooled positions. The modal encoder and
//! projector are always frozen.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{BoundParams, Graph, ModelParams, Tensor, Var};
use crate::error::{invalid, Error, Result};
use crate::rng::StreamRng;

pub const MODAL_ENCODER: &str = "modal.encoder";
pub const MODAL_PROJECTOR: &str = "modal.projector";
pub const TOKEN_EMBED: &str = "embed.token";
pub const POS_EMBED: &str = "embed.position";
pub const W_IN: &str = "backbone.w_in";
pub const W_CTX: &str = "backbone.w_ctx";
pub const B1: &str = "backbone.b1";
pub const W_MLP: &str = "backbone.w_mlp";
pub const B2: &str = "backbone.b2";
pub const LM_HEAD: &str = "head.lm";
pub const LM_BIAS: &str = "head.lm_bias";
pub const VALUE_HEAD: &str = "head.value";
pub const VALUE_BIAS: &str = "head.value_bias";
pub const SCORE_HEAD: &str = "head.score";
pub const SCORE_BIAS: &str = "head.score_bias";

/// Tensors that are never trained.
pub const FROZEN: [&str; 2] = [MODAL_ENCODER, MODAL_PROJECTOR];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub hidden: usize,
    pub modal_dim: usize,
    pub max_positions: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            vocab: crate::vocab::VOCAB_SIZE,
            hidden: 48,
            modal_dim: 8,
            max_positions: 24,
        }
    }
}

impl ModelDims {
    /// Reads the dimensions back from the tensor shapes.
    pub fn of(params: &ModelParams) -> Result<Self> {
        let emb = params.tensor(TOKEN_EMBED)?.shape();
        let pos = params.tensor(POS_EMBED)?.shape();
        let proj = params.tensor(MODAL_PROJECTOR)?.shape();
        Ok(Self {
            vocab: emb[0],
            hidden: emb[1],
            modal_dim: proj[0],
            max_positions: pos[0],
        })
    }
}

/// Which positions the score and value heads average over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pooling {
    /// Modal prefix, prompt, and response.
    #[default]
    AllTokens,
    /// Response positions only.
    ResponseOnly,
}

/// Encoded observation standing in for image/video features.
#[derive(Debug, Clone, PartialEq)]
pub struct ModalContext {
    pub observation: Vec<f64>,
}

/// Prompt tokens plus an optional modal prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub tokens: Vec<usize>,
    pub modal: Option<ModalContext>,
}

impl Prompt {
    pub fn new(tokens: Vec<usize>, modal: Option<ModalContext>) -> Self {
        Self { tokens, modal }
    }

    pub fn with_response(&self, response: Vec<usize>) -> SequenceSample {
        SequenceSample::new(self.tokens.clone(), response, self.modal.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    pub prompt: Vec<usize>,
    pub response: Vec<usize>,
    pub modal: Option<ModalContext>,
}

impl SequenceSample {
    pub fn new(prompt: Vec<usize>, response: Vec<usize>, modal: Option<ModalContext>) -> Self {
        Self {
            prompt,
            response,
            modal,
        }
    }

    /// Positions before the first response token.
    pub fn context_len(&self) -> usize {
        self.modal.is_some() as usize + self.prompt.len()
    }

    pub fn len(&self) -> usize {
        self.context_len() + self.response.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn truncated(&self, response_len: usize) -> Self {
        Self {
            prompt: self.prompt.clone(),
            response: self.response[..response_len].to_vec(),
            modal: self.modal.clone(),
        }
    }

    fn validate(&self, dims: &ModelDims) -> Result<()> {
        for &t in self.prompt.iter().chain(&self.response) {
            if t >= dims.vocab {
                return Err(Error::TokenOutOfRange {
                    token: t,
                    vocab: dims.vocab,
                });
            }
        }
        if let Some(m) = &self.modal {
            if m.observation.len() != dims.modal_dim {
                return Err(Error::LengthMismatch {
                    what: "modal observation",
                    left: m.observation.len(),
                    right: dims.modal_dim,
                });
            }
        }
        if self.is_empty() {
            return Err(invalid("sample has no positions"));
        }
        Ok(())
    }
}

fn normal_tensor(rng: &mut StreamRng, shape: &[usize], std: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = z * std;
    }
    t
}

/// Fresh parameters. Only the modal encoder and projector are frozen.
pub fn init_params(dims: &ModelDims, rng: &mut StreamRng) -> ModelParams {
    let d = dims.hidden;
    let m = dims.modal_dim;
    let v = dims.vocab;
    let inv = 1.0 / libm::sqrt(d as f64);
    let mut p = ModelParams::new();
    p.insert(MODAL_ENCODER, normal_tensor(rng, &[m, m], 1.0 / libm::sqrt(m as f64) * 2.0), false);
    p.insert(MODAL_PROJECTOR, normal_tensor(rng, &[m, d], 1.0 / libm::sqrt(m as f64)), false);
    p.insert(TOKEN_EMBED, normal_tensor(rng, &[v, d], 1.0), true);
    p.insert(POS_EMBED, normal_tensor(rng, &[dims.max_positions, d], 0.5), true);
    p.insert(W_IN, normal_tensor(rng, &[d, d], inv), true);
    p.insert(W_CTX, normal_tensor(rng, &[d, d], inv), true);
    p.insert(B1, Tensor::zeros(&[d]), true);
    p.insert(W_MLP, normal_tensor(rng, &[d, d], inv), true);
    p.insert(B2, Tensor::zeros(&[d]), true);
    p.insert(LM_HEAD, normal_tensor(rng, &[d, v], 0.1 * inv), true);
    p.insert(LM_BIAS, Tensor::zeros(&[v]), true);
    p.insert(VALUE_HEAD, normal_tensor(rng, &[d, 1], 0.1 * inv), true);
    p.insert(VALUE_BIAS, Tensor::zeros(&[1]), true);
    p.insert(SCORE_HEAD, normal_tensor(rng, &[d, 1], 0.1 * inv), true);
    p.insert(SCORE_BIAS, Tensor::zeros(&[1]), true);
    p
}

/// Critic initialized from a reward model: all weights copied, and the
/// score head copied into the value head.
pub fn critic_from_reward(rm: &ModelParams) -> Result<ModelParams> {
    let mut critic = rm.clone();
    let w = rm.get(SCORE_HEAD)?.clone();
    let b = rm.get(SCORE_BIAS)?.clone();
    *critic.get_mut(VALUE_HEAD)? = w;
    *critic.get_mut(VALUE_BIAS)? = b;
    Ok(critic)
}

/// A reward model warm-started from a policy: same backbone, fresh score head.
pub fn reward_from_policy(policy: &ModelParams, rng: &mut StreamRng) -> Result<ModelParams> {
    let dims = ModelDims::of(policy)?;
    let mut rm = policy.clone();
    let inv = 1.0 / libm::sqrt(dims.hidden as f64);
    rm.get_mut(SCORE_HEAD)?.tensor = normal_tensor(rng, &[dims.hidden, 1], 0.1 * inv);
    rm.get_mut(SCORE_BIAS)?.tensor = Tensor::zeros(&[1]);
    Ok(rm)
}

/// Row offsets of each sample inside the concatenated hidden-state matrix.
#[derive(Debug, Clone)]
pub struct Layout {
    pub starts: Vec<usize>,
    pub lens: Vec<usize>,
    pub context_lens: Vec<usize>,
}

impl Layout {
    pub fn total(&self) -> usize {
        self.lens.iter().sum()
    }

    /// First pooled position (absolute row) of sample `i`.
    fn pool_start(&self, i: usize, pooling: Pooling) -> usize {
        match pooling {
            Pooling::AllTokens => self.starts[i],
            Pooling::ResponseOnly => self.starts[i] + self.context_lens[i],
        }
    }
}

/// Graph-side view of one parameter set.
pub struct Net<'a> {
    pub graph: &'a mut Graph,
    pub vars: BoundParams,
    pub dims: ModelDims,
}

impl<'a> Net<'a> {
    pub fn bind(graph: &'a mut Graph, params: &ModelParams) -> Result<Self> {
        let dims = ModelDims::of(params)?;
        let vars = params.bind(graph);
        Ok(Self { graph, vars, dims })
    }

    fn layout(&self, samples: &[SequenceSample]) -> Result<Layout> {
        if samples.is_empty() {
            return Err(Error::EmptyInput("samples"));
        }
        let mut starts = Vec::with_capacity(samples.len());
        let mut lens = Vec::with_capacity(samples.len());
        let mut context_lens = Vec::with_capacity(samples.len());
        let mut at = 0;
        for s in samples {
            s.validate(&self.dims)?;
            starts.push(at);
            lens.push(s.len());
            context_lens.push(s.context_len());
            at += s.len();
        }
        Ok(Layout {
            starts,
            lens,
            context_lens,
        })
    }

    /// Input embeddings for every position of every sample, `[N×d]`.
    fn embed(&mut self, samples: &[SequenceSample]) -> Result<Var> {
        let mut tokens = Vec::new();
        let mut positions = Vec::new();
        let mut observations = Vec::new();
        // row order: token rows first, then modal rows; `order` maps layout rows into it
        let mut order = Vec::new();
        let n_tokens: usize = samples.iter().map(|s| s.prompt.len() + s.response.len()).sum();
        let mut modal_seen = 0;
        for s in samples {
            let mut pos = 0;
            if let Some(m) = &s.modal {
                observations.extend_from_slice(&m.observation);
                order.push(n_tokens + modal_seen);
                modal_seen += 1;
                positions.push(0);
                pos = 1;
            }
            for &t in s.prompt.iter().chain(&s.response) {
                order.push(tokens.len());
                tokens.push(t);
                positions.push(pos.min(self.dims.max_positions - 1));
                pos += 1;
            }
        }
        let g = &mut *self.graph;
        let emb = self.vars.var(TOKEN_EMBED)?;
        let mut rows = Vec::new();
        if !tokens.is_empty() {
            rows.push(g.gather_rows(emb, &tokens)?);
        }
        if modal_seen > 0 {
            let obs = g.constant(Tensor::matrix(modal_seen, self.dims.modal_dim, observations)?);
            let enc = g.matmul(obs, self.vars.var(MODAL_ENCODER)?)?;
            let enc = g.tanh(enc)?;
            rows.push(g.matmul(enc, self.vars.var(MODAL_PROJECTOR)?)?);
        }
        let stacked = if rows.len() == 1 { rows[0] } else { g.concat(&rows)? };
        let x = if modal_seen > 0 {
            g.gather_rows(stacked, &order)?
        } else {
            stacked
        };
        let pe = g.gather_rows(self.vars.var(POS_EMBED)?, &positions)?;
        g.add(x, pe)
    }

    /// Hidden states at the absolute rows `query` (or all rows), plus the layout.
    pub fn hidden(
        &mut self,
        samples: &[SequenceSample],
        query: Option<&[usize]>,
    ) -> Result<(Var, Layout)> {
        let layout = self.layout(samples)?;
        let x = self.embed(samples)?;
        let mut ranges = Vec::new();
        let all: Vec<usize>;
        let rows: &[usize] = match query {
            Some(q) => q,
            None => {
                all = (0..layout.total()).collect();
                &all
            }
        };
        // sample index containing each queried row
        let mut owner = 0;
        for &r in rows {
            while owner + 1 < layout.starts.len() && layout.starts[owner + 1] <= r {
                owner += 1;
            }
            while layout.starts[owner] > r {
                owner -= 1;
            }
            ranges.push((layout.starts[owner], r + 1));
        }
        let g = &mut *self.graph;
        let ctx = g.mean_pool(x, &ranges)?;
        let xq = if query.is_some() { g.gather_rows(x, rows)? } else { x };
        let a = g.matmul(xq, self.vars.var(W_IN)?)?;
        let b = g.matmul(ctx, self.vars.var(W_CTX)?)?;
        let pre = g.add(a, b)?;
        let pre = g.add_row(pre, self.vars.var(B1)?)?;
        let h1 = g.tanh(pre)?;
        let m = g.matmul(h1, self.vars.var(W_MLP)?)?;
        let m = g.add_row(m, self.vars.var(B2)?)?;
        let m = g.tanh(m)?;
        let h = g.add(h1, m)?;
        Ok((h, layout))
    }

    fn head(&mut self, pooled: Var, w: &str, b: &str) -> Result<Var> {
        let g = &mut *self.graph;
        let s = g.matmul(pooled, self.vars.var(w)?)?;
        let s = g.add_row(s, self.vars.var(b)?)?;
        let n = g.value(s).len();
        g.reshape(s, vec![n])
    }

    /// `r(x, y)` for each sample, `[B]`.
    pub fn scores(&mut self, samples: &[SequenceSample], pooling: Pooling) -> Result<Var> {
        if samples.iter().any(|s| s.response.is_empty()) {
            return Err(Error::EmptyResponse);
        }
        let (h, layout) = self.hidden(samples, None)?;
        let ranges: Vec<(usize, usize)> = (0..samples.len())
            .map(|i| (layout.pool_start(i, pooling), layout.starts[i] + layout.lens[i]))
            .collect();
        let pooled = self.graph.mean_pool(h, &ranges)?;
        self.head(pooled, SCORE_HEAD, SCORE_BIAS)
    }

    /// Log-probabilities of every realized response token, concatenated over samples.
    pub fn response_logprobs(&mut self, samples: &[SequenceSample]) -> Result<Var> {
        let (h, layout) = self.hidden(samples, None)?;
        let mut rows = Vec::new();
        let mut targets = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            if s.context_len() == 0 && !s.response.is_empty() {
                return Err(invalid("the first response token needs a prompt or modal context"));
            }
            for (t, &tok) in s.response.iter().enumerate() {
                rows.push(layout.starts[i] + layout.context_lens[i] + t - 1);
                targets.push(tok);
            }
        }
        if rows.is_empty() {
            return Err(Error::EmptyResponse);
        }
        let g = &mut *self.graph;
        let hs = g.gather_rows(h, &rows)?;
        let logits = g.matmul(hs, self.vars.var(LM_HEAD)?)?;
        let logits = g.add_row(logits, self.vars.var(LM_BIAS)?)?;
        let lp = g.log_softmax(logits)?;
        g.gather(lp, &targets)
    }

    /// Full next-token log-distributions at each response step, `[ΣT×V]`.
    pub fn response_log_dists(&mut self, samples: &[SequenceSample]) -> Result<Var> {
        let (h, layout) = self.hidden(samples, None)?;
        let mut rows = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            for t in 0..s.response.len() {
                rows.push(layout.starts[i] + layout.context_lens[i] + t - 1);
            }
        }
        if rows.is_empty() {
            return Err(Error::EmptyResponse);
        }
        let g = &mut *self.graph;
        let hs = g.gather_rows(h, &rows)?;
        let logits = g.matmul(hs, self.vars.var(LM_HEAD)?)?;
        let logits = g.add_row(logits, self.vars.var(LM_BIAS)?)?;
        g.log_softmax(logits)
    }

    /// `V(s_t)` for every response step: the value head over the pooled
    /// context preceding token `t`. Concatenated over samples.
    pub fn values(&mut self, samples: &[SequenceSample], pooling: Pooling) -> Result<Var> {
        let (h, layout) = self.hidden(samples, None)?;
        let mut ranges = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            let start = layout.pool_start(i, pooling);
            for t in 0..s.response.len() {
                let end = layout.starts[i] + layout.context_lens[i] + t;
                ranges.push((start.min(end - 1), end));
            }
        }
        if ranges.is_empty() {
            return Err(Error::EmptyResponse);
        }
        let pooled = self.graph.mean_pool(h, &ranges)?;
        self.head(pooled, VALUE_HEAD, VALUE_BIAS)
    }

    /// Value head over the whole sequence (the state after the last token).
    pub fn terminal_values(&mut self, samples: &[SequenceSample], pooling: Pooling) -> Result<Var> {
        let (h, layout) = self.hidden(samples, None)?;
        let ranges: Vec<(usize, usize)> = (0..samples.len())
            .map(|i| (layout.pool_start(i, pooling).min(layout.starts[i] + layout.lens[i] - 1), layout.starts[i] + layout.lens[i]))
            .collect();
        let pooled = self.graph.mean_pool(h, &ranges)?;
        self.head(pooled, VALUE_HEAD, VALUE_BIAS)
    }

    /// Scores of every response prefix `y[..=t]`, concatenated over samples.
    pub fn prefix_scores(&mut self, samples: &[SequenceSample], pooling: Pooling) -> Result<Var> {
        let (h, layout) = self.hidden(samples, None)?;
        let mut ranges = Vec::new();
        for (i, s) in samples.iter().enumerate() {
            let start = layout.pool_start(i, pooling);
            for t in 0..s.response.len() {
                ranges.push((start, layout.starts[i] + layout.context_lens[i] + t + 1));
            }
        }
        if ranges.is_empty() {
            return Err(Error::EmptyResponse);
        }
        let pooled = self.graph.mean_pool(h, &ranges)?;
        self.head(pooled, SCORE_HEAD, SCORE_BIAS)
    }

    /// Next-token logits after the last position of each sample, `[B×V]`.
    pub fn next_logits(&mut self, samples: &[SequenceSample]) -> Result<Var> {
        let mut starts = Vec::with_capacity(samples.len());
        let mut at = 0;
        for s in samples {
            at += s.len();
            starts.push(at - 1);
        }
        let (h, _) = self.hidden(samples, Some(&starts))?;
        let g = &mut *self.graph;
        let logits = g.matmul(h, self.vars.var(LM_HEAD)?)?;
        g.add_row(logits, self.vars.var(LM_BIAS)?)
    }
}

/// Hidden states `[T×d]` of one sample.
pub fn encode(params: &ModelParams, sample: &SequenceSample) -> Result<Tensor> {
    let mut g = Graph::new();
    let mut net = Net::bind(&mut g, params)?;
    let (h, _) = net.hidden(core::slice::from_ref(sample), None)?;
    Ok(g.value(h).clone())
}

pub fn reward_score(params: &ModelParams, sample: &SequenceSample) -> Result<f64> {
    reward_score_with(params, sample, Pooling::AllTokens)
}

pub fn reward_score_with(params: &ModelParams, sample: &SequenceSample, pooling: Pooling) -> Result<f64> {
    Ok(reward_scores(params, core::slice::from_ref(sample), pooling)?[0])
}

/// Batched scoring; each value equals scoring the sample alone.
pub fn reward_scores(params: &ModelParams, samples: &[SequenceSample], pooling: Pooling) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let mut net = Net::bind(&mut g, params)?;
    let s = net.scores(samples, pooling)?;
    Ok(g.value(s).data().to_vec())
}

pub fn policy_logprobs(params: &ModelParams, sample: &SequenceSample) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let mut net = Net::bind(&mut g, params)?;
    let lp = net.response_logprobs(core::slice::from_ref(sample))?;
    Ok(g.value(lp).data().to_vec())
}

/// Per-sample response log-probabilities from one batched forward pass.
pub fn batch_logprobs(params: &ModelParams, samples: &[SequenceSample]) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let mut net = Net::bind(&mut g, params)?;
    let lp = net.response_logprobs(samples)?;
    Ok(split(g.value(lp).data(), samples))
}

pub fn value_estimates(params: &ModelParams, sample: &SequenceSample) -> Result<Vec<f64>> {
    value_estimates_with(params, sample, Pooling::AllTokens)
}

pub fn value_estimates_with(params: &ModelParams, sample: &SequenceSample, pooling: Pooling) -> Result<Vec<f64>> {
    Ok(batch_values(params, core::slice::from_ref(sample), pooling)?.remove(0))
}

pub fn batch_values(params: &ModelParams, samples: &[SequenceSample], pooling: Pooling) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let mut net = Net::bind(&mut g, params)?;
    let v = net.values(samples, pooling)?;
    Ok(split(g.value(v).data(), samples))
}

pub fn terminal_value(params: &ModelParams, sample: &SequenceSample, pooling: Pooling) -> Result<f64> {
    let mut g = Graph::new();
    let mut net = Net::bind(&mut g, params)?;
    let v = net.terminal_values(core::slice::from_ref(sample), pooling)?;
    Ok(g.value(v).item())
}

pub fn batch_prefix_scores(params: &ModelParams, samples: &[SequenceSample], pooling: Pooling) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let mut net = Net::bind(&mut g, params)?;
    let v = net.prefix_scores(samples, pooling)?;
    Ok(split(g.value(v).data(), samples))
}

/// Next-token logits after the last position of each sample.
pub fn next_token_logits(params: &ModelParams, samples: &[SequenceSample]) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let mut net = Net::bind(&mut g, params)?;
    let l = net.next_logits(samples)?;
    let t = g.value(l);
    let (rows, _) = t.as_2d();
    Ok((0..rows).map(|r| t.row(r).to_vec()).collect())
}

fn split(flat: &[f64], samples: &[SequenceSample]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(samples.len());
    let mut at = 0;
    for s in samples {
        out.push(flat[at..at + s.response.len()].to_vec());
        at += s.response.len();
    }
    out
}

/// Checks that two parameter sets agree on every frozen tensor bit for bit.
pub fn frozen_unchanged(before: &ModelParams, after: &ModelParams) -> bool {
    FROZEN.iter().all(|name| match (before.get(name), after.get(name)) {
        (Ok(a), Ok(b)) => {
            !a.trainable
                && !b.trainable
                && a.tensor.shape() == b.tensor.shape()
                && a.tensor
                    .data()
                    .iter()
                    .zip(b.tensor.data())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
        }
        _ => false,
    })
}
