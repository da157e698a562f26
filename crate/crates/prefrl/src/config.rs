//! Flat `section.key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use prefrl_core::datapipe::{JudgeKind, TaskMix, Threshold};
use prefrl_core::model::{ModelDims, Pooling};
use prefrl_core::reward::RMTrainConfig;
use prefrl_core::rl::{PPOConfig, RatioDenominator, RewardMode, SftConfig};
use prefrl_core::sampling::DecodeConfig;
use sha2::{Digest, Sha256};

use crate::error::{io_err, CliError, Result};

/// Where the reward model's backbone comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RmInit {
    /// Warm start from the SFT policy, fresh score head.
    Policy,
    Scratch,
}

/// Which policy checkpoint `sample` and `bon` decode from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyChoice {
    Sft,
    Ppo,
}

/// Which pair file `probe-length` reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeSource {
    Bench,
    Pairs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub data: String,
    pub checkpoints: String,
    pub reports: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TasksSection {
    pub count: usize,
    pub mix: TaskMix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SftSection {
    pub p_correct: f64,
    pub demos: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefsSection {
    pub tasks: usize,
    pub k_candidates: usize,
    pub judge: JudgeKind,
    pub gold_fallback: bool,
    pub bench_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmSection {
    pub lr: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub eval_fraction: f64,
    pub length_ratio_max: Option<f64>,
    pub eval_every: usize,
    pub init: RmInit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoSection {
    pub gamma: f64,
    pub gae_beta: f64,
    pub clip_epsilon: f64,
    pub lr: f64,
    pub critic_lr: Option<f64>,
    pub batch_size: usize,
    pub updates: usize,
    pub rollouts_per_update: usize,
    pub kl_penalty_coeff: f64,
    pub ratio_denominator: RatioDenominator,
    pub reward_mode: RewardMode,
    pub normalize_advantages: bool,
    pub policy_epochs: usize,
    pub prompts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSection {
    pub policy: PolicyChoice,
    pub prompts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BonSection {
    pub n: usize,
    pub policy: PolicyChoice,
    pub prompts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanSection {
    pub threshold: Threshold,
    pub corrupt_fraction: f64,
    /// Sample file to clean; empty means synthesize one from the task set.
    pub input: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSection {
    pub padding: usize,
    pub source: ProbeSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub dims: ModelDims,
    pub pooling: Pooling,
    pub tasks: TasksSection,
    pub sft: SftSection,
    pub prefs: PrefsSection,
    pub rm: RmSection,
    pub ppo: PpoSection,
    pub decode: DecodeConfig,
    pub sample: SampleSection,
    pub bon: BonSection,
    pub clean: CleanSection,
    pub probe: ProbeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let rm = RMTrainConfig::default();
        let ppo = PPOConfig::default();
        let sft = SftConfig::default();
        Self {
            seed: 0,
            paths: Paths {
                data: "data".into(),
                checkpoints: "checkpoints".into(),
                reports: "reports".into(),
            },
            dims: ModelDims::default(),
            pooling: Pooling::AllTokens,
            tasks: TasksSection {
                count: 4000,
                mix: TaskMix::default(),
            },
            sft: SftSection {
                p_correct: 0.3,
                demos: 2000,
                lr: sft.lr,
                batch_size: sft.batch_size,
                steps: sft.steps,
            },
            prefs: PrefsSection {
                tasks: 3000,
                k_candidates: 4,
                judge: JudgeKind::Verifier,
                gold_fallback: true,
                bench_fraction: 0.1,
            },
            rm: RmSection {
                lr: rm.lr,
                batch_size: rm.batch_size,
                max_steps: rm.max_steps,
                eval_fraction: rm.eval_fraction,
                length_ratio_max: rm.length_ratio_max,
                eval_every: rm.eval_every,
                init: RmInit::Policy,
            },
            ppo: PpoSection {
                gamma: ppo.gamma,
                gae_beta: ppo.gae_beta,
                clip_epsilon: ppo.clip_epsilon,
                lr: ppo.lr,
                critic_lr: ppo.critic_lr,
                batch_size: ppo.batch_size,
                updates: ppo.updates,
                rollouts_per_update: ppo.rollouts_per_update,
                kl_penalty_coeff: ppo.kl_penalty_coeff,
                ratio_denominator: ppo.ratio_denominator,
                reward_mode: ppo.reward_mode,
                normalize_advantages: ppo.normalize_advantages,
                policy_epochs: ppo.policy_epochs,
                prompts: 256,
            },
            decode: DecodeConfig::default(),
            sample: SampleSection {
                policy: PolicyChoice::Ppo,
                prompts: 100,
            },
            bon: BonSection {
                n: 8,
                policy: PolicyChoice::Ppo,
                prompts: 100,
            },
            clean: CleanSection {
                threshold: Threshold::Percentile(5.0),
                corrupt_fraction: 0.05,
                input: String::new(),
            },
            probe: ProbeSection {
                padding: 4,
                source: ProbeSource::Bench,
            },
        }
    }
}

/// A config value: parsed from and rendered to its text form.
pub trait Value: Sized {
    const EXPECTED: &'static str;
    fn parse_value(s: &str) -> Option<Self>;
    fn render(&self) -> String;
}

macro_rules! display_value {
    ($t:ty, $what:literal) => {
        impl Value for $t {
            const EXPECTED: &'static str = $what;
            fn parse_value(s: &str) -> Option<Self> {
                s.parse().ok()
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    };
}

display_value!(u64, "unsigned integer");
display_value!(usize, "unsigned integer");
display_value!(bool, "true or false");

impl Value for f64 {
    const EXPECTED: &'static str = "finite number";
    fn parse_value(s: &str) -> Option<Self> {
        s.parse::<f64>().ok().filter(|v| v.is_finite())
    }
    fn render(&self) -> String {
        // Debug keeps a trailing `.0` on integral values; both forms round-trip
        format!("{self:?}")
    }
}

impl Value for String {
    const EXPECTED: &'static str = "text";
    fn parse_value(s: &str) -> Option<Self> {
        Some(s.to_string())
    }
    fn render(&self) -> String {
        self.clone()
    }
}

impl Value for Option<f64> {
    const EXPECTED: &'static str = "number or `none`";
    fn parse_value(s: &str) -> Option<Self> {
        if s == "none" {
            Some(None)
        } else {
            f64::parse_value(s).map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "none".into(), |v| v.render())
    }
}

impl Value for Option<usize> {
    const EXPECTED: &'static str = "unsigned integer or `none`";
    fn parse_value(s: &str) -> Option<Self> {
        if s == "none" {
            Some(None)
        } else {
            s.parse().ok().map(Some)
        }
    }
    fn render(&self) -> String {
        self.map_or_else(|| "none".into(), |v| v.to_string())
    }
}

macro_rules! enum_value {
    ($t:ty, $what:literal, $($text:literal => $variant:expr),+ $(,)?) => {
        impl Value for $t {
            const EXPECTED: &'static str = $what;
            fn parse_value(s: &str) -> Option<Self> {
                match s {
                    $($text => Some($variant),)+
                    _ => None,
                }
            }
            fn render(&self) -> String {
                $(if *self == $variant { return $text.into(); })+
                unreachable!()
            }
        }
    };
}

enum_value!(Pooling, "all_tokens or response_only",
    "all_tokens" => Pooling::AllTokens, "response_only" => Pooling::ResponseOnly);
enum_value!(JudgeKind, "verifier or gold_reward",
    "verifier" => JudgeKind::Verifier, "gold_reward" => JudgeKind::GoldReward);
enum_value!(RatioDenominator, "rollout_snapshot or reference_model",
    "rollout_snapshot" => RatioDenominator::RolloutSnapshot,
    "reference_model" => RatioDenominator::ReferenceModel);
enum_value!(RewardMode, "terminal_only or per_step",
    "terminal_only" => RewardMode::TerminalOnly, "per_step" => RewardMode::PerStep);
enum_value!(RmInit, "policy or scratch", "policy" => RmInit::Policy, "scratch" => RmInit::Scratch);
enum_value!(PolicyChoice, "sft or ppo", "sft" => PolicyChoice::Sft, "ppo" => PolicyChoice::Ppo);
enum_value!(ProbeSource, "bench or pairs", "bench" => ProbeSource::Bench, "pairs" => ProbeSource::Pairs);

impl Value for Threshold {
    const EXPECTED: &'static str = "percentile:P or absolute:X";
    fn parse_value(s: &str) -> Option<Self> {
        let (kind, v) = s.split_once(':')?;
        let v = f64::parse_value(v.trim())?;
        match kind.trim() {
            "percentile" if (0.0..=100.0).contains(&v) => Some(Threshold::Percentile(v)),
            "absolute" => Some(Threshold::Absolute(v)),
            _ => None,
        }
    }
    fn render(&self) -> String {
        match self {
            Threshold::Percentile(p) => format!("percentile:{}", p.render()),
            Threshold::Absolute(x) => format!("absolute:{}", x.render()),
        }
    }
}

fn expected<T: Value>(_: &T) -> &'static str {
    T::EXPECTED
}

macro_rules! config_keys {
    ($($key:literal => $($field:ident).+;)*) => {
        /// Every accepted key, in serialization order.
        pub const KEYS: &[&str] = &[$($key),*];

        impl RunConfig {
            /// Sets one key from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let value = value.trim();
                match key.trim() {
                    $($key => {
                        self.$($field).+ = Value::parse_value(value).ok_or_else(|| CliError::BadValue {
                            key: $key.into(),
                            value: value.into(),
                            expected: expected(&self.$($field).+),
                        })?;
                    })*
                    other => return Err(CliError::UnknownKey(other.into())),
                }
                Ok(())
            }

            /// `(key, rendered value)` for every key.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$($field).+.render())),*]
            }
        }
    };
}

config_keys! {
    "run.seed" => seed;
    "paths.data" => paths.data;
    "paths.checkpoints" => paths.checkpoints;
    "paths.reports" => paths.reports;
    "model.vocab" => dims.vocab;
    "model.hidden" => dims.hidden;
    "model.modal_dim" => dims.modal_dim;
    "model.max_positions" => dims.max_positions;
    "model.pooling" => pooling;
    "tasks.count" => tasks.count;
    "tasks.mix.arithmetic" => tasks.mix.arithmetic;
    "tasks.mix.instruction_constraint" => tasks.mix.instruction_constraint;
    "tasks.mix.modal_count" => tasks.mix.modal_count;
    "tasks.mix.freeform_gold" => tasks.mix.freeform_gold;
    "sft.p_correct" => sft.p_correct;
    "sft.demos" => sft.demos;
    "sft.lr" => sft.lr;
    "sft.batch_size" => sft.batch_size;
    "sft.steps" => sft.steps;
    "prefs.tasks" => prefs.tasks;
    "prefs.k_candidates" => prefs.k_candidates;
    "prefs.judge" => prefs.judge;
    "prefs.gold_fallback" => prefs.gold_fallback;
    "prefs.bench_fraction" => prefs.bench_fraction;
    "rm.lr" => rm.lr;
    "rm.batch_size" => rm.batch_size;
    "rm.max_steps" => rm.max_steps;
    "rm.eval_fraction" => rm.eval_fraction;
    "rm.length_ratio_max" => rm.length_ratio_max;
    "rm.eval_every" => rm.eval_every;
    "rm.init" => rm.init;
    "ppo.gamma" => ppo.gamma;
    "ppo.gae_beta" => ppo.gae_beta;
    "ppo.clip_epsilon" => ppo.clip_epsilon;
    "ppo.lr" => ppo.lr;
    "ppo.critic_lr" => ppo.critic_lr;
    "ppo.batch_size" => ppo.batch_size;
    "ppo.updates" => ppo.updates;
    "ppo.rollouts_per_update" => ppo.rollouts_per_update;
    "ppo.kl_penalty_coeff" => ppo.kl_penalty_coeff;
    "ppo.ratio_denominator" => ppo.ratio_denominator;
    "ppo.reward_mode" => ppo.reward_mode;
    "ppo.normalize_advantages" => ppo.normalize_advantages;
    "ppo.policy_epochs" => ppo.policy_epochs;
    "ppo.prompts" => ppo.prompts;
    "decode.temperature" => decode.temperature;
    "decode.max_len" => decode.max_len;
    "decode.stop_token" => decode.stop_token;
    "sample.policy" => sample.policy;
    "sample.prompts" => sample.prompts;
    "bon.n" => bon.n;
    "bon.policy" => bon.policy;
    "bon.prompts" => bon.prompts;
    "clean.threshold" => clean.threshold;
    "clean.corrupt_fraction" => clean.corrupt_fraction;
    "clean.input" => clean.input;
    "probe.padding" => probe.padding;
    "probe.source" => probe.source;
}

impl RunConfig {
    /// Parses config text. Blank lines and `#` comments are ignored; keys
    /// not listed set keep their defaults.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CliError::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                msg: "expected `section.key = value`".into(),
            })?;
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text, path)
    }

    /// Applies a `section.key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("--set expects section.key=value, got `{assignment}`")))?;
        self.set(k, v)
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`serialize`](Self::serialize).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.serialize().as_bytes());
        hex::encode(&digest[..8])
    }

    pub fn hash_u64(&self) -> u64 {
        u64::from_str_radix(&self.hash(), 16).expect("hex digest")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("paths.data", &self.paths.data),
            ("paths.checkpoints", &self.paths.checkpoints),
            ("paths.reports", &self.paths.reports),
        ] {
            if p.trim().is_empty() {
                return Err(CliError::Invalid(format!("{name} must not be empty")));
            }
        }
        if self.dims.vocab != prefrl_core::vocab::VOCAB_SIZE {
            return Err(CliError::Invalid(format!(
                "model.vocab must be {} (the synthetic token set)",
                prefrl_core::vocab::VOCAB_SIZE
            )));
        }
        if self.dims.hidden == 0 || self.dims.max_positions == 0 {
            return Err(CliError::Invalid("model dimensions must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.prefs.bench_fraction) {
            return Err(CliError::Invalid("prefs.bench_fraction must lie in [0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.sft.p_correct) || !(0.0..=1.0).contains(&self.clean.corrupt_fraction) {
            return Err(CliError::Invalid("probabilities must lie in [0, 1]".into()));
        }
        self.rm_config().validate()?;
        self.ppo_config().validate()?;
        self.decode.validate()?;
        Ok(())
    }

    pub fn rm_config(&self) -> RMTrainConfig {
        RMTrainConfig {
            lr: self.rm.lr,
            batch_size: self.rm.batch_size,
            max_steps: self.rm.max_steps,
            eval_fraction: self.rm.eval_fraction,
            length_ratio_max: self.rm.length_ratio_max,
            eval_every: self.rm.eval_every,
            pooling: self.pooling,
            dims: self.dims,
        }
    }

    pub fn ppo_config(&self) -> PPOConfig {
        let p = &self.ppo;
        PPOConfig {
            gamma: p.gamma,
            gae_beta: p.gae_beta,
            clip_epsilon: p.clip_epsilon,
            lr: p.lr,
            critic_lr: p.critic_lr,
            batch_size: p.batch_size,
            updates: p.updates,
            rollouts_per_update: p.rollouts_per_update,
            kl_penalty_coeff: p.kl_penalty_coeff,
            ratio_denominator: p.ratio_denominator,
            reward_mode: p.reward_mode,
            normalize_advantages: p.normalize_advantages,
            policy_epochs: p.policy_epochs,
            pooling: self.pooling,
            decode: self.decode,
        }
    }

    pub fn sft_config(&self) -> SftConfig {
        SftConfig {
            lr: self.sft.lr,
            batch_size: self.sft.batch_size,
            steps: self.sft.steps,
        }
    }
}

/// Resolved output directories for one run.
#[derive(Debug, Clone)]
pub struct RunDirs {
    pub data: PathBuf,
    pub checkpoints: PathBuf,
    pub reports: PathBuf,
}

impl RunDirs {
    pub fn resolve(cfg: &RunConfig, out: &Path) -> Self {
        let join = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                out.join(p)
            }
        };
        Self {
            data: join(&cfg.paths.data),
            checkpoints: join(&cfg.paths.checkpoints),
            reports: join(&cfg.paths.reports),
        }
    }

    pub fn create(&self) -> Result<()> {
        for d in [&self.data, &self.checkpoints, &self.reports] {
            std::fs::create_dir_all(d).map_err(io_err(d))?;
        }
        Ok(())
    }
}
