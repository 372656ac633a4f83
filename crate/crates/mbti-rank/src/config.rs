//! Run configuration: defaults, a flat `section.key = value` file, then
//! command-line overrides.

use std::net::IpAddr;
use std::path::Path;
use std::str::FromStr;

use mbti_rank_core::grpo::synthetic::SyntheticSetup;
use mbti_rank_core::grpo::GrpoConfig;
use mbti_rank_core::metrics::F1Average;
use mbti_rank_core::pipeline::{MaskMode, PipelineConfig};
use mbti_rank_core::{DimWeightConfig, RewardConfig};
use thiserror::Error;

use crate::io::IoError;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("line {line}: expected `section.key = value`")]
    Syntax { line: usize },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("{key}: invalid value {value:?}")]
    InvalidValue { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServiceConfig {
    pub host: IpAddr,
    pub port: u16,
    pub max_body_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            host: IpAddr::from([127, 0, 0, 1]),
            port: 8077,
            max_body_bytes: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub k: usize,
    pub epsilon: f64,
    pub pipeline: PipelineConfig,
    pub max_kept: Option<usize>,
    pub grpo: GrpoConfig,
    pub synthetic: SyntheticSetup,
    pub service: ServiceConfig,
    pub f1_average: F1Average,
    pub strict: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            k: RewardConfig::DEFAULT_K,
            epsilon: DimWeightConfig::DEFAULT_EPSILON,
            pipeline: PipelineConfig::default(),
            max_kept: None,
            grpo: GrpoConfig::default(),
            synthetic: SyntheticSetup::default(),
            service: ServiceConfig::default(),
            f1_average: F1Average::Macro,
            strict: false,
        }
    }
}

fn invalid(key: &str, value: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| invalid(key, value))
}

impl RunConfig {
    /// Defaults overlaid with the entries of `path`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                IoError::FileNotFound(path.to_path_buf())
            } else {
                IoError::Io {
                    path: path.to_path_buf(),
                    source: e,
                }
            }
        })?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        match key {
            "run.seed" => self.seed = parse(key, v)?,
            "reward.k" => self.k = parse(key, v)?,
            "reward.epsilon" => self.epsilon = parse(key, v)?,
            "pipeline.max_posts_per_user" => self.pipeline.max_posts_per_user = parse(key, v)?,
            "pipeline.max_tokens_per_post" => self.pipeline.max_tokens_per_post = parse(key, v)?,
            "pipeline.mask_token" => self.pipeline.mask_token = v.to_string(),
            "pipeline.mask_mode" => {
                self.pipeline.mask_mode = match v {
                    "replace" => MaskMode::Replace,
                    "remove" => MaskMode::Remove,
                    _ => return Err(invalid(key, v)),
                }
            }
            "pipeline.mask_wildcards" => self.pipeline.mask_wildcards = parse(key, v)?,
            "pipeline.lenient_closer" => self.pipeline.lenient_closer = parse(key, v)?,
            "pipeline.max_kept" => {
                self.max_kept = if v == "none" { None } else { Some(parse(key, v)?) }
            }
            "grpo.group_size" => self.grpo.group_size = parse(key, v)?,
            "grpo.clip_epsilon" => self.grpo.clip_epsilon = parse(key, v)?,
            "grpo.kl_beta" => self.grpo.kl_beta = parse(key, v)?,
            "grpo.learning_rate" => self.grpo.learning_rate = parse(key, v)?,
            "grpo.std_floor" => self.grpo.std_floor = parse(key, v)?,
            "grpo.steps" => self.grpo.steps = parse(key, v)?,
            "grpo.prompts_per_step" => self.grpo.prompts_per_step = parse(key, v)?,
            "synthetic.dim" => self.synthetic.dim = parse(key, v)?,
            "synthetic.noise_sigma" => self.synthetic.noise_sigma = parse(key, v)?,
            "synthetic.train_size" => self.synthetic.train_size = parse(key, v)?,
            "synthetic.heldout_size" => self.synthetic.heldout_size = parse(key, v)?,
            "synthetic.init_scale" => self.synthetic.init_scale = parse(key, v)?,
            "service.host" => self.service.host = parse(key, v)?,
            "service.port" => self.service.port = parse(key, v)?,
            "service.max_body_bytes" => self.service.max_body_bytes = parse(key, v)?,
            "eval.f1_average" => {
                self.f1_average = match v {
                    "macro" => F1Average::Macro,
                    "micro" => F1Average::Micro,
                    "weighted" => F1Average::Weighted,
                    _ => return Err(invalid(key, v)),
                }
            }
            "eval.strict" => self.strict = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Every setting as `(key, value)` in file syntax.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.pipeline;
        let g = &self.grpo;
        let s = &self.synthetic;
        let mask_mode = match p.mask_mode {
            MaskMode::Replace => "replace",
            MaskMode::Remove => "remove",
        };
        let f1 = match self.f1_average {
            F1Average::Macro => "macro",
            F1Average::Micro => "micro",
            F1Average::Weighted => "weighted",
        };
        vec![
            ("run.seed", self.seed.to_string()),
            ("reward.k", self.k.to_string()),
            ("reward.epsilon", self.epsilon.to_string()),
            ("pipeline.max_posts_per_user", p.max_posts_per_user.to_string()),
            ("pipeline.max_tokens_per_post", p.max_tokens_per_post.to_string()),
            ("pipeline.mask_token", p.mask_token.clone()),
            ("pipeline.mask_mode", mask_mode.to_string()),
            ("pipeline.mask_wildcards", p.mask_wildcards.to_string()),
            ("pipeline.lenient_closer", p.lenient_closer.to_string()),
            ("pipeline.max_kept", self.max_kept.map_or("none".into(), |m| m.to_string())),
            ("grpo.group_size", g.group_size.to_string()),
            ("grpo.clip_epsilon", g.clip_epsilon.to_string()),
            ("grpo.kl_beta", g.kl_beta.to_string()),
            ("grpo.learning_rate", g.learning_rate.to_string()),
            ("grpo.std_floor", g.std_floor.to_string()),
            ("grpo.steps", g.steps.to_string()),
            ("grpo.prompts_per_step", g.prompts_per_step.to_string()),
            ("synthetic.dim", s.dim.to_string()),
            ("synthetic.noise_sigma", s.noise_sigma.to_string()),
            ("synthetic.train_size", s.train_size.to_string()),
            ("synthetic.heldout_size", s.heldout_size.to_string()),
            ("synthetic.init_scale", s.init_scale.to_string()),
            ("service.host", self.service.host.to_string()),
            ("service.port", self.service.port.to_string()),
            ("service.max_body_bytes", self.service.max_body_bytes.to_string()),
            ("eval.f1_average", f1.to_string()),
            ("eval.strict", self.strict.to_string()),
        ]
    }

    pub fn render(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn reward(&self) -> Result<RewardConfig, ConfigError> {
        let dw = DimWeightConfig::new(self.epsilon).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        RewardConfig::new(self.k, dw).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Pipeline settings with `k` taken from the reward section.
    pub fn pipeline(&self) -> Result<PipelineConfig, ConfigError> {
        let cfg = PipelineConfig {
            k: self.k,
            ..self.pipeline.clone()
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn grpo(&self) -> Result<GrpoConfig, ConfigError> {
        let cfg = GrpoConfig {
            seed: self.seed,
            ..self.grpo.clone()
        };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}
