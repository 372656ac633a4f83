//! Group-relative policy optimization on a small differentiable ranking
//! policy.

mod objective;
mod policy;
pub mod synthetic;
mod train;

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

pub use objective::{grpo_objective, sample_rollouts, token_ratio, ObjectiveValue, RolloutGroup};
pub use policy::ToyPolicy;
pub use train::{
    evaluate_policy, render_completion, train, Example, PolicyEval, RewardTerms, TrainingLog,
    TrainingStep,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrpoError {
    #[error("a group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(&'static str),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(&'static str),
    #[error("non-finite parameter")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub learning_rate: f64,
    pub std_floor: f64,
    pub steps: usize,
    /// Prompt groups sampled per update.
    pub prompts_per_step: usize,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 16,
            clip_epsilon: 0.2,
            kl_beta: 0.01,
            learning_rate: 0.5,
            std_floor: 1e-8,
            steps: 2000,
            prompts_per_step: 8,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        if self.group_size < 2 {
            return Err(GrpoError::ConfigInvalid("group_size must be at least 2"));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(GrpoError::ConfigInvalid("clip_epsilon must lie in (0, 1)"));
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return Err(GrpoError::ConfigInvalid("kl_beta must be finite and nonnegative"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(GrpoError::ConfigInvalid("learning_rate must be finite and nonnegative"));
        }
        if !(self.std_floor > 0.0 && self.std_floor.is_finite()) {
            return Err(GrpoError::ConfigInvalid("std_floor must be positive"));
        }
        if self.prompts_per_step == 0 {
            return Err(GrpoError::ConfigInvalid("prompts_per_step must be positive"));
        }
        Ok(())
    }
}

/// `A_i = (r_i - mean) / max(std, std_floor)` with the population standard
/// deviation. A group of identical rewards gets all-zero advantages.
pub fn group_advantages(rewards: &[f64], cfg: &GrpoConfig) -> Result<Vec<f64>, GrpoError> {
    let g = rewards.len();
    if g < 2 {
        return Err(GrpoError::GroupTooSmall(g));
    }
    if rewards.iter().all(|&r| r == rewards[0]) {
        return Ok(vec![0.0; g]);
    }
    let n = g as f64;
    // corrected two-pass: fold the rounding residual of the mean back in
    let mean = rewards.iter().sum::<f64>() / n;
    let residual = rewards.iter().map(|r| r - mean).sum::<f64>() / n;
    let dev: Vec<f64> = rewards.iter().map(|r| (r - mean) - residual).collect();
    let var = dev.iter().map(|d| d * d).sum::<f64>() / n;
    let std = libm::sqrt(var).max(cfg.std_floor);
    Ok(dev.into_iter().map(|d| d / std).collect())
}
