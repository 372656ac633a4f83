use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objective::{grpo_objective, sample_rollouts};
use super::policy::ToyPolicy;
use super::{GrpoConfig, GrpoError};
use crate::mbti::MbtiType;
use crate::parser::{format_sft_target, RankedPrediction};
use crate::reward::{ndcg_at_k, ds_reward, total_reward, RewardConfig};

/// One training or evaluation user.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Example {
    pub features: Vec<f64>,
    pub truth: MbtiType,
}

/// Which reward terms feed the advantages. Both are always measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RewardTerms {
    pub ndcg: bool,
    pub ds: bool,
}

impl Default for RewardTerms {
    fn default() -> Self {
        RewardTerms {
            ndcg: true,
            ds: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingStep {
    pub step: usize,
    /// Mean of the reward actually optimized.
    pub mean_reward: f64,
    pub mean_ndcg: f64,
    pub mean_ds: f64,
    pub kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub steps: Vec<TrainingStep>,
}

impl TrainingLog {
    /// Means of consecutive non-overlapping windows of `mean_reward`; a
    /// trailing partial window is dropped.
    pub fn window_means(&self, window: usize) -> Vec<f64> {
        if window == 0 {
            return Vec::new();
        }
        self.steps
            .chunks_exact(window)
            .map(|c| c.iter().map(|s| s.mean_reward).sum::<f64>() / window as f64)
            .collect()
    }
}

/// Canonical completion text for a sampled index sequence.
pub fn render_completion(seq: &[usize]) -> String {
    let types = seq
        .iter()
        .map(|&i| MbtiType::from_index(i).expect("policy emits indices below 16"))
        .collect();
    let pred = RankedPrediction::new(types).expect("policy emits distinct indices");
    format_sft_target("", &pred)
}

/// Greedy-decoding quality of a policy on held-out users.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyEval {
    pub ndcg: f64,
    pub ds: f64,
    pub top1_accuracy: f64,
}

pub fn evaluate_policy(
    policy: &ToyPolicy,
    data: &[Example],
    reward_cfg: &RewardConfig,
) -> Result<PolicyEval, GrpoError> {
    if data.is_empty() {
        return Err(GrpoError::ConfigInvalid("evaluation set is empty"));
    }
    let (mut ndcg, mut ds, mut hits) = (0.0, 0.0, 0usize);
    for ex in data {
        let types = policy
            .greedy(&ex.features)?
            .into_iter()
            .map(|i| MbtiType::from_index(i).expect("index below 16"))
            .collect();
        let pred = RankedPrediction::new(types).expect("greedy picks distinct types");
        ndcg += ndcg_at_k(&pred, ex.truth, reward_cfg);
        ds += ds_reward(&pred, ex.truth, reward_cfg);
        hits += usize::from(pred.first() == ex.truth);
    }
    let n = data.len() as f64;
    Ok(PolicyEval {
        ndcg: ndcg / n,
        ds: ds / n,
        top1_accuracy: hits as f64 / n,
    })
}

/// Runs `cfg.steps` GRPO updates starting from `initial`, which also serves
/// as the frozen reference policy. Each step snapshots the sampling policy,
/// draws `prompts_per_step` users, samples a group for each, scores the
/// rendered completions through the parser and reward kernel, and takes one
/// gradient-ascent step on the mean group objective.
pub fn train(
    initial: ToyPolicy,
    dataset: &[Example],
    cfg: &GrpoConfig,
    reward_cfg: &RewardConfig,
    terms: RewardTerms,
) -> Result<(ToyPolicy, TrainingLog), GrpoError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(GrpoError::ConfigInvalid("training set is empty"));
    }
    if initial.k() != reward_cfg.k() {
        return Err(GrpoError::ConfigInvalid("policy k must equal reward k"));
    }
    for ex in dataset {
        initial.check_features(&ex.features)?;
    }

    let reference = initial.clone();
    let mut policy = initial;
    let mut log = TrainingLog::default();

    for step in 0..cfg.steps {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(step as u64 + 1);

        let mut direction = vec![0.0; policy.theta().len()];
        let (mut reward_sum, mut ndcg_sum, mut ds_sum, mut kl_sum, mut clip_sum) =
            (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut n_completions = 0usize;

        for _ in 0..cfg.prompts_per_step {
            let ex = &dataset[rng.random_range(0..dataset.len())];
            let mut group = sample_rollouts(&policy, &ex.features, cfg.group_size, rng.next_u64())?;
            let mut rewards = Vec::with_capacity(group.len());
            for seq in &group.completions {
                let r = total_reward(&render_completion(seq), ex.truth, reward_cfg);
                ndcg_sum += r.ndcg;
                ds_sum += r.ds;
                let used = if terms.ndcg { r.ndcg } else { 0.0 } + if terms.ds { r.ds } else { 0.0 };
                reward_sum += used;
                rewards.push(used);
            }
            n_completions += group.len();
            group.set_rewards(rewards, cfg)?;
            group.attach_reference(&reference)?;

            let obj = grpo_objective(&group, &policy, cfg)?;
            direction.iter_mut().zip(&obj.gradient).for_each(|(d, g)| *d += g);
            kl_sum += obj.kl;
            clip_sum += obj.clip_fraction;
        }

        let prompts = cfg.prompts_per_step as f64;
        policy.step(&direction, cfg.learning_rate / prompts)?;

        let n = n_completions as f64;
        log.steps.push(TrainingStep {
            step,
            mean_reward: reward_sum / n,
            mean_ndcg: ndcg_sum / n,
            mean_ds: ds_sum / n,
            kl: kl_sum / prompts,
            clip_fraction: clip_sum / prompts,
        });
    }
    Ok((policy, log))
}
