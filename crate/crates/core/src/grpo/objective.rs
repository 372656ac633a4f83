use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::policy::{check_sequence, masked_softmax, ToyPolicy};
use super::{GrpoConfig, GrpoError};
use crate::mbti::MbtiType;

const N_TYPES: usize = MbtiType::COUNT;

/// One prompt's group of sampled completions and everything the objective
/// needs about them.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutGroup {
    pub features: Vec<f64>,
    /// Each completion is a list of `k` distinct type indices.
    pub completions: Vec<Vec<usize>>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    /// Per-token log-probabilities under the sampling policy.
    pub old_logprobs: Vec<Vec<f64>>,
    /// Per-token log-probabilities under the frozen reference policy.
    pub ref_logprobs: Vec<Vec<f64>>,
}

impl RolloutGroup {
    pub fn len(&self) -> usize {
        self.completions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.completions.is_empty()
    }

    /// Fills `ref_logprobs` from `reference`.
    pub fn attach_reference(&mut self, reference: &ToyPolicy) -> Result<(), GrpoError> {
        self.ref_logprobs = self
            .completions
            .iter()
            .map(|seq| reference.token_logprobs(&self.features, seq))
            .collect::<Result<_, _>>()?;
        Ok(())
    }

    /// Sets rewards and their group-relative advantages.
    pub fn set_rewards(&mut self, rewards: Vec<f64>, cfg: &GrpoConfig) -> Result<(), GrpoError> {
        if rewards.len() != self.len() {
            return Err(GrpoError::ShapeMismatch("one reward per completion"));
        }
        self.advantages = super::group_advantages(&rewards, cfg)?;
        self.rewards = rewards;
        Ok(())
    }

    fn check(&self, policy: &ToyPolicy) -> Result<(), GrpoError> {
        let g = self.len();
        if g == 0 {
            return Err(GrpoError::ShapeMismatch("empty group"));
        }
        policy.check_features(&self.features)?;
        if self.rewards.len() != g
            || self.advantages.len() != g
            || self.old_logprobs.len() != g
            || self.ref_logprobs.len() != g
        {
            return Err(GrpoError::ShapeMismatch("group arrays must all have G entries"));
        }
        for ((seq, old), reference) in self
            .completions
            .iter()
            .zip(&self.old_logprobs)
            .zip(&self.ref_logprobs)
        {
            check_sequence(seq, policy.k())?;
            if old.len() != seq.len() || reference.len() != seq.len() {
                return Err(GrpoError::ShapeMismatch("one log-probability per token"));
            }
        }
        Ok(())
    }
}

/// Samples `group_size` sequences from `policy`, recording their per-token
/// log-probabilities as `old_logprobs`. Rewards, advantages and reference
/// log-probabilities are left empty.
pub fn sample_rollouts(
    policy: &ToyPolicy,
    features: &[f64],
    group_size: usize,
    seed: u64,
) -> Result<RolloutGroup, GrpoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut completions = Vec::with_capacity(group_size);
    let mut old_logprobs = Vec::with_capacity(group_size);
    for _ in 0..group_size {
        let (seq, lps) = policy.sample(features, &mut rng)?;
        completions.push(seq);
        old_logprobs.push(lps);
    }
    Ok(RolloutGroup {
        features: features.to_vec(),
        completions,
        rewards: Vec::new(),
        advantages: Vec::new(),
        old_logprobs,
        ref_logprobs: Vec::new(),
    })
}

/// Probability ratio of the current to the sampling policy for one token.
pub fn token_ratio(new_logprob: f64, old_logprob: f64) -> f64 {
    libm::exp(new_logprob - old_logprob)
}

/// Value and exact gradient of the clipped group objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveValue {
    pub value: f64,
    /// Same layout as [`ToyPolicy::theta`].
    pub gradient: Vec<f64>,
    /// Mean per-token KL estimate.
    pub kl: f64,
    /// Fraction of tokens on the clipped branch.
    pub clip_fraction: f64,
}

/// Evaluates
///
/// ```text
/// (1/G) Σ_i (1/T_i) Σ_t [ min(p A_i, clip(p, 1-ε, 1+ε) A_i) - β KL_t ]
/// ```
///
/// with `p = π_θ/π_old` per token and the per-token estimator
/// `KL_t = r - ln r - 1`, `r = π_ref/π_θ`. The gradient is with respect to
/// `policy.theta()`.
pub fn grpo_objective(
    group: &RolloutGroup,
    policy: &ToyPolicy,
    cfg: &GrpoConfig,
) -> Result<ObjectiveValue, GrpoError> {
    group.check(policy)?;
    let eps = cfg.clip_epsilon;
    let beta = cfg.kl_beta;
    let g = group.len() as f64;
    let z = policy.logits(&group.features);

    let mut value = 0.0;
    let mut kl_sum = 0.0;
    let mut clipped = 0usize;
    let mut tokens = 0usize;
    // d objective / d logits, shared by every token since x is fixed per group
    let mut dz = [0.0; N_TYPES];

    for (i, seq) in group.completions.iter().enumerate() {
        let adv = group.advantages[i];
        let scale = 1.0 / (g * seq.len() as f64);
        let mut available = [true; N_TYPES];
        for (t, &tok) in seq.iter().enumerate() {
            let probs = masked_softmax(&z, &available);
            let logp = libm::log(probs[tok]);
            let ratio = token_ratio(logp, group.old_logprobs[i][t]);

            let clip_active = (adv > 0.0 && ratio > 1.0 + eps) || (adv < 0.0 && ratio < 1.0 - eps);
            let (surrogate, d_surrogate) = if clip_active {
                (ratio.clamp(1.0 - eps, 1.0 + eps) * adv, 0.0)
            } else {
                (ratio * adv, ratio * adv)
            };

            let log_r = group.ref_logprobs[i][t] - logp;
            let r = libm::exp(log_r);
            let kl = r - log_r - 1.0;
            // d kl / d logp = 1 - r
            let d_logp = d_surrogate - beta * (1.0 - r);

            value += scale * (surrogate - beta * kl);
            kl_sum += kl;
            clipped += usize::from(clip_active);
            tokens += 1;

            let c = scale * d_logp;
            for j in 0..N_TYPES {
                if available[j] {
                    dz[j] -= c * probs[j];
                }
            }
            dz[tok] += c;
            available[tok] = false;
        }
    }

    let mut gradient = vec![0.0; group.features.len() * N_TYPES];
    for (row, &x) in gradient.chunks_exact_mut(N_TYPES).zip(&group.features) {
        for (gj, &d) in row.iter_mut().zip(&dz) {
            *gj = x * d;
        }
    }
    Ok(ObjectiveValue {
        value,
        gradient,
        kl: kl_sum / tokens as f64,
        clip_fraction: clipped as f64 / tokens as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cfg() -> GrpoConfig {
        GrpoConfig::default()
    }

    fn filled_group(policy: &ToyPolicy, reference: &ToyPolicy, seed: u64) -> RolloutGroup {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features: Vec<f64> = (0..policy.feature_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut group = sample_rollouts(policy, &features, 4, seed).unwrap();
        let rewards = (0..4).map(|_| rng.random_range(0.0..6.0)).collect();
        group.set_rewards(rewards, &cfg()).unwrap();
        group.attach_reference(reference).unwrap();
        group
    }

    #[test]
    fn token_ratio_examples() {
        assert_eq!(token_ratio(-1.0, -1.0), 1.0);
        assert!((token_ratio(-1.0, -2.0) - core::f64::consts::E).abs() < 1e-12);
        assert!((token_ratio(-2.0, -1.0) - 1.0 / core::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn identical_policies_give_mean_advantage() {
        let policy = ToyPolicy::random(4, 2, 0.5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let group = filled_group(&policy, &policy, 4);
        let mut c = cfg();
        c.kl_beta = 0.7;
        let out = grpo_objective(&group, &policy, &c).unwrap();
        let mean_adv = group.advantages.iter().sum::<f64>() / group.len() as f64;
        assert!((out.value - mean_adv).abs() < 1e-12);
        assert!(out.kl.abs() < 1e-15);
        assert_eq!(out.clip_fraction, 0.0);
    }

    #[test]
    fn clipped_token_has_zero_gradient() {
        // one token, A > 0, ratio 1.5 under clip 0.2 -> surrogate 1.2 A, flat in θ
        let policy = ToyPolicy::random(3, 1, 0.5, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let features = vec![0.5, -0.2, 0.9];
        let seq = vec![5usize];
        let logp = policy.token_logprobs(&features, &seq).unwrap()[0];
        let old = logp - libm::log(1.5);
        let group = RolloutGroup {
            features,
            completions: vec![seq],
            rewards: vec![1.0],
            advantages: vec![0.8],
            old_logprobs: vec![vec![old]],
            ref_logprobs: vec![vec![logp]],
        };
        let out = grpo_objective(&group, &policy, &cfg()).unwrap();
        assert!((out.value - 1.2 * 0.8).abs() < 1e-12);
        assert!(out.gradient.iter().all(|&g| g == 0.0));
        assert_eq!(out.clip_fraction, 1.0);

        // A < 0 with ratio below 1 - ε is also flat
        let mut neg = group.clone();
        neg.advantages = vec![-0.8];
        neg.old_logprobs = vec![vec![logp - libm::log(0.5)]];
        let out = grpo_objective(&neg, &policy, &cfg()).unwrap();
        assert!((out.value - 0.8 * -0.8).abs() < 1e-12);
        assert!(out.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn shift_invariance() {
        let policy = ToyPolicy::random(4, 3, 0.5, &mut ChaCha8Rng::seed_from_u64(21)).unwrap();
        let reference = ToyPolicy::random(4, 3, 0.5, &mut ChaCha8Rng::seed_from_u64(22)).unwrap();
        let group = filled_group(&policy, &reference, 5);
        let mut shifted = group.clone();
        let rewards: Vec<f64> = group.rewards.iter().map(|r| r + 3.25).collect();
        shifted.set_rewards(rewards, &cfg()).unwrap();
        for (a, b) in group.advantages.iter().zip(&shifted.advantages) {
            assert!((a - b).abs() < 1e-12);
        }
        let a = grpo_objective(&group, &policy, &cfg()).unwrap();
        let b = grpo_objective(&shifted, &policy, &cfg()).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
        for (x, y) in a.gradient.iter().zip(&b.gradient) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_estimate_nonnegative() {
        for seed in 0..20 {
            let policy = ToyPolicy::random(3, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let reference =
                ToyPolicy::random(3, 3, 1.0, &mut ChaCha8Rng::seed_from_u64(seed + 100)).unwrap();
            let group = filled_group(&policy, &reference, seed);
            assert!(grpo_objective(&group, &policy, &cfg()).unwrap().kl >= 0.0);
        }
    }

    #[test]
    fn shape_errors() {
        let policy = ToyPolicy::zeros(3, 2).unwrap();
        let mut group = filled_group(&policy, &policy, 1);
        group.advantages.pop();
        assert!(matches!(
            grpo_objective(&group, &policy, &cfg()),
            Err(GrpoError::ShapeMismatch(_))
        ));
        let mut group = filled_group(&policy, &policy, 1);
        group.completions[0] = vec![1, 1];
        assert!(grpo_objective(&group, &policy, &cfg()).is_err());
        let other = ToyPolicy::zeros(4, 2).unwrap();
        let group = filled_group(&policy, &policy, 1);
        assert!(grpo_objective(&group, &other, &cfg()).is_err());
    }
}
