use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::GrpoError;
use crate::mbti::MbtiType;

const N_TYPES: usize = MbtiType::COUNT;

/// Autoregressive ranking policy over the 16 types.
///
/// Logits are `z = thetaᵀ x` for a user feature vector `x`. Step `t` of a
/// sequence draws from the softmax of `z` restricted to the types not yet
/// chosen, so every sequence is a list of `k` distinct types.
///
/// `theta` is stored row-major with shape `feature_dim × 16`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    feature_dim: usize,
    k: usize,
    theta: Vec<f64>,
}

impl ToyPolicy {
    pub fn zeros(feature_dim: usize, k: usize) -> Result<Self, GrpoError> {
        Self::from_theta(feature_dim, k, vec![0.0; feature_dim * N_TYPES])
    }

    pub fn from_theta(feature_dim: usize, k: usize, theta: Vec<f64>) -> Result<Self, GrpoError> {
        if feature_dim == 0 || !(1..=N_TYPES).contains(&k) {
            return Err(GrpoError::ConfigInvalid("policy needs feature_dim > 0 and k in 1..=16"));
        }
        if theta.len() != feature_dim * N_TYPES {
            return Err(GrpoError::ShapeMismatch("theta length must be feature_dim * 16"));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(GrpoError::NonFinite);
        }
        Ok(ToyPolicy {
            feature_dim,
            k,
            theta,
        })
    }

    /// Entries drawn i.i.d. from `N(0, scale²)`.
    pub fn random<R: Rng + ?Sized>(
        feature_dim: usize,
        k: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self, GrpoError> {
        let normal = Normal::new(0.0, scale).map_err(|_| GrpoError::ConfigInvalid("init scale"))?;
        let theta = (0..feature_dim * N_TYPES).map(|_| normal.sample(rng)).collect();
        Self::from_theta(feature_dim, k, theta)
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `theta += step * direction`, rejecting non-finite results.
    pub fn step(&mut self, direction: &[f64], step: f64) -> Result<(), GrpoError> {
        if direction.len() != self.theta.len() {
            return Err(GrpoError::ShapeMismatch("update direction shape"));
        }
        let updated: Vec<f64> = self
            .theta
            .iter()
            .zip(direction)
            .map(|(t, d)| t + step * d)
            .collect();
        if updated.iter().any(|v| !v.is_finite()) {
            return Err(GrpoError::NonFinite);
        }
        self.theta = updated;
        Ok(())
    }

    pub fn logits(&self, features: &[f64]) -> [f64; N_TYPES] {
        let mut z = [0.0; N_TYPES];
        for (row, &x) in self.theta.chunks_exact(N_TYPES).zip(features) {
            for (zj, &w) in z.iter_mut().zip(row) {
                *zj += w * x;
            }
        }
        z
    }

    pub(crate) fn check_features(&self, features: &[f64]) -> Result<(), GrpoError> {
        if features.len() != self.feature_dim {
            return Err(GrpoError::ShapeMismatch("feature vector length"));
        }
        Ok(())
    }

    /// Log-probability of each token of `seq` given the tokens before it.
    pub fn token_logprobs(&self, features: &[f64], seq: &[usize]) -> Result<Vec<f64>, GrpoError> {
        self.check_features(features)?;
        check_sequence(seq, self.k)?;
        let z = self.logits(features);
        let mut available = [true; N_TYPES];
        Ok(seq
            .iter()
            .map(|&tok| {
                let lp = z[tok] - masked_logsumexp(&z, &available);
                available[tok] = false;
                lp
            })
            .collect())
    }

    pub fn sequence_logprob(&self, features: &[f64], seq: &[usize]) -> Result<f64, GrpoError> {
        Ok(self.token_logprobs(features, seq)?.iter().sum())
    }

    /// Draws one sequence of `k` distinct types and its per-token log-probabilities.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        features: &[f64],
        rng: &mut R,
    ) -> Result<(Vec<usize>, Vec<f64>), GrpoError> {
        self.check_features(features)?;
        let z = self.logits(features);
        let mut available = [true; N_TYPES];
        let mut seq = Vec::with_capacity(self.k);
        let mut logprobs = Vec::with_capacity(self.k);
        for _ in 0..self.k {
            let probs = masked_softmax(&z, &available);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut choice = None;
            for (j, &p) in probs.iter().enumerate() {
                if !available[j] {
                    continue;
                }
                choice = Some(j);
                acc += p;
                if u < acc {
                    break;
                }
            }
            // `choice` falls back to the last available type if rounding
            // leaves `acc` just under `u`.
            let tok = choice.expect("at least one type remains available");
            logprobs.push(libm::log(probs[tok]));
            available[tok] = false;
            seq.push(tok);
        }
        Ok((seq, logprobs))
    }

    /// The `k` highest-logit types in descending order.
    pub fn greedy(&self, features: &[f64]) -> Result<Vec<usize>, GrpoError> {
        self.check_features(features)?;
        let z = self.logits(features);
        let mut order: Vec<usize> = (0..N_TYPES).collect();
        order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
        order.truncate(self.k);
        Ok(order)
    }
}

pub(crate) fn check_sequence(seq: &[usize], k: usize) -> Result<(), GrpoError> {
    if seq.len() != k {
        return Err(GrpoError::ShapeMismatch("sequence length must equal k"));
    }
    let mut seen = 0u32;
    for &tok in seq {
        if tok >= N_TYPES || seen & (1 << tok) != 0 {
            return Err(GrpoError::ShapeMismatch("sequence tokens must be distinct type indices"));
        }
        seen |= 1 << tok;
    }
    Ok(())
}

pub(crate) fn masked_logsumexp(z: &[f64; N_TYPES], available: &[bool; N_TYPES]) -> f64 {
    let max = z
        .iter()
        .zip(available)
        .filter(|(_, &a)| a)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = z
        .iter()
        .zip(available)
        .filter(|(_, &a)| a)
        .map(|(&v, _)| libm::exp(v - max))
        .sum();
    max + libm::log(sum)
}

/// Softmax over the available entries; unavailable entries get 0.
pub(crate) fn masked_softmax(z: &[f64; N_TYPES], available: &[bool; N_TYPES]) -> [f64; N_TYPES] {
    let lse = masked_logsumexp(z, available);
    let mut p = [0.0; N_TYPES];
    for j in 0..N_TYPES {
        if available[j] {
            p[j] = libm::exp(z[j] - lse);
        }
    }
    p
}
