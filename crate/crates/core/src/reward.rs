//! Ranking reward: NDCG@k over dimension-similarity relevances plus the
//! dimension-similarity (DS) reward on the first answer.

use alloc::vec::Vec;

use thiserror::Error;

use crate::mbti::{dim_similarity, DimWeightConfig, MbtiType};
use crate::parser::{parse_completion, ParseError, RankedPrediction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RewardError {
    #[error("k must be at least 1 and the score list non-empty")]
    EmptyList,
    #[error("need at least {k} scores, got {len}")]
    TooFewScores { k: usize, len: usize },
    #[error("k must lie in 1..=16, got {0}")]
    InvalidK(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RewardConfig {
    k: usize,
    pub dim_weight: DimWeightConfig,
}

impl RewardConfig {
    pub const DEFAULT_K: usize = 3;

    pub fn new(k: usize, dim_weight: DimWeightConfig) -> Result<Self, RewardError> {
        if (1..=MbtiType::COUNT).contains(&k) {
            Ok(RewardConfig { k, dim_weight })
        } else {
            Err(RewardError::InvalidK(k))
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Upper bound of [`total_reward`]: a perfect first answer plus NDCG 1.
    pub fn max_total(&self) -> f64 {
        self.dim_weight.max_similarity() + 1.0
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            k: Self::DEFAULT_K,
            dim_weight: DimWeightConfig::default(),
        }
    }
}

/// Reward of one completion. Invalid completions carry all zeros.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RewardBreakdown {
    pub valid: bool,
    pub ndcg: f64,
    pub ds: f64,
    pub total: f64,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub parse_error: Option<ParseError>,
}

impl RewardBreakdown {
    pub fn invalid(err: ParseError) -> Self {
        RewardBreakdown {
            valid: false,
            ndcg: 0.0,
            ds: 0.0,
            total: 0.0,
            parse_error: Some(err),
        }
    }
}

#[inline]
fn gain(score: f64) -> f64 {
    libm::exp2(score) - 1.0
}

/// Discount at one-based rank `i`.
#[inline]
fn discount(one_based: usize) -> f64 {
    libm::log2(one_based as f64 + 1.0)
}

/// `sum_{i=1..k} (2^{s_i} - 1) / log2(i + 1)` over the first `k` scores.
pub fn dcg_at_k(scores: &[f64], k: usize) -> Result<f64, RewardError> {
    if k == 0 || scores.is_empty() {
        return Err(RewardError::EmptyList);
    }
    if scores.len() < k {
        return Err(RewardError::TooFewScores {
            k,
            len: scores.len(),
        });
    }
    Ok(dcg(&scores[..k]))
}

fn dcg(scores: &[f64]) -> f64 {
    scores
        .iter()
        .enumerate()
        .map(|(i, &s)| gain(s) / discount(i + 1))
        .sum()
}

/// DCG of the same scores sorted in descending order.
pub fn idcg_at_k(scores: &[f64], k: usize) -> Result<f64, RewardError> {
    dcg_at_k(scores, k)?;
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(dcg(&sorted[..k]))
}

/// Relevance of each predicted type against the truth.
pub fn relevance_scores(pred: &RankedPrediction, truth: MbtiType, cfg: &RewardConfig) -> Vec<f64> {
    pred.types()
        .iter()
        .map(|&t| dim_similarity(t, truth, &cfg.dim_weight))
        .collect()
}

/// NDCG over the first `min(k, len)` entries of `pred`. The ideal ordering is
/// the descending sort of the predicted entries' own relevances; a list whose
/// relevances are all zero scores 0.
pub fn ndcg_at_k(pred: &RankedPrediction, truth: MbtiType, cfg: &RewardConfig) -> f64 {
    let scores = relevance_scores(pred, truth, cfg);
    let k = cfg.k.min(scores.len());
    ndcg_of_scores(&scores[..k])
}

pub(crate) fn ndcg_of_scores(scores: &[f64]) -> f64 {
    let actual = dcg(scores);
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let ideal = dcg(&sorted);
    if ideal <= 0.0 {
        0.0
    } else {
        // Rounding can push the ratio a hair past 1 when the order is ideal.
        (actual / ideal).min(1.0)
    }
}

/// Similarity of the rank-1 answer to the truth.
pub fn ds_reward(pred: &RankedPrediction, truth: MbtiType, cfg: &RewardConfig) -> f64 {
    dim_similarity(pred.first(), truth, &cfg.dim_weight)
}

/// Scores an already-parsed prediction.
pub fn score_prediction(
    pred: &RankedPrediction,
    truth: MbtiType,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let ndcg = ndcg_at_k(pred, truth, cfg);
    let ds = ds_reward(pred, truth, cfg);
    RewardBreakdown {
        valid: true,
        ndcg,
        ds,
        total: ndcg + ds,
        parse_error: None,
    }
}

/// Parses `completion` and returns NDCG + DS, or an all-zero invalid
/// breakdown when the completion does not hold exactly `k` distinct types.
pub fn total_reward(completion: &str, truth: MbtiType, cfg: &RewardConfig) -> RewardBreakdown {
    match parse_completion(completion, cfg.k) {
        Ok(parsed) => score_prediction(&parsed.answers, truth, cfg),
        Err(err) => RewardBreakdown::invalid(err),
    }
}
