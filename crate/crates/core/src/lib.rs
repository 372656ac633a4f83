//! Ranking rewards and group-relative policy optimization for MBTI type
//! ranking.
//!
//! * [`mbti`]: the 16 types and the weighted dimension similarity.
//! * [`parser`]: the `<think>…</think><answer>[…]</answer>` completion format.
//! * [`reward`]: NDCG@k, the first-answer similarity reward and their sum.
//! * [`grpo`]: group-relative advantages, the clipped KL-regularized
//!   objective with exact gradients, and a trainer for a small ranking policy.
//! * [`metrics`]: binary and 16-class F1, mean NDCG.
//! * [`pipeline`]: label masking, truncation, rejection filtering, splits.
//!
//! The crate is `no_std` and only needs `alloc`.

#![no_std]

extern crate alloc;

pub mod grpo;
pub mod mbti;
pub mod metrics;
pub mod parser;
pub mod pipeline;
pub mod reward;

pub use mbti::{dim_similarity, parse_type, DimWeightConfig, MbtiType};
pub use parser::{format_sft_target, parse_completion, ParsedCompletion, RankedPrediction};
pub use reward::{total_reward, RewardBreakdown, RewardConfig};
