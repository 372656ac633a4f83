//! Record-level preprocessing: label masking, truncation, rejection
//! filtering of teacher outputs and the SFT/RL split.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mbti::{parse_type, Dimension, MbtiType};
use crate::parser::{format_sft_target, parse_completion_with, ParseError, ParseOptions};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UserRecord {
    pub user_id: String,
    pub posts: Vec<String>,
    pub label: MbtiType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TeacherSample {
    pub user_id: String,
    pub completion: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SftSample {
    pub user_id: String,
    pub prompt: String,
    pub completion: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum MaskMode {
    /// Replace each matching token with the mask token.
    Replace,
    /// Delete matching tokens, leaving surrounding whitespace untouched.
    Remove,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("mask token {0:?} must be non-empty, whitespace-free and not itself maskable")]
    InvalidMaskToken(String),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("unknown user id {0:?}")]
    UnknownUserId(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PipelineConfig {
    pub max_posts_per_user: usize,
    pub max_tokens_per_post: usize,
    pub k: usize,
    pub mask_token: String,
    pub mask_mode: MaskMode,
    /// Also mask wildcard abbreviations such as `xNTP` or `ExFJ`.
    pub mask_wildcards: bool,
    /// Accept the `<answer>…<answer>` closer in teacher completions.
    pub lenient_closer: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            max_posts_per_user: 50,
            max_tokens_per_post: 128,
            k: 3,
            mask_token: String::from("<MASK>"),
            mask_mode: MaskMode::Replace,
            mask_wildcards: false,
            lenient_closer: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.max_posts_per_user == 0 {
            return Err(PipelineError::NonPositive("max_posts_per_user"));
        }
        if self.max_tokens_per_post == 0 {
            return Err(PipelineError::NonPositive("max_tokens_per_post"));
        }
        if self.k == 0 {
            return Err(PipelineError::NonPositive("k"));
        }
        let tok = &self.mask_token;
        if tok.is_empty()
            || tok.chars().any(char::is_whitespace)
            || is_maskable(tok, self.mask_wildcards)
        {
            return Err(PipelineError::InvalidMaskToken(tok.clone()));
        }
        Ok(())
    }
}

fn is_wildcard_type(token: &str) -> bool {
    let bytes = token.as_bytes();
    if bytes.len() != 4 {
        return false;
    }
    let mut has_wildcard = false;
    for (pos, b) in bytes.iter().enumerate() {
        let c = b.to_ascii_uppercase() as char;
        if c == 'X' {
            has_wildcard = true;
        } else if !Dimension::ALL[pos].alphabet().contains(&c) {
            return false;
        }
    }
    has_wildcard
}

fn is_maskable(token: &str, wildcards: bool) -> bool {
    parse_type(token).is_ok() || (wildcards && is_wildcard_type(token))
}

fn mask_text(text: &str, cfg: &PipelineConfig) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while !rest.is_empty() {
        let ws_len = rest
            .find(|c: char| !c.is_whitespace())
            .unwrap_or(rest.len());
        out.push_str(&rest[..ws_len]);
        rest = &rest[ws_len..];
        let tok_len = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let token = &rest[..tok_len];
        if is_maskable(token, cfg.mask_wildcards) {
            if cfg.mask_mode == MaskMode::Replace {
                out.push_str(&cfg.mask_token);
            }
        } else {
            out.push_str(token);
        }
        rest = &rest[tok_len..];
    }
    out
}

/// Masks every whitespace-delimited token equal (ignoring case) to one of
/// the 16 type codes. Everything else, whitespace included, is kept as is.
pub fn mask_labels(record: &UserRecord, cfg: &PipelineConfig) -> UserRecord {
    UserRecord {
        user_id: record.user_id.clone(),
        posts: record.posts.iter().map(|p| mask_text(p, cfg)).collect(),
        label: record.label,
    }
}

/// Byte prefix of `text` ending after its `max_tokens`-th whitespace token.
fn truncate_tokens(text: &str, max_tokens: usize) -> &str {
    let mut seen = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_token {
                in_token = false;
                if seen == max_tokens {
                    return &text[..i];
                }
            }
        } else if !in_token {
            in_token = true;
            seen += 1;
        }
    }
    text
}

/// Keeps the first `max_posts_per_user` posts, each cut to its first
/// `max_tokens_per_post` whitespace tokens.
pub fn truncate(record: &UserRecord, cfg: &PipelineConfig) -> UserRecord {
    UserRecord {
        user_id: record.user_id.clone(),
        posts: record
            .posts
            .iter()
            .take(cfg.max_posts_per_user)
            .map(|p| String::from(truncate_tokens(p, cfg.max_tokens_per_post)))
            .collect(),
        label: record.label,
    }
}

/// Masking followed by truncation.
pub fn preprocess(record: &UserRecord, cfg: &PipelineConfig) -> UserRecord {
    truncate(&mask_labels(record, cfg), cfg)
}

/// Instruction prompt for one user's posts.
pub fn build_prompt(record: &UserRecord, k: usize) -> String {
    let mut prompt = String::new();
    let _ = write!(
        prompt,
        "Below are social media posts written by one user. Compare the 16 MBTI \
         personality types against the evidence, reason step by step inside \
         <think></think>, then give the {k} most likely types, most likely first, \
         as <answer>[type 1, ..., type {k}]</answer>.\n\nPosts:\n"
    );
    for (i, post) in record.posts.iter().enumerate() {
        let _ = writeln!(prompt, "{}. {}", i + 1, post);
    }
    prompt
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "reason", rename_all = "snake_case"))]
pub enum RejectReason {
    /// The completion does not parse into exactly k distinct types.
    ParseError { detail: String },
    /// The truth label is not among the teacher's answers.
    TruthAbsent,
    /// No record carries the sample's user id.
    UnknownUser,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rejection {
    pub user_id: String,
    #[cfg_attr(feature = "serde", serde(flatten))]
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterOutcome {
    pub kept: Vec<SftSample>,
    pub rejected: Vec<Rejection>,
}

/// Keeps teacher samples that parse and whose top-k list contains the
/// user's label. Kept completions are re-serialized canonically.
pub fn rejection_filter(
    teacher: &[TeacherSample],
    records: &BTreeMap<String, UserRecord>,
    cfg: &PipelineConfig,
) -> FilterOutcome {
    let opts = ParseOptions {
        expected_k: cfg.k,
        lenient_closer: cfg.lenient_closer,
    };
    let mut outcome = FilterOutcome::default();
    for sample in teacher {
        let reject = |reason| Rejection {
            user_id: sample.user_id.clone(),
            reason,
        };
        let Some(record) = records.get(&sample.user_id) else {
            outcome.rejected.push(reject(RejectReason::UnknownUser));
            continue;
        };
        match parse_completion_with(&sample.completion, &opts) {
            Err(err) => outcome.rejected.push(reject(RejectReason::ParseError {
                detail: parse_error_detail(&err),
            })),
            Ok(parsed) if !parsed.answers.contains(record.label) => {
                outcome.rejected.push(reject(RejectReason::TruthAbsent))
            }
            Ok(parsed) => outcome.kept.push(SftSample {
                user_id: sample.user_id.clone(),
                prompt: build_prompt(record, cfg.k),
                completion: format_sft_target(&parsed.think, &parsed.answers),
            }),
        }
    }
    outcome
}

fn parse_error_detail(err: &ParseError) -> String {
    let mut s = String::new();
    let _ = write!(s, "{err}");
    s
}

/// Caps the kept set at `max` samples: seeded shuffle, then the first `max`
/// in shuffled order.
pub fn select_kept(mut kept: Vec<SftSample>, max: Option<usize>, seed: u64) -> Vec<SftSample> {
    if let Some(max) = max {
        if kept.len() > max {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            kept.shuffle(&mut rng);
            kept.truncate(max);
        }
    }
    kept
}

/// Splits records into the SFT users and everyone else.
pub fn split_sft_rl(
    records: &[UserRecord],
    sft_user_ids: &BTreeSet<String>,
) -> Result<(Vec<UserRecord>, Vec<UserRecord>), PipelineError> {
    let known: BTreeSet<&str> = records.iter().map(|r| r.user_id.as_str()).collect();
    if let Some(missing) = sft_user_ids.iter().find(|id| !known.contains(id.as_str())) {
        return Err(PipelineError::UnknownUserId(missing.clone()));
    }
    Ok(records
        .iter()
        .cloned()
        .partition(|r| sft_user_ids.contains(&r.user_id)))
}
