//! Structured completions: `<think>…</think><answer>[A, B, C]</answer>`.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use thiserror::Error;

use crate::mbti::{parse_type, MbtiType};

const THINK_OPEN: &str = "<think>";
const THINK_CLOSE: &str = "</think>";
const ANSWER_OPEN: &str = "<answer>";
const ANSWER_CLOSE: &str = "</answer>";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredictionError {
    #[error("ranked prediction is empty")]
    Empty,
    #[error("ranked prediction holds more than 16 entries")]
    TooLong,
    #[error("duplicate entry {0}")]
    Duplicate(MbtiType),
}

/// An ordered list of distinct types; rank 1 first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RankedPrediction(Vec<MbtiType>);

impl RankedPrediction {
    pub fn new(types: Vec<MbtiType>) -> Result<Self, PredictionError> {
        if types.is_empty() {
            return Err(PredictionError::Empty);
        }
        if types.len() > MbtiType::COUNT {
            return Err(PredictionError::TooLong);
        }
        if let Some(dup) = first_duplicate(&types) {
            return Err(PredictionError::Duplicate(dup));
        }
        Ok(RankedPrediction(types))
    }

    pub fn types(&self) -> &[MbtiType] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The rank-1 entry.
    pub fn first(&self) -> MbtiType {
        self.0[0]
    }

    pub fn contains(&self, ty: MbtiType) -> bool {
        self.0.contains(&ty)
    }

    pub fn into_inner(self) -> Vec<MbtiType> {
        self.0
    }
}

fn first_duplicate(types: &[MbtiType]) -> Option<MbtiType> {
    let mut seen = 0u16;
    for ty in types {
        let bit = 1u16 << ty.index();
        if seen & bit != 0 {
            return Some(*ty);
        }
        seen |= bit;
    }
    None
}

/// Why a completion could not be turned into a prediction.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no <answer>…</answer> block")]
    MissingAnswerTag,
    #[error("answer block is not a non-empty bracketed list")]
    MalformedList,
    #[error("expected {expected} answers, found {actual}")]
    WrongLength { expected: usize, actual: usize },
    #[error("duplicate answer {0}")]
    DuplicateEntry(MbtiType),
    #[error("invalid answer entry {0:?}")]
    InvalidEntry(String),
}

impl ParseError {
    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::MissingAnswerTag => "missing_answer_tag",
            ParseError::MalformedList => "malformed_list",
            ParseError::WrongLength { .. } => "wrong_length",
            ParseError::DuplicateEntry(_) => "duplicate_entry",
            ParseError::InvalidEntry(_) => "invalid_entry",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCompletion {
    pub think: String,
    pub answers: RankedPrediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub expected_k: usize,
    /// Also accept `<answer>` as the closing tag of the answer block.
    pub lenient_closer: bool,
}

impl ParseOptions {
    pub fn strict(expected_k: usize) -> Self {
        ParseOptions {
            expected_k,
            lenient_closer: false,
        }
    }
}

/// Parses a completion in strict mode, requiring exactly `expected_k`
/// distinct answers.
pub fn parse_completion(text: &str, expected_k: usize) -> Result<ParsedCompletion, ParseError> {
    parse_completion_with(text, &ParseOptions::strict(expected_k))
}

/// Only the first think block and the first answer block after it are
/// read; anything after the answer closer is ignored.
pub fn parse_completion_with(
    text: &str,
    opts: &ParseOptions,
) -> Result<ParsedCompletion, ParseError> {
    let mut rest = text;
    let mut think = String::new();
    if let Some(open) = text.find(THINK_OPEN) {
        let body = &text[open + THINK_OPEN.len()..];
        if let Some(close) = body.find(THINK_CLOSE) {
            think.push_str(&body[..close]);
            rest = &body[close + THINK_CLOSE.len()..];
        }
    }

    let open = rest.find(ANSWER_OPEN).ok_or(ParseError::MissingAnswerTag)?;
    let body = &rest[open + ANSWER_OPEN.len()..];
    let close = match body.find(ANSWER_CLOSE) {
        Some(c) => c,
        None if opts.lenient_closer => body.find(ANSWER_OPEN).ok_or(ParseError::MissingAnswerTag)?,
        None => return Err(ParseError::MissingAnswerTag),
    };
    let answers = parse_answer_list(&body[..close], opts.expected_k)?;
    Ok(ParsedCompletion { think, answers })
}

/// Parses the bracketed list inside an answer block.
pub fn parse_answer_list(list: &str, expected_k: usize) -> Result<RankedPrediction, ParseError> {
    let inner = list
        .trim()
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or(ParseError::MalformedList)?;
    if inner.trim().is_empty() {
        return Err(ParseError::MalformedList);
    }
    let types = inner
        .split(',')
        .map(|tok| parse_type(tok).map_err(|_| ParseError::InvalidEntry(String::from(tok.trim()))))
        .collect::<Result<Vec<_>, _>>()?;
    validate_answers(types, expected_k)
}

/// Applies the length and distinctness rules to an already-parsed list.
pub fn validate_answers(
    types: Vec<MbtiType>,
    expected_k: usize,
) -> Result<RankedPrediction, ParseError> {
    if types.len() != expected_k {
        return Err(ParseError::WrongLength {
            expected: expected_k,
            actual: types.len(),
        });
    }
    RankedPrediction::new(types).map_err(|e| match e {
        PredictionError::Duplicate(ty) => ParseError::DuplicateEntry(ty),
        PredictionError::Empty | PredictionError::TooLong => ParseError::MalformedList,
    })
}

/// Canonical SFT target text. `think` must not contain `</think>`.
pub fn format_sft_target(think: &str, answers: &RankedPrediction) -> String {
    let mut out = String::with_capacity(think.len() + 40 + 6 * answers.len());
    out.push_str(THINK_OPEN);
    out.push_str(think);
    out.push_str(THINK_CLOSE);
    out.push_str(ANSWER_OPEN);
    out.push('[');
    for (i, ty) in answers.types().iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let _ = write!(out, "{ty}");
    }
    out.push(']');
    out.push_str(ANSWER_CLOSE);
    out
}
