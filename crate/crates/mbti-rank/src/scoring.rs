//! Group scoring shared by the HTTP service and the `score` command.

use mbti_rank_core::grpo::{group_advantages, GrpoConfig};
use mbti_rank_core::{parse_type, total_reward, DimWeightConfig, MbtiType, RewardBreakdown, RewardConfig};
use serde::Serialize;
use serde_json::{Map, Value};

/// A validated scoring request.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRequest {
    pub completions: Vec<String>,
    pub ground_truth: MbtiType,
    pub k: Option<usize>,
    pub dim_weight_epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{field}: {message}")]
pub struct RequestError {
    pub field: &'static str,
    pub message: String,
}

impl RequestError {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        RequestError {
            field,
            message: message.into(),
        }
    }
}

const FIELDS: [&str; 4] = ["completions", "ground_truth", "k", "dim_weight_epsilon"];

/// Validates a JSON request body field by field so errors can name the
/// offending field.
pub fn parse_score_request(body: &[u8]) -> Result<ScoreRequest, RequestError> {
    let value: Value = serde_json::from_slice(body)
        .map_err(|e| RequestError::new("body", format!("invalid JSON: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(RequestError::new("body", "expected a JSON object"));
    };
    if let Some(unknown) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(RequestError {
            field: "body",
            message: format!("unknown field {unknown:?}"),
        });
    }

    let completions = match obj.get("completions") {
        Some(Value::Array(items)) if !items.is_empty() => items
            .iter()
            .map(|v| v.as_str().map(String::from))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| RequestError::new("completions", "every completion must be a string"))?,
        Some(Value::Array(_)) => return Err(RequestError::new("completions", "must be non-empty")),
        Some(_) => return Err(RequestError::new("completions", "must be a list of strings")),
        None => return Err(RequestError::new("completions", "missing")),
    };

    let ground_truth = match obj.get("ground_truth") {
        Some(Value::String(s)) => {
            parse_type(s).map_err(|e| RequestError::new("ground_truth", e.to_string()))?
        }
        Some(_) => return Err(RequestError::new("ground_truth", "must be a type code string")),
        None => return Err(RequestError::new("ground_truth", "missing")),
    };

    let k = match optional(&obj, "k") {
        None => None,
        Some(v) => match v.as_u64() {
            Some(k) if (1..=MbtiType::COUNT as u64).contains(&k) => Some(k as usize),
            _ => return Err(RequestError::new("k", "must be an integer in 1..=16")),
        },
    };

    let dim_weight_epsilon = match optional(&obj, "dim_weight_epsilon") {
        None => None,
        Some(v) => match v.as_f64() {
            Some(e) if e >= 0.0 && e.is_finite() => Some(e),
            _ => {
                return Err(RequestError::new(
                    "dim_weight_epsilon",
                    "must be a finite nonnegative number",
                ))
            }
        },
    };

    Ok(ScoreRequest {
        completions,
        ground_truth,
        k,
        dim_weight_epsilon,
    })
}

fn optional<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.get(key).filter(|v| !v.is_null())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParseErrorBody {
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompletionScore {
    pub valid: bool,
    pub ndcg: f64,
    pub ds: f64,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<ParseErrorBody>,
}

impl From<RewardBreakdown> for CompletionScore {
    fn from(r: RewardBreakdown) -> Self {
        CompletionScore {
            valid: r.valid,
            ndcg: r.ndcg,
            ds: r.ds,
            total: r.total,
            parse_error: r.parse_error.map(|e| ParseErrorBody {
                kind: e.kind(),
                message: e.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupStats {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub advantages: Option<Vec<f64>>,
    pub mean: f64,
    /// Population standard deviation of the totals.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreResponse {
    pub k: usize,
    pub epsilon: f64,
    pub scores: Vec<CompletionScore>,
    pub group: GroupStats,
}

/// Resolves the request's overrides against `defaults`.
pub fn request_config(req: &ScoreRequest, defaults: &RewardConfig) -> Result<RewardConfig, RequestError> {
    let dim_weight = match req.dim_weight_epsilon {
        Some(e) => DimWeightConfig::new(e).map_err(|err| RequestError::new("dim_weight_epsilon", err.to_string()))?,
        None => defaults.dim_weight,
    };
    RewardConfig::new(req.k.unwrap_or(defaults.k()), dim_weight)
        .map_err(|err| RequestError::new("k", err.to_string()))
}

pub fn score_request(req: &ScoreRequest, defaults: &RewardConfig) -> Result<ScoreResponse, RequestError> {
    let cfg = request_config(req, defaults)?;
    let scores: Vec<CompletionScore> = req
        .completions
        .iter()
        .map(|c| total_reward(c, req.ground_truth, &cfg).into())
        .collect();
    let totals: Vec<f64> = scores.iter().map(|s| s.total).collect();
    let n = totals.len() as f64;
    let mean = totals.iter().sum::<f64>() / n;
    let std = (totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n).sqrt();
    let advantages = group_advantages(&totals, &GrpoConfig::default()).ok();
    Ok(ScoreResponse {
        k: cfg.k(),
        epsilon: cfg.dim_weight.epsilon(),
        scores,
        group: GroupStats {
            advantages,
            mean,
            std,
        },
    })
}
