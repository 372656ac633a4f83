//! Evaluation over a prediction file and a truth file keyed by user id.

use std::collections::BTreeMap;
use std::path::Path;

use log::warn;
use mbti_rank_core::metrics::{evaluate, EvalReport, F1Average, MetricsError};
use mbti_rank_core::parser::{parse_completion_with, validate_answers, ParseOptions};
use mbti_rank_core::{parse_type, MbtiType, RankedPrediction, RewardConfig};
use serde::Deserialize;
use thiserror::Error;

use crate::io::{read_lines, IoError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("no prediction for user {0:?}")]
    JoinError(String),
    #[error("duplicate user id {0:?}")]
    DuplicateUser(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub reward: RewardConfig,
    pub f1_average: F1Average,
    /// Missing users and malformed lines are hard errors.
    pub strict: bool,
    pub lenient_closer: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            reward: RewardConfig::default(),
            f1_average: F1Average::Macro,
            strict: false,
            lenient_closer: false,
        }
    }
}

#[derive(Debug, Deserialize)]
struct PredictionLine {
    user_id: String,
    completion: Option<String>,
    answers: Option<Vec<String>>,
}

#[derive(Debug, Deserialize)]
struct TruthLine {
    user_id: String,
    label: MbtiType,
}

/// A prediction line's parsed top-k list, or `None` when it is unusable.
fn prediction_of(line: &PredictionLine, opts: &EvalOptions) -> Result<Option<RankedPrediction>, String> {
    let k = opts.reward.k();
    match (&line.completion, &line.answers) {
        (Some(text), None) => {
            let popts = ParseOptions {
                expected_k: k,
                lenient_closer: opts.lenient_closer,
            };
            Ok(parse_completion_with(text, &popts).ok().map(|p| p.answers))
        }
        (None, Some(codes)) => {
            let types: Option<Vec<MbtiType>> = codes.iter().map(|c| parse_type(c).ok()).collect();
            Ok(types.and_then(|t| validate_answers(t, k).ok()))
        }
        _ => Err("expected exactly one of \"completion\" or \"answers\"".into()),
    }
}

fn load<T: for<'de> Deserialize<'de>>(
    path: &Path,
    strict: bool,
    key: impl Fn(&T) -> &str,
) -> Result<BTreeMap<String, (usize, T)>, EvalError> {
    let mut out = BTreeMap::new();
    for (n, line) in read_lines(path)? {
        let item: T = match serde_json::from_str(&line) {
            Ok(item) => item,
            Err(e) if strict => return Err(IoError::schema(path, n, e.to_string()).into()),
            Err(e) => {
                warn!("{}:{n}: skipped: {e}", path.display());
                continue;
            }
        };
        let id = key(&item).to_string();
        if out.insert(id.clone(), (n, item)).is_some() {
            return Err(EvalError::DuplicateUser(id));
        }
    }
    Ok(out)
}

/// Joins predictions to truths and computes the full report. Every truth
/// user is scored; users without a usable prediction count as invalid
/// unless `strict` is set, in which case a missing user is an error.
/// Predictions for users absent from the truth file are ignored.
pub fn evaluate_file(pred_path: &Path, truth_path: &Path, opts: &EvalOptions) -> Result<EvalReport, EvalError> {
    let truths: BTreeMap<String, (usize, TruthLine)> = load(truth_path, opts.strict, |t: &TruthLine| &t.user_id)?;
    let preds: BTreeMap<String, (usize, PredictionLine)> =
        load(pred_path, opts.strict, |p: &PredictionLine| &p.user_id)?;

    let mut rows = Vec::with_capacity(truths.len());
    for (id, (_, truth)) in &truths {
        let pred = match preds.get(id) {
            None if opts.strict => return Err(EvalError::JoinError(id.clone())),
            None => None,
            Some((n, line)) => match prediction_of(line, opts) {
                Ok(p) => p,
                Err(reason) if opts.strict => {
                    return Err(IoError::schema(pred_path, *n, reason).into())
                }
                Err(reason) => {
                    warn!("user {id:?}: {reason}");
                    None
                }
            },
        };
        rows.push((pred, truth.label));
    }
    let extra = preds.keys().filter(|id| !truths.contains_key(*id)).count();
    if extra > 0 {
        warn!("{extra} predictions have no truth label and were ignored");
    }
    Ok(evaluate(&rows, &opts.reward, opts.f1_average)?)
}

/// Human-readable report.
pub fn render_report(r: &EvalReport) -> String {
    let dims = ["E/I", "S/N", "T/F", "J/P"];
    let mut s = format!(
        "samples            {}\ninvalid            {}\nbinary macro-F1    {:.4}\n",
        r.n_samples, r.n_invalid, r.binary_macro_f1
    );
    for (d, f) in dims.iter().zip(r.per_dimension_f1) {
        s += &format!("  {d:<16} {f:.4}\n");
    }
    let avg = serde_json::to_value(r.f1_average).ok();
    let avg = avg.as_ref().and_then(|v| v.as_str()).unwrap_or("macro");
    s += &format!("multiclass F1 ({avg}) {:.4}\nNDCG@{}            {:.4}\n", r.multiclass_f1, r.k, r.ndcg_at_k);
    s
}
