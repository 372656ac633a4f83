//! Evaluation metrics: per-dimension binary Macro-F1 averaged over the four
//! dimensions, 16-class F1 and mean NDCG@k.
//!
//! Predictions are `Option<MbtiType>`; `None` marks an invalid or missing
//! prediction, which counts as a miss for the true class and as a
//! prediction of no class.

use alloc::vec::Vec;

use thiserror::Error;

use crate::mbti::{Dimension, MbtiType};
use crate::parser::RankedPrediction;
use crate::reward::{ndcg_at_k, RewardConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("prediction list is empty")]
    EmptyPrediction,
    #[error("{preds} predictions vs {truths} ground-truth labels")]
    LengthMismatch { preds: usize, truths: usize },
    #[error("no samples to evaluate")]
    EmptyInput,
}

/// How per-class F1 scores are combined in [`multiclass_f1_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum F1Average {
    /// Unweighted mean over non-degenerate classes.
    #[default]
    Macro,
    /// F1 of the pooled counts.
    Micro,
    /// Mean weighted by class support.
    Weighted,
}

/// First-answer rule: the rank-1 entry is the point prediction.
pub fn point_prediction(pred: &[MbtiType]) -> Result<MbtiType, MetricsError> {
    pred.first().copied().ok_or(MetricsError::EmptyPrediction)
}

#[derive(Debug, Clone, Copy, Default)]
struct ClassCounts {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl ClassCounts {
    fn support(&self) -> u64 {
        self.tp + self.fn_
    }

    /// `None` when the class has neither support nor predictions.
    fn f1(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            None
        } else {
            Some(2.0 * self.tp as f64 / denom as f64)
        }
    }
}

fn check_lengths<P, T>(preds: &[P], truths: &[T]) -> Result<(), MetricsError> {
    if preds.len() != truths.len() {
        return Err(MetricsError::LengthMismatch {
            preds: preds.len(),
            truths: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    Ok(())
}

fn tally<const N: usize>(
    pairs: impl Iterator<Item = (Option<usize>, usize)>,
) -> [ClassCounts; N] {
    let mut counts = [ClassCounts::default(); N];
    for (pred, truth) in pairs {
        match pred {
            Some(p) if p == truth => counts[p].tp += 1,
            Some(p) => {
                counts[p].fp += 1;
                counts[truth].fn_ += 1;
            }
            None => counts[truth].fn_ += 1,
        }
    }
    counts
}

fn average(counts: &[ClassCounts], mode: F1Average) -> f64 {
    match mode {
        F1Average::Macro => {
            let (sum, n) = counts
                .iter()
                .filter_map(ClassCounts::f1)
                .fold((0.0, 0usize), |(s, n), f| (s + f, n + 1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        }
        F1Average::Micro => {
            let total = counts.iter().fold(ClassCounts::default(), |acc, c| ClassCounts {
                tp: acc.tp + c.tp,
                fp: acc.fp + c.fp,
                fn_: acc.fn_ + c.fn_,
            });
            total.f1().unwrap_or(0.0)
        }
        F1Average::Weighted => {
            let support: u64 = counts.iter().map(ClassCounts::support).sum();
            if support == 0 {
                return 0.0;
            }
            counts
                .iter()
                .map(|c| c.support() as f64 * c.f1().unwrap_or(0.0))
                .sum::<f64>()
                / support as f64
        }
    }
}

/// Binary Macro-F1 for each dimension and their arithmetic mean.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BinaryF1 {
    pub average: f64,
    pub per_dimension: [f64; 4],
}

pub fn binary_macro_f1(preds: &[MbtiType], truths: &[MbtiType]) -> Result<BinaryF1, MetricsError> {
    check_lengths(preds, truths)?;
    let preds: Vec<_> = preds.iter().copied().map(Some).collect();
    binary_macro_f1_partial(&preds, truths)
}

/// [`binary_macro_f1`] where a `None` prediction is wrong on every dimension.
pub fn binary_macro_f1_partial(
    preds: &[Option<MbtiType>],
    truths: &[MbtiType],
) -> Result<BinaryF1, MetricsError> {
    check_lengths(preds, truths)?;
    let mut per_dimension = [0.0; 4];
    for dim in Dimension::ALL {
        let pole = |t: MbtiType| usize::from(!t.is_first_pole(dim));
        let counts = tally::<2>(
            preds
                .iter()
                .zip(truths)
                .map(|(p, &t)| (p.map(pole), pole(t))),
        );
        per_dimension[dim.position()] = average(&counts, F1Average::Macro);
    }
    Ok(BinaryF1 {
        average: per_dimension.iter().sum::<f64>() / 4.0,
        per_dimension,
    })
}

/// Macro-averaged F1 over the 16 types.
pub fn multiclass_f1(preds: &[MbtiType], truths: &[MbtiType]) -> Result<f64, MetricsError> {
    check_lengths(preds, truths)?;
    let preds: Vec<_> = preds.iter().copied().map(Some).collect();
    multiclass_f1_with(&preds, truths, F1Average::Macro)
}

pub fn multiclass_f1_with(
    preds: &[Option<MbtiType>],
    truths: &[MbtiType],
    mode: F1Average,
) -> Result<f64, MetricsError> {
    check_lengths(preds, truths)?;
    let counts = tally::<16>(
        preds
            .iter()
            .zip(truths)
            .map(|(p, t)| (p.map(MbtiType::index), t.index())),
    );
    Ok(average(&counts, mode))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub binary_macro_f1: f64,
    pub per_dimension_f1: [f64; 4],
    pub multiclass_f1: f64,
    pub f1_average: F1Average,
    pub ndcg_at_k: f64,
    pub k: usize,
    pub n_samples: usize,
    pub n_invalid: usize,
}

/// Scores joined (prediction, truth) rows. A `None` prediction is invalid:
/// wrong for both F1 metrics and 0 for NDCG.
pub fn evaluate(
    rows: &[(Option<RankedPrediction>, MbtiType)],
    cfg: &RewardConfig,
    f1_average: F1Average,
) -> Result<EvalReport, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let truths: Vec<MbtiType> = rows.iter().map(|(_, t)| *t).collect();
    let points: Vec<Option<MbtiType>> = rows
        .iter()
        .map(|(p, _)| p.as_ref().map(RankedPrediction::first))
        .collect();
    let binary = binary_macro_f1_partial(&points, &truths)?;
    let multi = multiclass_f1_with(&points, &truths, f1_average)?;
    let ndcg_sum: f64 = rows
        .iter()
        .map(|(p, t)| p.as_ref().map_or(0.0, |p| ndcg_at_k(p, *t, cfg)))
        .sum();
    Ok(EvalReport {
        binary_macro_f1: binary.average,
        per_dimension_f1: binary.per_dimension,
        multiclass_f1: multi,
        f1_average,
        ndcg_at_k: ndcg_sum / rows.len() as f64,
        k: cfg.k(),
        n_samples: rows.len(),
        n_invalid: points.iter().filter(|p| p.is_none()).count(),
    })
}
