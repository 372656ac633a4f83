//! ingest → mask → truncate → rejection filter → split, with outputs on disk.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::warn;
use mbti_rank_core::pipeline::{
    preprocess, rejection_filter, select_kept, split_sft_rl, PipelineConfig, PipelineError,
    UserRecord,
};
use serde::Serialize;
use thiserror::Error;

use crate::io::{convert_kaggle_csv, ingest, read_teacher, write_jsonl, IoError};

#[derive(Debug, Error)]
pub enum PrepareError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("duplicate user id {0:?} in records")]
    DuplicateUser(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Jsonl,
    KaggleCsv,
}

#[derive(Debug, Clone)]
pub struct PrepareJob {
    pub records: PathBuf,
    pub format: RecordFormat,
    pub teacher: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub max_kept: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PrepareSummary {
    pub records: usize,
    pub teacher_samples: usize,
    pub kept: usize,
    pub rejected: usize,
    pub sft: usize,
    pub rl: usize,
}

pub const SFT_FILE: &str = "sft.jsonl";
pub const RL_FILE: &str = "rl.jsonl";
pub const REJECTIONS_FILE: &str = "rejections.jsonl";

pub fn load_records(path: &Path, format: RecordFormat) -> Result<Vec<UserRecord>, IoError> {
    match format {
        RecordFormat::Jsonl => ingest(path),
        RecordFormat::KaggleCsv => convert_kaggle_csv(path),
    }
}

/// Runs the job and writes `sft.jsonl`, `rl.jsonl` and `rejections.jsonl`
/// into `out_dir`. Without a teacher file every user goes to the RL split.
pub fn run(job: &PrepareJob, cfg: &PipelineConfig) -> Result<PrepareSummary, PrepareError> {
    cfg.validate()?;
    let raw = load_records(&job.records, job.format)?;
    let mut seen = BTreeSet::new();
    for r in &raw {
        if !seen.insert(r.user_id.as_str()) {
            return Err(PrepareError::DuplicateUser(r.user_id.clone()));
        }
    }
    let records: Vec<UserRecord> = raw.iter().map(|r| preprocess(r, cfg)).collect();

    let (teacher_samples, kept, rejected) = match &job.teacher {
        Some(path) => {
            let teacher = read_teacher(path)?;
            let by_id: BTreeMap<String, UserRecord> =
                records.iter().map(|r| (r.user_id.clone(), r.clone())).collect();
            let outcome = rejection_filter(&teacher, &by_id, cfg);
            let kept = select_kept(outcome.kept, job.max_kept, job.seed);
            (teacher.len(), kept, outcome.rejected)
        }
        None => (0, Vec::new(), Vec::new()),
    };
    if job.teacher.is_some() && kept.is_empty() {
        warn!("no teacher sample survived the filter");
    }

    let sft_ids: BTreeSet<String> = kept.iter().map(|s| s.user_id.clone()).collect();
    let (sft_users, rl) = split_sft_rl(&records, &sft_ids)?;

    std::fs::create_dir_all(&job.out_dir).map_err(|e| IoError::Io {
        path: job.out_dir.clone(),
        source: e,
    })?;
    write_jsonl(&job.out_dir.join(SFT_FILE), &kept)?;
    write_jsonl(&job.out_dir.join(RL_FILE), &rl)?;
    write_jsonl(&job.out_dir.join(REJECTIONS_FILE), &rejected)?;

    Ok(PrepareSummary {
        records: records.len(),
        teacher_samples,
        kept: kept.len(),
        rejected: rejected.len(),
        sft: sft_users.len(),
        rl: rl.len(),
    })
}
