//! Training runs and their on-disk artifacts.

use std::path::Path;

use mbti_rank_core::grpo::synthetic::SyntheticSetup;
use mbti_rank_core::grpo::{
    evaluate_policy, train, Example, GrpoConfig, GrpoError, PolicyEval, RewardTerms, ToyPolicy,
    TrainingLog,
};
use mbti_rank_core::RewardConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{read_jsonl, write_jsonl, IoError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error("{0}")]
    Data(String),
}

pub const LOG_FILE: &str = "training_log.jsonl";
pub const POLICY_FILE: &str = "policy.json";

/// Serialized policy parameters; `theta` is row-major `feature_dim × 16`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub feature_dim: usize,
    pub k: usize,
    pub theta: Vec<f64>,
}

impl From<&ToyPolicy> for PolicyFile {
    fn from(p: &ToyPolicy) -> Self {
        PolicyFile {
            feature_dim: p.feature_dim(),
            k: p.k(),
            theta: p.theta().to_vec(),
        }
    }
}

impl TryFrom<PolicyFile> for ToyPolicy {
    type Error = GrpoError;

    fn try_from(f: PolicyFile) -> Result<Self, GrpoError> {
        ToyPolicy::from_theta(f.feature_dim, f.k, f.theta)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub initial: ToyPolicy,
    pub policy: ToyPolicy,
    pub log: TrainingLog,
    pub heldout: PolicyEval,
}

/// Train on a seeded synthetic task and score the result on its held-out
/// users.
pub fn run_synthetic(
    setup: &SyntheticSetup,
    cfg: &GrpoConfig,
    reward: &RewardConfig,
    terms: RewardTerms,
) -> Result<TrainOutcome, TrainError> {
    let run = setup.build(reward.k(), cfg.seed)?;
    let (policy, log) = train(run.initial_policy.clone(), &run.train, cfg, reward, terms)?;
    let heldout = evaluate_policy(&policy, &run.heldout, reward)?;
    Ok(TrainOutcome {
        initial: run.initial_policy,
        policy,
        log,
        heldout,
    })
}

/// Train on `{features, truth}` lines. The held-out file defaults to the
/// training file.
pub fn run_dataset(
    train_path: &Path,
    heldout_path: Option<&Path>,
    init_scale: f64,
    cfg: &GrpoConfig,
    reward: &RewardConfig,
    terms: RewardTerms,
) -> Result<TrainOutcome, TrainError> {
    let data: Vec<Example> = read_jsonl(train_path)?;
    let heldout: Vec<Example> = match heldout_path {
        Some(p) => read_jsonl(p)?,
        None => data.clone(),
    };
    let dim = data
        .first()
        .map(|e| e.features.len())
        .ok_or_else(|| TrainError::Data(format!("{}: no examples", train_path.display())))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let initial = ToyPolicy::random(dim, reward.k(), init_scale, &mut rng)?;
    let (policy, log) = train(initial.clone(), &data, cfg, reward, terms)?;
    let heldout = evaluate_policy(&policy, &heldout, reward)?;
    Ok(TrainOutcome {
        initial,
        policy,
        log,
        heldout,
    })
}

/// Writes the per-step log and the final policy into `dir`.
pub fn write_artifacts(dir: &Path, outcome: &TrainOutcome) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    write_jsonl(&dir.join(LOG_FILE), &outcome.log.steps)?;
    let path = dir.join(POLICY_FILE);
    let body = serde_json::to_string(&PolicyFile::from(&outcome.policy)).expect("finite floats serialize");
    std::fs::write(&path, body).map_err(|e| IoError::Io { path, source: e })
}

pub fn read_policy(path: &Path) -> Result<ToyPolicy, TrainError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            IoError::FileNotFound(path.to_path_buf())
        } else {
            IoError::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }
    })?;
    let file: PolicyFile =
        serde_json::from_str(&text).map_err(|e| IoError::schema(path, e.line(), e.to_string()))?;
    Ok(file.try_into()?)
}
