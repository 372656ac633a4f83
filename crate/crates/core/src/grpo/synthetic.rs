//! Synthetic separable users: each type owns a prototype vector and a user
//! is its type's prototype plus isotropic Gaussian noise.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::policy::ToyPolicy;
use super::train::Example;
use super::GrpoError;
use crate::mbti::MbtiType;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    noise_sigma: f64,
    prototypes: Vec<Vec<f64>>,
}

impl SyntheticTask {
    pub const DEFAULT_DIM: usize = 32;
    pub const DEFAULT_NOISE: f64 = 0.1;

    /// Draws 16 unit prototypes in `R^dim`. For `dim >= 16` they are made
    /// exactly orthonormal by Gram-Schmidt.
    pub fn new(dim: usize, noise_sigma: f64, seed: u64) -> Result<Self, GrpoError> {
        if dim == 0 {
            return Err(GrpoError::ConfigInvalid("synthetic feature dimension must be positive"));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(GrpoError::ConfigInvalid("noise sigma must be finite and nonnegative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut prototypes: Vec<Vec<f64>> = Vec::with_capacity(MbtiType::COUNT);
        while prototypes.len() < MbtiType::COUNT {
            let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if dim >= MbtiType::COUNT {
                for p in &prototypes {
                    let proj: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(p).for_each(|(a, b)| *a -= proj * b);
                }
            }
            let norm = libm::sqrt(v.iter().map(|a| a * a).sum::<f64>());
            if norm < 1e-6 {
                continue;
            }
            v.iter_mut().for_each(|a| *a /= norm);
            prototypes.push(v);
        }
        Ok(SyntheticTask {
            noise_sigma,
            prototypes,
        })
    }

    pub fn dim(&self) -> usize {
        self.prototypes[0].len()
    }

    pub fn prototype(&self, ty: MbtiType) -> &[f64] {
        &self.prototypes[ty.index()]
    }

    /// `n` users with uniformly drawn types.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<Example> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, self.noise_sigma).expect("validated sigma");
        (0..n)
            .map(|_| {
                let idx = rng.random_range(0..MbtiType::COUNT);
                let truth = MbtiType::from_index(idx).expect("index below 16");
                let features = self.prototypes[idx]
                    .iter()
                    .map(|&p| p + noise.sample(&mut rng))
                    .collect();
                Example { features, truth }
            })
            .collect()
    }
}

/// Everything needed for a seeded synthetic training run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SyntheticSetup {
    pub dim: usize,
    pub noise_sigma: f64,
    pub train_size: usize,
    pub heldout_size: usize,
    /// Standard deviation of the initial policy weights.
    pub init_scale: f64,
}

impl Default for SyntheticSetup {
    fn default() -> Self {
        SyntheticSetup {
            dim: SyntheticTask::DEFAULT_DIM,
            noise_sigma: SyntheticTask::DEFAULT_NOISE,
            train_size: 512,
            heldout_size: 512,
            init_scale: 0.01,
        }
    }
}

/// Seeded task, training users, held-out users and initial policy.
#[derive(Debug, Clone)]
pub struct SyntheticRun {
    pub task: SyntheticTask,
    pub train: Vec<Example>,
    pub heldout: Vec<Example>,
    pub initial_policy: ToyPolicy,
}

impl SyntheticSetup {
    pub fn build(&self, k: usize, seed: u64) -> Result<SyntheticRun, GrpoError> {
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let task = SyntheticTask::new(self.dim, self.noise_sigma, seeds.random())?;
        let train = task.sample(self.train_size, seeds.random());
        let heldout = task.sample(self.heldout_size, seeds.random());
        let mut init_rng = ChaCha8Rng::seed_from_u64(seeds.random());
        let initial_policy = ToyPolicy::random(self.dim, k, self.init_scale, &mut init_rng)?;
        Ok(SyntheticRun {
            task,
            train,
            heldout,
            initial_policy,
        })
    }
}
