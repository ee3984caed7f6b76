use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::grpo::{grpo_step, GrpoConfig, GrpoError, Policy};
use crate::reward::{score_response, Component, EmbeddingLexicon, RewardConfig, RewardError};

use super::policy::{PreparedScene, SoftmaxPolicy};
use super::scene::{generate_scene_with_min_targets, toy_lexicon, Difficulty};

#[derive(Debug, Error)]
pub enum ToyError {
    #[error(transparent)]
    Grpo(#[from] GrpoError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("invalid toy config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTrainConfig {
    pub grpo: GrpoConfig,
    pub reward: RewardConfig,
    pub difficulty: Difficulty,
    /// Queries sampled per step; each gets a group of `grpo.group_size`.
    pub batch_size: usize,
    pub train_scenes: usize,
    pub eval_scenes: usize,
    pub min_targets: usize,
}

impl ToyTrainConfig {
    /// Settings tuned for the linear-softmax toy; the learning rate is far
    /// larger than what a full network would use.
    pub fn for_difficulty(difficulty: Difficulty) -> Self {
        Self {
            grpo: GrpoConfig {
                learning_rate: 0.2,
                steps: 2000,
                ..GrpoConfig::default()
            },
            reward: RewardConfig::default(),
            difficulty,
            batch_size: 4,
            train_scenes: 64,
            eval_scenes: 32,
            min_targets: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ToyError> {
        self.grpo.validate()?;
        self.reward.validate()?;
        if self.batch_size == 0 || self.train_scenes == 0 || self.eval_scenes == 0 {
            return Err(ToyError::InvalidConfig(
                "batch_size, train_scenes and eval_scenes must be positive".into(),
            ));
        }
        if self.min_targets == 0 || self.min_targets > self.difficulty.object_count() {
            return Err(ToyError::InvalidConfig(format!(
                "min_targets must be in 1..={} for {} scenes",
                self.difficulty.object_count(),
                self.difficulty.as_str()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyStepRecord {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub objective: f64,
    pub component_means: BTreeMap<&'static str, f64>,
    pub kl_clamped: usize,
    pub grad_norm: f64,
    /// Exact expected total reward on the held-out pool.
    pub expected_reward: f64,
    /// Exact probability of answering with the right number of regions on
    /// the held-out pool.
    pub count_accuracy: f64,
    /// Exact mean KL to the reference policy on the held-out pool.
    pub exact_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToyTrainResult {
    pub steps: Vec<ToyStepRecord>,
    pub theta: Vec<f64>,
    pub initial_expected_reward: f64,
    pub initial_count_accuracy: f64,
    pub max_reward: f64,
}

impl ToyTrainResult {
    pub fn final_expected_reward(&self) -> f64 {
        self.steps
            .last()
            .map_or(self.initial_expected_reward, |s| s.expected_reward)
    }

    pub fn final_count_accuracy(&self) -> f64 {
        self.steps
            .last()
            .map_or(self.initial_count_accuracy, |s| s.count_accuracy)
    }
}

/// Held-out scenes with rewards precomputed for every candidate.
pub struct EvalPool {
    scenes: Vec<PreparedScene>,
    rewards: Vec<Vec<f64>>,
    exact_count: Vec<Vec<f64>>,
}

impl EvalPool {
    pub fn new(
        scenes: Vec<PreparedScene>,
        lexicon: &EmbeddingLexicon,
        reward: &RewardConfig,
    ) -> Self {
        let rewards = scenes
            .iter()
            .map(|q| {
                q.candidates
                    .iter()
                    .map(|c| score_response(&c.text, &q.scene.targets, lexicon, reward).total)
                    .collect()
            })
            .collect();
        let exact_count = scenes
            .iter()
            .map(|q| {
                q.candidates
                    .iter()
                    .map(|c| f64::from(u8::from(c.has_exact_count(&q.scene))))
                    .collect()
            })
            .collect();
        Self {
            scenes,
            rewards,
            exact_count,
        }
    }

    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    fn mean_over<F: Fn(usize) -> f64>(&self, f: F) -> f64 {
        if self.scenes.is_empty() {
            return 0.0;
        }
        (0..self.scenes.len()).map(f).sum::<f64>() / self.scenes.len() as f64
    }

    pub fn expected_reward(&self, theta: &[f64]) -> f64 {
        self.mean_over(|i| SoftmaxPolicy.expectation(theta, &self.scenes[i], &self.rewards[i]))
    }

    pub fn count_accuracy(&self, theta: &[f64]) -> f64 {
        self.mean_over(|i| SoftmaxPolicy.expectation(theta, &self.scenes[i], &self.exact_count[i]))
    }

    pub fn exact_kl(&self, theta: &[f64], reference: &[f64]) -> f64 {
        self.mean_over(|i| SoftmaxPolicy.exact_kl(theta, reference, &self.scenes[i]))
    }

    /// Mean over scenes of the best achievable candidate reward.
    pub fn max_reward(&self) -> f64 {
        self.mean_over(|i| {
            self.rewards[i]
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
        })
    }
}

fn derived_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn build_pool(
    seed: u64,
    stream: u64,
    count: usize,
    difficulty: Difficulty,
    min_targets: usize,
) -> Vec<PreparedScene> {
    let mut rng = derived_rng(seed, stream);
    (0..count)
        .map(|_| {
            PreparedScene::new(generate_scene_with_min_targets(
                &mut rng,
                difficulty,
                min_targets,
            ))
        })
        .collect()
}

/// Trains the softmax policy from `θ = 0` (also the reference policy) with
/// GRPO on a fixed scene pool. `observer` sees each step's record as soon as
/// it is produced.
pub fn train_toy<F: FnMut(&ToyStepRecord)>(
    config: &ToyTrainConfig,
    mut observer: F,
) -> Result<ToyTrainResult, ToyError> {
    config.validate()?;
    let lexicon = toy_lexicon();
    let seed = config.grpo.seed;
    let train = build_pool(
        seed,
        1,
        config.train_scenes,
        config.difficulty,
        config.min_targets,
    );
    let eval = EvalPool::new(
        build_pool(
            seed,
            2,
            config.eval_scenes,
            config.difficulty,
            config.min_targets,
        ),
        &lexicon,
        &config.reward,
    );
    let mut rng = derived_rng(seed, 3);

    let policy = SoftmaxPolicy;
    let reference = vec![0.0; policy.param_count()];
    let mut theta = reference.clone();
    let initial_expected_reward = eval.expected_reward(&theta);
    let initial_count_accuracy = eval.count_accuracy(&theta);

    let reward_fn = |q: &PreparedScene, text: &str| {
        score_response(text, &q.scene.targets, &lexicon, &config.reward)
    };
    let mut steps = Vec::with_capacity(config.grpo.steps);
    for step in 0..config.grpo.steps {
        let batch: Vec<PreparedScene> = (0..config.batch_size)
            .map(|_| train[rng.random_range(0..train.len())].clone())
            .collect();
        let stats = grpo_step(
            &policy,
            &mut theta,
            &reference,
            &batch,
            reward_fn,
            &config.grpo,
            &mut rng,
            step,
        )?;
        let record = ToyStepRecord {
            step: stats.step,
            mean_reward: stats.mean_reward,
            mean_kl: stats.mean_kl,
            objective: stats.objective,
            component_means: stats.component_means,
            kl_clamped: stats.kl_clamped,
            grad_norm: stats.grad_norm,
            expected_reward: eval.expected_reward(&theta),
            count_accuracy: eval.count_accuracy(&theta),
            exact_kl: eval.exact_kl(&theta, &reference),
        };
        observer(&record);
        steps.push(record);
    }

    Ok(ToyTrainResult {
        steps,
        theta,
        initial_expected_reward,
        initial_count_accuracy,
        max_reward: eval.max_reward(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRun {
    pub seed: u64,
    pub full_count_accuracy: f64,
    pub ablated_count_accuracy: f64,
}

/// Trains with all rewards and with `removed` disabled, on hard scenes with
/// several targets, and reports exact count accuracy for each seed.
pub fn count_ablation(
    base: &ToyTrainConfig,
    removed: Component,
    seeds: &[u64],
) -> Result<Vec<AblationRun>, ToyError> {
    seeds
        .iter()
        .map(|&seed| {
            let mut full = base.clone();
            full.grpo.seed = seed;
            let mut ablated = full.clone();
            ablated.reward.set_enabled(removed, false);
            let a = train_toy(&full, |_| {})?;
            let b = train_toy(&ablated, |_| {})?;
            Ok(AblationRun {
                seed,
                full_count_accuracy: a.final_count_accuracy(),
                ablated_count_accuracy: b.final_count_accuracy(),
            })
        })
        .collect()
}
