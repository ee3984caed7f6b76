//! Group Relative Policy Optimization.
//!
//! For every query a group of `N` candidates is drawn from a snapshot of the
//! policy, rewards are standardized within the group, and the policy ascends
//!
//! ```text
//! J(θ) = 1/N Σ_i [ min(s_i A_i, clip(s_i, 1-ε, 1+ε) A_i) - β k3_i ]
//! s_i  = π_θ(o_i) / π_old(o_i)
//! k3_i = exp(ρ_i) - ρ_i - 1,   ρ_i = log π_ref(o_i) - log π_θ(o_i)
//! ```
//!
//! Log-probabilities are sequence-level.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::reward::{Component, RewardBreakdown};

/// Groups whose reward std falls below this get all-zero advantages.
pub const DEGENERATE_STD: f64 = 1e-8;

/// `ρ` is clamped here before exponentiation in the KL estimator.
pub const LOG_RATIO_CEILING: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GrpoError {
    #[error("group size {0} is too small; need at least 2")]
    GroupTooSmall(usize),
    #[error("invalid GRPO config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            group_size: 8,
            clip_epsilon: 0.2,
            kl_beta: 5e-3,
            learning_rate: 1e-6,
            steps: 1000,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), GrpoError> {
        let bad = |m: String| Err(GrpoError::InvalidConfig(m));
        if self.group_size < 2 {
            return Err(GrpoError::GroupTooSmall(self.group_size));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return bad(format!("clip_epsilon {} outside (0, 1)", self.clip_epsilon));
        }
        if !(self.kl_beta >= 0.0 && self.kl_beta.is_finite()) {
            return bad(format!("kl_beta {} must be >= 0", self.kl_beta));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        Ok(())
    }
}

/// `(r_i - mean) / std` with the population std. A group with std below
/// [`DEGENERATE_STD`] yields all zeros.
pub fn normalize_advantages(rewards: &[f64]) -> Result<Vec<f64>, GrpoError> {
    let n = rewards.len();
    if n < 2 {
        return Err(GrpoError::GroupTooSmall(n));
    }
    let mean = rewards.iter().sum::<f64>() / n as f64;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std < DEGENERATE_STD {
        return Ok(vec![0.0; n]);
    }
    Ok(rewards.iter().map(|r| (r - mean) / std).collect())
}

/// Non-negative k3 estimator of KL(π_θ ‖ π_ref) from one sample.
pub fn kl_estimate(logprob_current: f64, logprob_ref: f64) -> f64 {
    kl_estimate_clamped(logprob_current, logprob_ref).0
}

/// k3 estimate plus whether `ρ` hit [`LOG_RATIO_CEILING`].
pub fn kl_estimate_clamped(logprob_current: f64, logprob_ref: f64) -> (f64, bool) {
    let raw = logprob_ref - logprob_current;
    let clamped = raw > LOG_RATIO_CEILING;
    let rho = raw.min(LOG_RATIO_CEILING);
    // exp_m1 keeps precision for small rho
    ((rho.exp_m1() - rho).max(0.0), clamped)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub text: String,
    pub logprob_current: f64,
    pub logprob_old: f64,
    pub logprob_ref: f64,
    pub reward: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutGroup {
    pub query_id: String,
    pub candidates: Vec<Candidate>,
}

impl RolloutGroup {
    pub fn rewards(&self) -> Vec<f64> {
        self.candidates.iter().map(|c| c.reward).collect()
    }

    /// Fills every candidate's advantage from the group's rewards.
    pub fn assign_advantages(&mut self) -> Result<(), GrpoError> {
        let adv = normalize_advantages(&self.rewards())?;
        for (c, a) in self.candidates.iter_mut().zip(adv) {
            c.advantage = a;
        }
        Ok(())
    }
}

/// Per-candidate objective term and its derivative with respect to the
/// current log-probability.
struct Term {
    value: f64,
    d_logprob: f64,
    kl: f64,
    kl_clamped: bool,
}

fn candidate_term(
    lp_current: f64,
    lp_old: f64,
    lp_ref: f64,
    advantage: f64,
    config: &GrpoConfig,
) -> Term {
    let ratio = (lp_current - lp_old).exp();
    let clipped = ratio.clamp(1.0 - config.clip_epsilon, 1.0 + config.clip_epsilon);
    let unclipped_obj = ratio * advantage;
    let clipped_obj = clipped * advantage;
    let (surrogate, d_surrogate) = if unclipped_obj <= clipped_obj {
        (unclipped_obj, unclipped_obj)
    } else {
        (clipped_obj, 0.0)
    };

    let (kl, kl_clamped) = kl_estimate_clamped(lp_current, lp_ref);
    let rho = (lp_ref - lp_current).min(LOG_RATIO_CEILING);
    // d k3 / d lp_current = 1 - exp(rho); zero once clamped
    let d_kl = if kl_clamped { 0.0 } else { -rho.exp_m1() };

    Term {
        value: surrogate - config.kl_beta * kl,
        d_logprob: d_surrogate - config.kl_beta * d_kl,
        kl,
        kl_clamped,
    }
}

/// Mean clipped surrogate minus the KL penalty over the group's candidates.
pub fn surrogate_objective(group: &RolloutGroup, config: &GrpoConfig) -> f64 {
    let n = group.candidates.len();
    if n == 0 {
        return 0.0;
    }
    group
        .candidates
        .iter()
        .map(|c| {
            candidate_term(
                c.logprob_current,
                c.logprob_old,
                c.logprob_ref,
                c.advantage,
                config,
            )
            .value
        })
        .sum::<f64>()
        / n as f64
}

/// A stochastic policy over a finite or structured action space with
/// externally held parameters.
pub trait Policy {
    type Query;
    type Action: Clone;

    fn param_count(&self) -> usize;
    fn sample<R: Rng + ?Sized>(
        &self,
        params: &[f64],
        query: &Self::Query,
        rng: &mut R,
    ) -> Self::Action;
    fn log_prob(&self, params: &[f64], query: &Self::Query, action: &Self::Action) -> f64;
    fn grad_log_prob(&self, params: &[f64], query: &Self::Query, action: &Self::Action)
        -> Vec<f64>;
    fn render(&self, query: &Self::Query, action: &Self::Action) -> String;
    fn query_id(&self, query: &Self::Query) -> String;
}

/// Sampled actions for one query with the fixed quantities of the objective.
#[derive(Debug, Clone)]
pub struct GroupSample<A> {
    pub actions: Vec<A>,
    pub logprob_old: Vec<f64>,
    pub logprob_ref: Vec<f64>,
    pub advantages: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveEval {
    /// Mean over groups of the per-group objective.
    pub value: f64,
    pub gradient: Vec<f64>,
    pub mean_kl: f64,
    pub kl_clamped: usize,
}

/// Objective and exact gradient at `params` over a batch of sampled groups.
/// Accumulation runs in batch order, so results are reproducible.
pub fn objective_and_gradient<P: Policy>(
    policy: &P,
    params: &[f64],
    batch: &[(&P::Query, &GroupSample<P::Action>)],
    config: &GrpoConfig,
) -> ObjectiveEval {
    let mut gradient = vec![0.0; policy.param_count()];
    let mut value = 0.0;
    let mut kl_sum = 0.0;
    let mut kl_count = 0usize;
    let mut kl_clamped = 0usize;
    let groups = batch.len().max(1) as f64;

    for (query, sample) in batch {
        let n = sample.actions.len() as f64;
        for (i, action) in sample.actions.iter().enumerate() {
            let lp = policy.log_prob(params, query, action);
            let t = candidate_term(
                lp,
                sample.logprob_old[i],
                sample.logprob_ref[i],
                sample.advantages[i],
                config,
            );
            value += t.value / (n * groups);
            kl_sum += t.kl;
            kl_count += 1;
            kl_clamped += usize::from(t.kl_clamped);
            if t.d_logprob != 0.0 {
                let g = policy.grad_log_prob(params, query, action);
                let scale = t.d_logprob / (n * groups);
                for (acc, gi) in gradient.iter_mut().zip(g) {
                    *acc += scale * gi;
                }
            }
        }
    }
    ObjectiveEval {
        value,
        gradient,
        mean_kl: if kl_count == 0 {
            0.0
        } else {
            kl_sum / kl_count as f64
        },
        kl_clamped,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepStats {
    pub step: usize,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub objective: f64,
    pub component_means: BTreeMap<&'static str, f64>,
    pub kl_clamped: usize,
    pub grad_norm: f64,
}

/// Samples one group per query from the current parameters (the step's
/// `π_old`), scores it, and takes one gradient-ascent step in place.
#[allow(clippy::too_many_arguments)]
pub fn grpo_step<P, F, R>(
    policy: &P,
    params: &mut [f64],
    ref_params: &[f64],
    queries: &[P::Query],
    reward_fn: F,
    config: &GrpoConfig,
    rng: &mut R,
    step: usize,
) -> Result<StepStats, GrpoError>
where
    P: Policy,
    F: Fn(&P::Query, &str) -> RewardBreakdown,
    R: Rng + ?Sized,
{
    config.validate()?;
    let old_params = params.to_vec();
    let mut samples = Vec::with_capacity(queries.len());
    let mut reward_sum = 0.0;
    let mut component_sums: BTreeMap<&'static str, (f64, usize)> = BTreeMap::new();
    let mut count = 0usize;

    for query in queries {
        let actions: Vec<P::Action> = (0..config.group_size)
            .map(|_| policy.sample(&old_params, query, rng))
            .collect();
        let mut rewards = Vec::with_capacity(actions.len());
        for a in &actions {
            let text = policy.render(query, a);
            let b = reward_fn(query, &text);
            for c in Component::ALL {
                if let Some(v) = b.get(c) {
                    let e = component_sums.entry(c.as_str()).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
            }
            reward_sum += b.total;
            count += 1;
            rewards.push(b.total);
        }
        let advantages = normalize_advantages(&rewards)?;
        let logprob_old = actions
            .iter()
            .map(|a| policy.log_prob(&old_params, query, a))
            .collect();
        let logprob_ref = actions
            .iter()
            .map(|a| policy.log_prob(ref_params, query, a))
            .collect();
        samples.push(GroupSample {
            actions,
            logprob_old,
            logprob_ref,
            advantages,
        });
    }

    let batch: Vec<(&P::Query, &GroupSample<P::Action>)> =
        queries.iter().zip(samples.iter()).collect();
    let eval = objective_and_gradient(policy, &old_params, &batch, config);
    for (p, g) in params.iter_mut().zip(&eval.gradient) {
        *p += config.learning_rate * g;
    }

    Ok(StepStats {
        step,
        mean_reward: if count == 0 {
            0.0
        } else {
            reward_sum / count as f64
        },
        mean_kl: eval.mean_kl,
        objective: eval.value,
        component_means: component_sums
            .into_iter()
            .map(|(k, (s, n))| (k, s / n as f64))
            .collect(),
        kl_clamped: eval.kl_clamped,
        grad_norm: eval.gradient.iter().map(|g| g * g).sum::<f64>().sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cand(lp_cur: f64, lp_old: f64, lp_ref: f64, adv: f64) -> Candidate {
        Candidate {
            text: String::new(),
            logprob_current: lp_cur,
            logprob_old: lp_old,
            logprob_ref: lp_ref,
            reward: 0.0,
            advantage: adv,
        }
    }

    #[test]
    fn advantages_hand_checked() {
        assert_eq!(
            normalize_advantages(&[1.0, 0.0, 1.0, 0.0]).unwrap(),
            vec![1.0, -1.0, 1.0, -1.0]
        );
        assert_eq!(
            normalize_advantages(&[3.0, 3.0, 3.0]).unwrap(),
            vec![0.0; 3]
        );
        assert_eq!(
            normalize_advantages(&[1.0]),
            Err(GrpoError::GroupTooSmall(1))
        );
    }

    #[test]
    fn kl_estimator_values() {
        assert_eq!(kl_estimate(-1.0, -1.0), 0.0);
        let ln2 = std::f64::consts::LN_2;
        assert!((kl_estimate(0.0, ln2) - (1.0 - ln2)).abs() < 1e-15);
        let (v, clamped) = kl_estimate_clamped(-100.0, 0.0);
        assert!(clamped && v.is_finite());
    }

    #[test]
    fn objective_examples() {
        let cfg = GrpoConfig {
            kl_beta: 0.0,
            ..GrpoConfig::default()
        };
        let zero = RolloutGroup {
            query_id: "q".into(),
            candidates: vec![cand(-1.0, -1.0, -1.0, 0.0), cand(-2.0, -2.0, -2.0, 0.0)],
        };
        assert_eq!(surrogate_objective(&zero, &GrpoConfig::default()), 0.0);

        let balanced = RolloutGroup {
            query_id: "q".into(),
            candidates: vec![cand(-1.0, -1.0, -1.0, 1.0), cand(-1.0, -1.0, -1.0, -1.0)],
        };
        assert_eq!(surrogate_objective(&balanced, &cfg), 0.0);

        // s = 1.5 clipped to 1.2 with A = 1; second term s = 1, A = 0
        let clipped = RolloutGroup {
            query_id: "q".into(),
            candidates: vec![
                cand(1.5f64.ln() - 1.0, -1.0, -1.0, 1.0),
                cand(-1.0, -1.0, -1.0, 0.0),
            ],
        };
        assert!((surrogate_objective(&clipped, &cfg) - 1.2 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn negative_advantage_uses_pessimistic_branch() {
        let cfg = GrpoConfig {
            kl_beta: 0.0,
            ..GrpoConfig::default()
        };
        // s = 0.5, A = -1: min(-0.5, -0.8) = -0.8
        let t = candidate_term(0.5f64.ln(), 0.0, 0.0, -1.0, &cfg);
        assert!((t.value + 0.8).abs() < 1e-12);
        assert_eq!(t.d_logprob, 0.0);
        // s = 1.5, A = -1: min(-1.5, -1.2) = -1.5, gradient flows
        let t = candidate_term(1.5f64.ln(), 0.0, 0.0, -1.0, &cfg);
        assert!((t.value + 1.5).abs() < 1e-12);
        assert!((t.d_logprob + 1.5).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(GrpoConfig::default().validate().is_ok());
        let c = GrpoConfig {
            group_size: 1,
            ..GrpoConfig::default()
        };
        assert_eq!(c.validate(), Err(GrpoError::GroupTooSmall(1)));
        let c = GrpoConfig {
            clip_epsilon: 1.0,
            ..GrpoConfig::default()
        };
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn advantages_are_standardized(rewards in proptest::collection::vec(-10.0f64..10.0, 2..17)) {
            let a = normalize_advantages(&rewards).unwrap();
            let n = a.len() as f64;
            let mean = a.iter().sum::<f64>() / n;
            prop_assert!(mean.abs() < 1e-9);
            let std = (a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            prop_assert!((std - 1.0).abs() < 1e-9 || a.iter().all(|&x| x == 0.0));
        }

        #[test]
        fn kl_nonnegative(a in -50.0f64..0.0, b in -50.0f64..0.0) {
            prop_assert!(kl_estimate(a, b) >= 0.0);
        }
    }
}
