//! Synthetic co-evolution lab: scheduler plus credit assigner exercised
//! end-to-end with no language model.
//!
//! The designer is a categorical distribution over coordination structures
//! (softmax over logits); the executor is a per-structure success
//! probability capped by a per-structure ceiling. Each step samples an M×N
//! rollout matrix, computes the same decomposed advantages as the real
//! pipeline, applies the stage mask, and nudges the active side:
//! multiplicative weights on designer logits, advantage-proportional moves
//! of executor skills toward their ceilings. Runs are deterministic given
//! the environment and a seed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::credit::{designer_advantages, DEFAULT_EPSILON_NORM};
use crate::schedule::{stage_mask, SchedulePolicy, StageMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearningGains {
    pub designer_step: f64,
    pub executor_step: f64,
}

/// A stand-in for the designer/executor policy pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticEnv {
    /// Structure ids, e.g. `["single", "reflection", "ensemble"]`.
    pub structures: Vec<String>,
    /// Unnormalized designer preferences; probabilities are their softmax.
    pub designer_logits: Vec<f64>,
    /// Per-structure success probability, within `[0, ceiling]`.
    pub executor_skill: Vec<f64>,
    /// Per-structure skill ceiling, within `[0, 1]`.
    pub skill_ceiling: Vec<f64>,
    pub learning_gains: LearningGains,
    pub noise_seed: u64,
    /// Probability of flipping each sampled reward while both roles update
    /// (the coupled-instability illustration); 0 disables it.
    #[serde(default)]
    pub coupled_corruption: f64,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SimError {
    #[error("environment field lengths disagree: {0}")]
    ShapeMismatch(String),
    #[error("{0}")]
    Domain(String),
    #[error("simulation needs steps ≥ 1, M ≥ 1, N ≥ 1, seeds ≥ 1")]
    EmptyRun,
    #[error("cannot read environment file {path}: {message}")]
    File { path: String, message: String },
}

impl SyntheticEnv {
    pub fn validate(&self) -> Result<(), SimError> {
        let k = self.structures.len();
        if k == 0 {
            return Err(SimError::ShapeMismatch("no structures".into()));
        }
        if self.designer_logits.len() != k
            || self.executor_skill.len() != k
            || self.skill_ceiling.len() != k
        {
            return Err(SimError::ShapeMismatch(format!(
                "structures={k}, logits={}, skills={}, ceilings={}",
                self.designer_logits.len(),
                self.executor_skill.len(),
                self.skill_ceiling.len()
            )));
        }
        for (i, (&skill, &ceiling)) in self.executor_skill.iter().zip(&self.skill_ceiling).enumerate()
        {
            if !(0.0..=1.0).contains(&ceiling) {
                return Err(SimError::Domain(format!("ceiling[{i}] must be in [0,1]")));
            }
            if !(0.0..=ceiling).contains(&skill) {
                return Err(SimError::Domain(format!("skill[{i}] must be in [0, ceiling[{i}]]")));
            }
        }
        if !(0.0..=1.0).contains(&self.coupled_corruption) {
            return Err(SimError::Domain("coupled_corruption must be in [0,1]".into()));
        }
        if !(self.learning_gains.designer_step > 0.0) || !(self.learning_gains.executor_step > 0.0) {
            return Err(SimError::Domain("learning gains must be > 0".into()));
        }
        Ok(())
    }

    /// Softmax of the designer logits; always a simplex point.
    pub fn structure_probabilities(&self) -> Vec<f64> {
        softmax(&self.designer_logits)
    }

    /// Load a TOML-encoded environment.
    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let env: SyntheticEnv = toml::from_str(&text).map_err(|e| SimError::File {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        env.validate()?;
        Ok(env)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

/// Per-step mean rewards with the role active at each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCurve {
    pub mean_rewards: Vec<f64>,
    /// "executor", "designer", or "both" per step.
    pub active_roles: Vec<String>,
}

impl RewardCurve {
    pub fn len(&self) -> usize {
        self.mean_rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean_rewards.is_empty()
    }

    /// Mean over the final window (the last ⌈steps/8⌉ entries).
    pub fn final_window_mean(&self) -> f64 {
        let w = final_window(self.len());
        let tail = &self.mean_rewards[self.len() - w..];
        tail.iter().sum::<f64>() / w as f64
    }
}

/// Summary-statistics window: the last ⌈steps/8⌉ steps.
pub fn final_window(steps: usize) -> usize {
    steps.div_ceil(8).max(1)
}

/// Full per-step trace for property checks on the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub curve: RewardCurve,
    /// Σ of structure probabilities after each step's update.
    pub probability_sums: Vec<f64>,
    /// Executor skills after each step's update.
    pub skills_per_step: Vec<Vec<f64>>,
}

fn mask_label(mask: StageMask) -> String {
    match mask.active_role() {
        Some(role) => role.as_str().to_string(),
        None => "both".to_string(),
    }
}

fn run_seed(env: &SyntheticEnv, seed: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&env.noise_seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&seed.to_le_bytes());
    bytes[16..24].copy_from_slice(&env.noise_seed.rotate_left(17).to_le_bytes());
    bytes[24..32].copy_from_slice(&seed.rotate_left(31).to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

/// Simulate `steps` training steps and return the reward curve.
pub fn simulate_run(
    env: &SyntheticEnv,
    policy: SchedulePolicy,
    steps: usize,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<RewardCurve, SimError> {
    simulate_run_trace(env, policy, steps, m, n, seed).map(|t| t.curve)
}

/// Simulate with the full per-step trace retained.
pub fn simulate_run_trace(
    env: &SyntheticEnv,
    policy: SchedulePolicy,
    steps: usize,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<SimTrace, SimError> {
    env.validate()?;
    if steps == 0 || m == 0 || n == 0 {
        return Err(SimError::EmptyRun);
    }

    let mut rng = run_seed(env, seed);
    let mut logits = env.designer_logits.clone();
    let mut skills = env.executor_skill.clone();
    let gains = env.learning_gains;

    let mut mean_rewards = Vec::with_capacity(steps);
    let mut active_roles = Vec::with_capacity(steps);
    let mut probability_sums = Vec::with_capacity(steps);
    let mut skills_per_step = Vec::with_capacity(steps);

    for t in 0..steps {
        let mask = stage_mask(t as u64, policy);

        // Designer level: draw M structures.
        let probabilities = softmax(&logits);
        let chosen: Vec<usize> =
            (0..m).map(|_| sample_categorical(&mut rng, &probabilities)).collect();

        // Executor level: N Bernoulli outcomes per design.
        let mut rewards = vec![vec![0.0f64; n]; m];
        for (i, &structure) in chosen.iter().enumerate() {
            for j in 0..n {
                let success = rng.gen::<f64>() < skills[structure];
                rewards[i][j] = if success { 1.0 } else { 0.0 };
            }
        }
        if mask.alpha_designer == 1 && mask.alpha_executor == 1 && env.coupled_corruption > 0.0 {
            for row in rewards.iter_mut() {
                for r in row.iter_mut() {
                    if rng.gen::<f64>() < env.coupled_corruption {
                        *r = 1.0 - *r;
                    }
                }
            }
        }

        // The same decomposed credit as the real pipeline.
        let means: Vec<f64> =
            rewards.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();
        let design_advs = designer_advantages(&means, DEFAULT_EPSILON_NORM);
        let all: Vec<f64> = rewards.iter().flatten().copied().collect();
        let mu = all.iter().sum::<f64>() / all.len() as f64;
        let sigma = (all.iter().map(|r| (r - mu).powi(2)).sum::<f64>() / all.len() as f64).sqrt();

        if mask.alpha_designer == 1 {
            for (i, &structure) in chosen.iter().enumerate() {
                logits[structure] += gains.designer_step * design_advs[i];
            }
        }
        if mask.alpha_executor == 1 {
            for (i, &structure) in chosen.iter().enumerate() {
                for j in 0..n {
                    let advantage = (rewards[i][j] - mu) / (sigma + DEFAULT_EPSILON_NORM);
                    let ceiling = env.skill_ceiling[structure];
                    let moved = skills[structure]
                        + gains.executor_step * advantage * (ceiling - skills[structure]);
                    skills[structure] = moved.clamp(0.0, ceiling);
                }
            }
        }

        mean_rewards.push(mu);
        active_roles.push(mask_label(mask));
        probability_sums.push(softmax(&logits).iter().sum());
        skills_per_step.push(skills.clone());
    }

    Ok(SimTrace {
        curve: RewardCurve { mean_rewards, active_roles },
        probability_sums,
        skills_per_step,
    })
}

fn sample_categorical(rng: &mut ChaCha8Rng, probabilities: &[f64]) -> usize {
    let draw: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, p) in probabilities.iter().enumerate() {
        cumulative += p;
        if draw < cumulative {
            return i;
        }
    }
    probabilities.len() - 1
}

/// One row of a schedule comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSummary {
    pub policy: String,
    /// Final-window mean per seed, in seed order.
    pub per_seed: Vec<f64>,
    /// Mean of the per-seed final-window means.
    pub final_window_mean: f64,
    /// Population variance of the per-seed final-window means.
    pub variance: f64,
}

/// Run every policy over every seed and summarize final-window rewards.
pub fn compare_schedules(
    env: &SyntheticEnv,
    policies: &[SchedulePolicy],
    steps: usize,
    m: usize,
    n: usize,
    seeds: &[u64],
) -> Result<Vec<ScheduleSummary>, SimError> {
    if seeds.is_empty() {
        return Err(SimError::EmptyRun);
    }
    let mut out = Vec::with_capacity(policies.len());
    for &policy in policies {
        let mut per_seed = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let curve = simulate_run(env, policy, steps, m, n, seed)?;
            per_seed.push(curve.final_window_mean());
        }
        let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
        let variance =
            per_seed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / per_seed.len() as f64;
        let name = match policy {
            SchedulePolicy::Stagewise { k } => format!("stagewise(k={k})"),
            other => other.name().to_string(),
        };
        out.push(ScheduleSummary { policy: name, per_seed, final_window_mean: mean, variance });
    }
    Ok(out)
}

/// The shipped executor-bottleneck environment: uniform designer, all
/// skills far below heterogeneous ceilings, so executor learning does the
/// early lifting and designer routing pays off later.
pub fn executor_bottleneck_env() -> SyntheticEnv {
    toml::from_str(include_str!("../assets/sim/executor_bottleneck.toml"))
        .expect("shipped environment parses")
}
