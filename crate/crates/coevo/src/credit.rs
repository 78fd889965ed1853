//! Role-wise credit assignment over a rollout tree, and the clipped
//! group-relative objective.
//!
//! Designer credit: each design's reward is the mean of its N execution
//! outcomes, normalized against the M-design group for the same query.
//! Executor credit: all executor trajectories for the query form one group;
//! each trajectory carries its execution's raw reward, normalized over the
//! group multiset (trajectory multiplicity counts). Both normalizations use
//! the population standard deviation with an `ε` guard in the denominator.
//!
//! The objective is the clipped surrogate: with sequence-level ratio
//! `ρ = exp(new_logprob_sum − old_logprob_sum)`, each item contributes
//! `min(ρ·Â, clip(ρ, 1−ε, 1+ε)·Â)` and the loss is the negated group mean.

use serde::{Deserialize, Serialize};

use crate::rollout::{RolloutTree, TrajectoryRecord};

/// Denominator guard for advantage normalization.
pub const DEFAULT_EPSILON_NORM: f64 = 1e-6;
/// Clipping half-width for the surrogate objective.
pub const DEFAULT_CLIP_EPSILON: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignerAdvantage {
    pub design_index: usize,
    /// Mean execution reward of the design.
    pub mean_reward: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutorAdvantage {
    pub trajectory_id: String,
    pub advantage: f64,
}

/// Group statistics behind the normalizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub mu_designer: f64,
    pub sigma_designer: f64,
    pub mu_executor: f64,
    pub sigma_executor: f64,
    pub epsilon_norm: f64,
}

/// Advantages for every designer and executor trajectory of one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvantageTable {
    pub designer: Vec<DesignerAdvantage>,
    pub executor: Vec<ExecutorAdvantage>,
    pub stats: GroupStats,
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation (groups are complete populations).
fn population_std(values: &[f64], mu: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let variance = values.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / values.len() as f64;
    variance.sqrt()
}

/// Demeaned numerators `v − μ`, with one refinement pass so the residual
/// float drift of the mean cannot survive the small-σ amplification.
fn demeaned(values: &[f64]) -> Vec<f64> {
    let mu = mean(values);
    let mut numerators: Vec<f64> = values.iter().map(|v| v - mu).collect();
    let residual = mean(&numerators);
    for n in &mut numerators {
        *n -= residual;
    }
    numerators
}

/// Mean execution outcome per design: `R̄_i = (1/N)·Σ_j R(e_ij, d_i)`.
/// Placeholder executions count as zero rewards.
pub fn design_mean_rewards(tree: &RolloutTree) -> Vec<f64> {
    tree.designs
        .iter()
        .map(|d| mean(&d.executions.iter().map(|e| e.reward.total).collect::<Vec<_>>()))
        .collect()
}

/// Normalize design means against the M-design group:
/// `Â_i = (R̄_i − μ) / (σ + ε)`.
pub fn designer_advantages(means: &[f64], epsilon_norm: f64) -> Vec<f64> {
    let sigma = population_std(means, mean(means));
    demeaned(means).into_iter().map(|n| n / (sigma + epsilon_norm)).collect()
}

/// Question-level executor normalization: every executor trajectory across
/// all (i, j) forms one group; μ and σ are taken over the reward multiset
/// with trajectory multiplicity.
pub fn executor_advantages(tree: &RolloutTree, epsilon_norm: f64) -> Vec<ExecutorAdvantage> {
    let rewards: Vec<f64> = tree
        .designs
        .iter()
        .flat_map(|d| &d.executions)
        .flat_map(|e| e.trajectories.iter().map(|t| t.reward))
        .collect();
    if rewards.is_empty() {
        return Vec::new();
    }
    let sigma = population_std(&rewards, mean(&rewards));
    let numerators = demeaned(&rewards);
    tree.designs
        .iter()
        .flat_map(|d| &d.executions)
        .flat_map(|e| &e.trajectories)
        .zip(numerators)
        .map(|(t, numerator)| ExecutorAdvantage {
            trajectory_id: t.id.clone(),
            advantage: numerator / (sigma + epsilon_norm),
        })
        .collect()
}

/// Compute both advantage families and write them back into the tree's
/// records: designer records get the design mean as reward and the
/// normalized design advantage; executor records get their trajectory
/// advantage.
pub fn assign_advantages(tree: &mut RolloutTree, epsilon_norm: f64) -> AdvantageTable {
    let means = design_mean_rewards(tree);
    let designer_advs = designer_advantages(&means, epsilon_norm);
    let executor_advs = executor_advantages(tree, epsilon_norm);

    let mu_designer = mean(&means);
    let sigma_designer = population_std(&means, mu_designer);
    let executor_rewards: Vec<f64> = tree
        .designs
        .iter()
        .flat_map(|d| &d.executions)
        .flat_map(|e| e.trajectories.iter().map(|t| t.reward))
        .collect();
    let mu_executor = mean(&executor_rewards);
    let sigma_executor = population_std(&executor_rewards, mu_executor);

    let designer: Vec<DesignerAdvantage> = means
        .iter()
        .zip(&designer_advs)
        .enumerate()
        .map(|(i, (&mean_reward, &advantage))| DesignerAdvantage {
            design_index: i,
            mean_reward,
            advantage,
        })
        .collect();

    for (design, row) in tree.designs.iter_mut().zip(&designer) {
        design.designer_trajectory.reward = row.mean_reward;
        design.designer_trajectory.advantage = Some(row.advantage);
    }
    let mut by_id: std::collections::HashMap<&str, f64> = std::collections::HashMap::new();
    for adv in &executor_advs {
        by_id.insert(adv.trajectory_id.as_str(), adv.advantage);
    }
    for design in &mut tree.designs {
        for execution in &mut design.executions {
            for record in &mut execution.trajectories {
                record.advantage = by_id.get(record.id.as_str()).copied();
            }
        }
    }

    AdvantageTable {
        designer,
        executor: executor_advs,
        stats: GroupStats {
            mu_designer,
            sigma_designer,
            mu_executor,
            sigma_executor,
            epsilon_norm,
        },
    }
}

/// One trajectory's contribution to the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossItem {
    pub old_logprob_sum: f64,
    pub new_logprob_sum: f64,
    pub advantage: f64,
}

/// Inputs to the clipped objective for one role group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossInputs {
    pub items: Vec<LossItem>,
    pub clip_epsilon: f64,
}

impl LossInputs {
    pub fn new(items: Vec<LossItem>, clip_epsilon: f64) -> Self {
        LossInputs { items, clip_epsilon }
    }

    /// Build loss inputs from role-filtered records carrying log-probs and
    /// advantages; records missing either are skipped.
    pub fn from_records(records: &[TrajectoryRecord], clip_epsilon: f64) -> Self {
        let items = records
            .iter()
            .filter_map(|r| {
                let logprob_sum: f64 = r.token_logprobs.as_ref()?.iter().map(|t| t.logprob).sum();
                let advantage = r.advantage?;
                Some(LossItem {
                    old_logprob_sum: logprob_sum,
                    new_logprob_sum: logprob_sum,
                    advantage,
                })
            })
            .collect();
        LossInputs { items, clip_epsilon }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrpoObjective {
    /// `−(1/|G|)·Σ per_item`.
    pub loss: f64,
    pub per_item: Vec<f64>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CreditError {
    #[error("log-probabilities must be finite (item {index})")]
    NonFiniteLogProb { index: usize },
    #[error("clip epsilon must lie in (0, 1), got {0}")]
    BadClipEpsilon(f64),
    #[error("objective needs at least one item")]
    EmptyGroup,
}

/// Evaluate the clipped surrogate:
/// `per_item_i = min(ρ_i·Â_i, clip(ρ_i, 1−ε, 1+ε)·Â_i)` with
/// `ρ_i = exp(new_i − old_i)`, and `loss = −(1/|G|)·Σ_i per_item_i`.
pub fn grpo_objective(inputs: &LossInputs) -> Result<GrpoObjective, CreditError> {
    if !(inputs.clip_epsilon > 0.0 && inputs.clip_epsilon < 1.0) {
        return Err(CreditError::BadClipEpsilon(inputs.clip_epsilon));
    }
    if inputs.items.is_empty() {
        return Err(CreditError::EmptyGroup);
    }
    let mut per_item = Vec::with_capacity(inputs.items.len());
    for (index, item) in inputs.items.iter().enumerate() {
        if !item.old_logprob_sum.is_finite()
            || !item.new_logprob_sum.is_finite()
            || !item.advantage.is_finite()
        {
            return Err(CreditError::NonFiniteLogProb { index });
        }
        let ratio = (item.new_logprob_sum - item.old_logprob_sum).exp();
        let clipped = ratio.clamp(1.0 - inputs.clip_epsilon, 1.0 + inputs.clip_epsilon);
        per_item.push((ratio * item.advantage).min(clipped * item.advantage));
    }
    let loss = -per_item.iter().sum::<f64>() / per_item.len() as f64;
    Ok(GrpoObjective { loss, per_item })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Role;
    use crate::reward::RewardBreakdown;
    use crate::rollout::{DesignNode, ExecutionNode, RolloutConfig, RolloutTree, TrajectoryRecord};

    /// Build a tree whose execution (i, j) has the given reward and
    /// trajectory multiplicity.
    pub(crate) fn synthetic_tree(rewards: &[Vec<(f64, usize)>]) -> RolloutTree {
        let m = rewards.len();
        let n = rewards.first().map_or(0, |r| r.len());
        let designs = rewards
            .iter()
            .enumerate()
            .map(|(i, row)| DesignNode {
                index: i,
                designer_trajectory: TrajectoryRecord {
                    id: format!("q:d{i}:designer"),
                    query_id: "q".into(),
                    role: Role::Designer,
                    design_index: i,
                    execution_index: None,
                    policy_id: "P".into(),
                    context_messages: vec![],
                    output_text: String::new(),
                    token_logprobs: None,
                    reward: 0.0,
                    advantage: None,
                    stage_weight: None,
                },
                spec: None,
                parse_failure: None,
                executions: row
                    .iter()
                    .enumerate()
                    .map(|(j, &(reward, multiplicity))| ExecutionNode {
                        index: j,
                        transcript: None,
                        reward: RewardBreakdown {
                            r_correct: 0,
                            r_format: 0.0,
                            lambda: 0.4,
                            total: reward,
                        },
                        trajectories: (0..multiplicity)
                            .map(|t| TrajectoryRecord {
                                id: format!("q:d{i}:e{j}:t{t}"),
                                query_id: "q".into(),
                                role: Role::Executor,
                                design_index: i,
                                execution_index: Some(j),
                                policy_id: "P".into(),
                                context_messages: vec![],
                                output_text: String::new(),
                                token_logprobs: None,
                                reward,
                                advantage: None,
                                stage_weight: None,
                            })
                            .collect(),
                        fault: None,
                    })
                    .collect(),
            })
            .collect();
        RolloutTree {
            query_id: "q".into(),
            query: "q?".into(),
            config: RolloutConfig { m, n },
            designs,
            aborted: None,
        }
    }

    fn simple(rewards: &[Vec<f64>]) -> RolloutTree {
        let with_mult: Vec<Vec<(f64, usize)>> =
            rewards.iter().map(|row| row.iter().map(|&r| (r, 1)).collect()).collect();
        synthetic_tree(&with_mult)
    }

    #[test]
    fn design_means_follow_the_per_design_average() {
        assert_eq!(design_mean_rewards(&simple(&[vec![1.0, 1.0], vec![0.0, 0.0]])), vec![1.0, 0.0]);
        assert_eq!(design_mean_rewards(&simple(&[vec![1.0, 0.0], vec![1.0, 1.0]])), vec![0.5, 1.0]);
        let thirds = design_mean_rewards(&simple(&[vec![0.0, 1.0, 1.0]]));
        assert!((thirds[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn designer_advantages_match_hand_computation() {
        // means [1, 0]: μ = 0.5, σ_pop = 0.5 → ±(0.5 / (0.5 + ε)) ≈ ±1.
        let advs = designer_advantages(&[1.0, 0.0], 1e-6);
        assert!((advs[0] - 1.0).abs() < 1e-5);
        assert!((advs[1] + 1.0).abs() < 1e-5);

        // Identical means: zero numerator.
        assert_eq!(designer_advantages(&[0.5, 0.5], 1e-6), vec![0.0, 0.0]);

        // means [1, 0.5, 0]: σ_pop = sqrt(1/6) → ±1.2247…, 0.
        let advs = designer_advantages(&[1.0, 0.5, 0.0], 1e-6);
        let expected = 0.5 / ((1.0f64 / 6.0).sqrt() + 1e-6);
        assert!((advs[0] - expected).abs() < 1e-9);
        assert!((expected - 1.2247).abs() < 1e-4);
        assert!(advs[1].abs() < 1e-12);
        assert!((advs[2] + expected).abs() < 1e-9);
    }

    #[test]
    fn executor_advantages_match_hand_computation() {
        // Four single-trajectory executions, rewards [1, 1, 0, 0]:
        // μ = 0.5, σ_pop = 0.5 → ±1 within 1e-5.
        let tree = simple(&[vec![1.0, 1.0], vec![0.0, 0.0]]);
        let advs = executor_advantages(&tree, 1e-6);
        assert_eq!(advs.len(), 4);
        assert!((advs[0].advantage - 1.0).abs() < 1e-5);
        assert!((advs[1].advantage - 1.0).abs() < 1e-5);
        assert!((advs[2].advantage + 1.0).abs() < 1e-5);
        assert!((advs[3].advantage + 1.0).abs() < 1e-5);

        // All rewards equal → all advantages zero.
        let tree = simple(&[vec![0.7, 0.7], vec![0.7, 0.7]]);
        assert!(executor_advantages(&tree, 1e-6).iter().all(|a| a.advantage == 0.0));
    }

    #[test]
    fn executor_statistics_weight_by_trajectory_multiplicity() {
        // One reward-1 execution contributing 2 trajectories among three
        // reward-0 single-trajectory executions: multiset {1, 1, 0, 0, 0},
        // μ = 2/5; both reward-1 trajectories share one advantage.
        let tree = synthetic_tree(&[vec![(1.0, 2), (0.0, 1)], vec![(0.0, 1), (0.0, 1)]]);
        let advs = executor_advantages(&tree, 1e-6);
        assert_eq!(advs.len(), 5);
        let mu: f64 = 2.0 / 5.0;
        let sigma = ((2.0 * (1.0 - mu).powi(2) + 3.0 * mu * mu) / advs.len() as f64).sqrt();
        let expected_pos = (1.0 - mu) / (sigma + 1e-6);
        assert!((advs[0].advantage - expected_pos).abs() < 1e-9);
        assert_eq!(advs[0].advantage, advs[1].advantage);
        // Zero-mean over the multiset.
        let sum: f64 = advs.iter().map(|a| a.advantage).sum();
        assert!(sum.abs() < 1e-9);
    }

    #[test]
    fn empty_group_yields_empty_result() {
        let tree = synthetic_tree(&[vec![(0.0, 0)], vec![(0.0, 0)]]);
        assert!(executor_advantages(&tree, 1e-6).is_empty());
    }

    #[test]
    fn advantages_are_zero_mean_and_near_unit_scale() {
        let tree = simple(&[vec![1.4, 0.4, 0.0], vec![1.0, 1.4, 0.0], vec![0.4, 0.4, 1.0]]);
        let means = design_mean_rewards(&tree);
        let advs = designer_advantages(&means, 1e-6);
        let sum: f64 = advs.iter().sum();
        assert!(sum.abs() < 1e-9, "designer advantages must sum to 0, got {sum}");

        let mu = advs.iter().sum::<f64>() / advs.len() as f64;
        let std = (advs.iter().map(|a| (a - mu).powi(2)).sum::<f64>() / advs.len() as f64).sqrt();
        assert!((std - 1.0).abs() < 1e-3, "scale should be ≈ 1 when σ ≫ ε, got {std}");

        let executor = executor_advantages(&tree, 1e-6);
        let esum: f64 = executor.iter().map(|a| a.advantage).sum();
        assert!(esum.abs() < 1e-9);
    }

    #[test]
    fn designer_advantages_are_invariant_to_execution_order() {
        let base = simple(&[vec![1.4, 0.4, 0.0], vec![0.4, 1.0, 1.4]]);
        let permuted = simple(&[vec![0.0, 1.4, 0.4], vec![1.4, 0.4, 1.0]]);
        let a = designer_advantages(&design_mean_rewards(&base), 1e-6);
        let b = designer_advantages(&design_mean_rewards(&permuted), 1e-6);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn assign_advantages_fills_records_and_table() {
        let mut tree = simple(&[vec![1.0, 1.0], vec![0.0, 0.0]]);
        let table = assign_advantages(&mut tree, 1e-6);
        assert_eq!(table.designer.len(), 2);
        assert_eq!(table.executor.len(), 4);
        assert!((table.stats.mu_designer - 0.5).abs() < 1e-12);
        assert!((table.stats.sigma_designer - 0.5).abs() < 1e-12);

        // Designer records now carry the Eq.-4 mean and their advantage.
        assert_eq!(tree.designs[0].designer_trajectory.reward, 1.0);
        assert!(tree.designs[0].designer_trajectory.advantage.unwrap() > 0.99);
        assert!(tree.designs[1].designer_trajectory.advantage.unwrap() < -0.99);
        for design in &tree.designs {
            for execution in &design.executions {
                for record in &execution.trajectories {
                    assert!(record.advantage.is_some());
                }
            }
        }
    }

    #[test]
    fn grpo_objective_hand_values() {
        // ρ = 1, Â = 1, ε = 0.2 → per-item 1, loss −1.
        let identity = LossInputs::new(
            vec![LossItem { old_logprob_sum: -3.0, new_logprob_sum: -3.0, advantage: 1.0 }],
            0.2,
        );
        let out = grpo_objective(&identity).unwrap();
        assert!((out.per_item[0] - 1.0).abs() < 1e-12);
        assert!((out.loss + 1.0).abs() < 1e-12);

        // ρ = 1.5, Â = 1 → min(1.5, 1.2) = 1.2.
        let up = LossInputs::new(
            vec![LossItem { old_logprob_sum: 0.0, new_logprob_sum: 1.5f64.ln(), advantage: 1.0 }],
            0.2,
        );
        let out = grpo_objective(&up).unwrap();
        assert!((out.per_item[0] - 1.2).abs() < 1e-12);
        assert!((out.loss + 1.2).abs() < 1e-12);

        // ρ = 0.5, Â = −1 → min(−0.5, −0.8) = −0.8, loss +0.8.
        let down = LossInputs::new(
            vec![LossItem { old_logprob_sum: 0.0, new_logprob_sum: 0.5f64.ln(), advantage: -1.0 }],
            0.2,
        );
        let out = grpo_objective(&down).unwrap();
        assert!((out.per_item[0] + 0.8).abs() < 1e-12);
        assert!((out.loss - 0.8).abs() < 1e-12);
    }

    #[test]
    fn grpo_objective_averages_over_the_group() {
        let inputs = LossInputs::new(
            vec![
                LossItem { old_logprob_sum: 0.0, new_logprob_sum: 0.0, advantage: 1.0 },
                LossItem { old_logprob_sum: 0.0, new_logprob_sum: 0.0, advantage: -1.0 },
                LossItem { old_logprob_sum: 0.0, new_logprob_sum: 1.5f64.ln(), advantage: 1.0 },
            ],
            0.2,
        );
        let out = grpo_objective(&inputs).unwrap();
        let expected = -(1.0 - 1.0 + 1.2) / 3.0;
        assert!((out.loss - expected).abs() < 1e-12);
    }

    #[test]
    fn clip_geometry_is_piecewise_linear_then_flat() {
        let eps = 0.2;
        let rho_grid: Vec<f64> = (1..=40).map(|i| f64::from(i) * 0.05).collect();
        for &rho in &rho_grid {
            let item = |adv: f64| {
                LossInputs::new(
                    vec![LossItem { old_logprob_sum: 0.0, new_logprob_sum: rho.ln(), advantage: adv }],
                    eps,
                )
            };
            let positive = grpo_objective(&item(1.0)).unwrap().per_item[0];
            let negative = grpo_objective(&item(-1.0)).unwrap().per_item[0];
            // Â > 0: linear in ρ up to 1+ε, constant after.
            let expected_pos = if rho <= 1.0 + eps { rho } else { 1.0 + eps };
            // Â < 0: constant −(1−ε) below 1−ε, −ρ above.
            let expected_neg = if rho <= 1.0 - eps { -(1.0 - eps) } else { -rho };
            assert!((positive - expected_pos).abs() < 1e-9, "rho={rho}");
            assert!((negative - expected_neg).abs() < 1e-9, "rho={rho}");
        }
    }

    #[test]
    fn grpo_objective_rejects_bad_inputs() {
        let nan = LossInputs::new(
            vec![LossItem { old_logprob_sum: f64::NAN, new_logprob_sum: 0.0, advantage: 1.0 }],
            0.2,
        );
        assert!(matches!(grpo_objective(&nan), Err(CreditError::NonFiniteLogProb { index: 0 })));

        let empty = LossInputs::new(vec![], 0.2);
        assert_eq!(grpo_objective(&empty), Err(CreditError::EmptyGroup));

        let bad_eps = LossInputs::new(
            vec![LossItem { old_logprob_sum: 0.0, new_logprob_sum: 0.0, advantage: 1.0 }],
            1.5,
        );
        assert!(matches!(grpo_objective(&bad_eps), Err(CreditError::BadClipEpsilon(_))));
    }
}
