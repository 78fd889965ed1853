//! Bi-level rollout trees: M designs per query, N executions per design.
//!
//! [`collect`] samples M designer completions, parses each into a workflow
//! (parse failures become zero-reward placeholder rows so the M×N matrix
//! stays complete), runs N executions per design, scores them, and flattens
//! everything into role-labeled [`TrajectoryRecord`]s. Designs and
//! executions run concurrently; slot indices, not completion order, define
//! identity, so collection is deterministic under the scripted backend.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::policy::{
    route_role, Message, PolicyBinding, PolicyGateway, PolicyRequest, Role, SamplingParams,
    TokenLogProb,
};
use crate::reward::{RewardBreakdown, RewardScorer, Task};
use crate::runtime::{run_workflow, RuntimeEnv, Transcript};
use crate::workflow::{parse_design_output_with, WorkflowSpec, DESIGNER_PROMPT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub m: usize,
    pub n: usize,
}

/// Stable enumeration of the work a tree requires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutPlan {
    pub query_id: String,
    pub query: String,
    pub config: RolloutConfig,
    /// Design slot indices `0..M`.
    pub design_slots: Vec<usize>,
    /// Execution slots `(design_index, execution_index)` in row-major order.
    pub execution_slots: Vec<(usize, usize)>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("M and N must be ≥ 1, got M={m}, N={n}")]
    NonPositive { m: usize, n: usize },
}

/// Enumerate design and execution slots for a query.
pub fn build_plan(
    query_id: impl Into<String>,
    query: impl Into<String>,
    m: usize,
    n: usize,
) -> Result<RolloutPlan, PlanError> {
    if m == 0 || n == 0 {
        return Err(PlanError::NonPositive { m, n });
    }
    let design_slots = (0..m).collect();
    let execution_slots = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    Ok(RolloutPlan {
        query_id: query_id.into(),
        query: query.into(),
        config: RolloutConfig { m, n },
        design_slots,
        execution_slots,
    })
}

/// One role-labeled policy interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: String,
    pub query_id: String,
    pub role: Role,
    pub design_index: usize,
    /// Absent for designer records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution_index: Option<usize>,
    pub policy_id: String,
    pub context_messages: Vec<Message>,
    pub output_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogProb>>,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub advantage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_weight: Option<f64>,
}

/// Entry (i, j) of the evaluation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionNode {
    pub index: usize,
    /// Absent for placeholder executions under parse-failed designs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<Transcript>,
    pub reward: RewardBreakdown,
    /// The trajectory set for this execution; every record carries the same
    /// raw reward.
    pub trajectories: Vec<TrajectoryRecord>,
    /// Scoring fault detail (e.g. sandbox spawn failure), reward zeroed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignNode {
    pub index: usize,
    pub designer_trajectory: TrajectoryRecord,
    /// Present xor `parse_failure`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<WorkflowSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_failure: Option<String>,
    pub executions: Vec<ExecutionNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutTree {
    pub query_id: String,
    pub query: String,
    pub config: RolloutConfig,
    pub designs: Vec<DesignNode>,
    /// Set when every designer completion failed; partial data is preserved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl RolloutTree {
    /// Rewards as an M×N matrix in slot order.
    pub fn reward_matrix(&self) -> Vec<Vec<f64>> {
        self.designs
            .iter()
            .map(|d| d.executions.iter().map(|e| e.reward.total).collect())
            .collect()
    }
}

/// Everything [`collect`] needs besides the plan.
pub struct CollectContext<'a> {
    pub gateway: &'a dyn PolicyGateway,
    pub binding: &'a PolicyBinding,
    pub scorer: &'a RewardScorer,
    pub env: &'a RuntimeEnv<'a>,
    pub task: &'a Task,
    pub designer_prompt: &'a str,
    pub designer_sampling: SamplingParams,
}

impl<'a> CollectContext<'a> {
    pub fn new(
        gateway: &'a dyn PolicyGateway,
        binding: &'a PolicyBinding,
        scorer: &'a RewardScorer,
        env: &'a RuntimeEnv<'a>,
        task: &'a Task,
    ) -> Self {
        CollectContext {
            gateway,
            binding,
            scorer,
            env,
            task,
            designer_prompt: DESIGNER_PROMPT,
            designer_sampling: SamplingParams::default(),
        }
    }
}

/// Designer request messages for one design slot. The slot index is part of
/// the prompt so independent candidates stay distinguishable under the
/// digest-keyed scripted backend.
pub fn designer_messages(plan: &RolloutPlan, ctx: &CollectContext<'_>, slot: usize) -> Vec<Message> {
    vec![
        Message::system(ctx.designer_prompt.to_string()),
        Message::user(format!(
            "Candidate design {}/{} for the task below.\n\nTASK KIND: {}\n\nTASK:\n{}",
            slot + 1,
            plan.config.m,
            ctx.task.kind.name(),
            plan.query,
        )),
    ]
}

/// Collect the full M×N tree for one plan.
pub fn collect(plan: &RolloutPlan, ctx: &CollectContext<'_>) -> RolloutTree {
    let m = plan.config.m;
    let n = plan.config.n;
    let lambda = ctx.scorer.lambda;

    let designer_policy = match route_role(Role::Designer, ctx.binding) {
        Ok(id) => id.to_string(),
        Err(e) => {
            return aborted_tree(plan, ctx, &e.to_string());
        }
    };

    // Level one: M designer completions, sampled concurrently.
    let completions: Vec<Result<(Vec<Message>, crate::policy::PolicyResponse), String>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..m)
                .map(|i| {
                    let policy = designer_policy.clone();
                    scope.spawn(move || {
                        let messages = designer_messages(plan, ctx, i);
                        let request = PolicyRequest {
                            policy_id: policy,
                            role: Role::Designer,
                            messages: messages.clone(),
                            sampling: ctx.designer_sampling,
                        };
                        ctx.gateway
                            .complete(&request)
                            .map(|r| (messages, r))
                            .map_err(|e| e.to_string())
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("designer thread panicked")).collect()
        });

    let all_failed = completions.iter().all(|c| c.is_err());

    let mut designs: Vec<DesignNode> = Vec::with_capacity(m);
    for (i, completion) in completions.into_iter().enumerate() {
        let (messages, output_text, token_logprobs, failure) = match completion {
            Ok((messages, response)) => {
                let failure = match parse_design_output_with(&response.text, ctx.env.registry) {
                    Ok(_) => None,
                    Err(e) => Some(format!("{}: {e}", e.code())),
                };
                (messages, response.text.clone(), response.token_logprobs, failure)
            }
            Err(e) => (designer_messages(plan, ctx, i), String::new(), None, Some(format!("gateway_error: {e}"))),
        };
        let spec = match &failure {
            None => parse_design_output_with(&output_text, ctx.env.registry).ok(),
            Some(_) => None,
        };
        let designer_trajectory = TrajectoryRecord {
            id: format!("{}:d{i}:designer", plan.query_id),
            query_id: plan.query_id.clone(),
            role: Role::Designer,
            design_index: i,
            execution_index: None,
            policy_id: designer_policy.clone(),
            context_messages: messages,
            output_text,
            token_logprobs,
            // Designer reward is the Eq.-4 mean, filled by credit assignment.
            reward: 0.0,
            advantage: None,
            stage_weight: None,
        };
        designs.push(DesignNode {
            index: i,
            designer_trajectory,
            spec,
            parse_failure: failure,
            executions: placeholder_executions(n, lambda),
        });
    }

    // Level two: all executions across all parsed designs, concurrently.
    let jobs: Vec<(usize, usize, WorkflowSpec)> = designs
        .iter()
        .filter_map(|d| d.spec.clone().map(|s| (d.index, s)))
        .flat_map(|(i, spec)| (0..n).map(move |j| (i, j, spec.clone())))
        .collect();

    let results: Vec<(usize, usize, Transcript, RewardBreakdown, Option<String>)> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .into_iter()
                .map(|(i, j, spec)| {
                    scope.spawn(move || {
                        let transcript =
                            run_workflow(&spec, &plan.query, ctx.gateway, ctx.binding, ctx.env);
                        let (reward, fault) = match ctx.scorer.score(&transcript, ctx.task) {
                            Ok(breakdown) => (breakdown, None),
                            Err(e) => (RewardBreakdown::zero(lambda), Some(e.to_string())),
                        };
                        (i, j, transcript, reward, fault)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("execution thread panicked")).collect()
        });

    for (i, j, transcript, reward, fault) in results {
        let trajectories = execution_trajectories(&plan.query_id, i, j, &transcript, reward.total);
        designs[i].executions[j] = ExecutionNode {
            index: j,
            transcript: Some(transcript),
            reward,
            trajectories,
            fault,
        };
    }

    RolloutTree {
        query_id: plan.query_id.clone(),
        query: plan.query.clone(),
        config: plan.config,
        designs,
        aborted: if all_failed { Some("all designer completions failed".to_string()) } else { None },
    }
}

fn aborted_tree(plan: &RolloutPlan, ctx: &CollectContext<'_>, reason: &str) -> RolloutTree {
    let lambda = ctx.scorer.lambda;
    let designs = (0..plan.config.m)
        .map(|i| DesignNode {
            index: i,
            designer_trajectory: TrajectoryRecord {
                id: format!("{}:d{i}:designer", plan.query_id),
                query_id: plan.query_id.clone(),
                role: Role::Designer,
                design_index: i,
                execution_index: None,
                policy_id: String::new(),
                context_messages: vec![],
                output_text: String::new(),
                token_logprobs: None,
                reward: 0.0,
                advantage: None,
                stage_weight: None,
            },
            spec: None,
            parse_failure: Some(format!("gateway_error: {reason}")),
            executions: placeholder_executions(plan.config.n, lambda),
        })
        .collect();
    RolloutTree {
        query_id: plan.query_id.clone(),
        query: plan.query.clone(),
        config: plan.config,
        designs,
        aborted: Some(reason.to_string()),
    }
}

fn placeholder_executions(n: usize, lambda: f64) -> Vec<ExecutionNode> {
    (0..n)
        .map(|j| ExecutionNode {
            index: j,
            transcript: None,
            reward: RewardBreakdown::zero(lambda),
            trajectories: vec![],
            fault: None,
        })
        .collect()
}

/// One record per agent policy call, all sharing the execution's raw reward.
fn execution_trajectories(
    query_id: &str,
    design_index: usize,
    execution_index: usize,
    transcript: &Transcript,
    reward: f64,
) -> Vec<TrajectoryRecord> {
    transcript
        .turns
        .iter()
        .enumerate()
        .map(|(turn, t)| TrajectoryRecord {
            id: format!("{query_id}:d{design_index}:e{execution_index}:t{turn}"),
            query_id: query_id.to_string(),
            role: Role::Executor,
            design_index,
            execution_index: Some(execution_index),
            policy_id: t.policy_id.clone(),
            context_messages: t.request_messages.clone(),
            output_text: t.response_text.clone(),
            token_logprobs: t.token_logprobs.clone(),
            reward,
            advantage: None,
            stage_weight: None,
        })
        .collect()
}

/// All records of a tree: M designer records, then every executor record in
/// (design, execution, turn) order.
pub fn flatten_trajectories(tree: &RolloutTree) -> Vec<TrajectoryRecord> {
    let mut out = Vec::new();
    for design in &tree.designs {
        out.push(design.designer_trajectory.clone());
    }
    for design in &tree.designs {
        for execution in &design.executions {
            out.extend(execution.trajectories.iter().cloned());
        }
    }
    out
}

/// Canonical content hash of a tree; identical trees hash identically.
pub fn tree_digest(tree: &RolloutTree) -> String {
    let json = serde_json::to_string(tree).expect("trees are always serializable");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hex::encode(hasher.finalize())
}
