//! Workflow execution against the policy gateway.
//!
//! [`run_workflow`] drives a validated [`WorkflowSpec`]: agent turn loops
//! with tool dispatch, ensemble fan-out/consensus, reflection iterations,
//! delivery-tag routing between agents, and final-answer extraction. It
//! always returns a [`Transcript`] — policy and tool faults terminate the
//! run with a marker and the partial transcript preserved. Per-call
//! deadlines are enforced by the backends (HTTP timeout, sandbox timeout),
//! which bounds total runtime by policy calls × per-call deadline plus tool
//! time.

mod parsing;
mod sandbox;

pub use parsing::{
    extract_delivery, extract_final_answer, parse_tool_calls, Answer, AnswerKind, ParsedToolCall,
    ToolCallParse,
};
pub use sandbox::{Sandbox, SandboxConfig, SandboxError, SandboxOutcome};

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::policy::{
    route_role, Message, PolicyBinding, PolicyGateway, PolicyRequest, Role, SamplingParams,
    TokenLogProb,
};
use crate::workflow::{AgentSpec, EnsembleSpec, NodeSpec, ReflectionSpec, ToolRegistry, WorkflowSpec};

/// How a workflow run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Normal,
    MaxTurns,
    PolicyError,
    ToolError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolCallStatus {
    Ok,
    Error,
    Malformed,
    /// Parsed but not dispatched because the turn budget was exhausted.
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallRecord {
    pub name: String,
    pub arguments: serde_json::Value,
    pub result_text: String,
    pub status: ToolCallStatus,
}

/// One policy interaction by one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub agent_name: String,
    pub role_label: String,
    pub policy_id: String,
    pub request_messages: Vec<Message>,
    pub response_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogProb>>,
    pub tool_calls: Vec<ToolCallRecord>,
    /// Content of the first well-formed delivery span, when present.
    pub delivery: Option<String>,
    /// True when this turn's output was handed to another agent.
    pub forwards_output: bool,
}

impl AgentTurn {
    /// The content handed onward: the delivery span when present, otherwise
    /// the full response (lenient mode; the format reward records it).
    pub fn forwarded_content(&self) -> &str {
        self.delivery.as_deref().unwrap_or(&self.response_text)
    }
}

/// Full record of one workflow execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub workflow_name: String,
    /// Turn order: node sequence, then member order within an ensemble, then
    /// call order within an agent loop. Concurrent ensemble members are
    /// normalized to member order so transcripts are deterministic.
    pub turns: Vec<AgentTurn>,
    pub final_answer: Option<Answer>,
    pub termination: Termination,
    /// Backend error detail accompanying an error termination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination_detail: Option<String>,
}

impl Transcript {
    /// Count of policy calls recorded.
    pub fn policy_calls(&self) -> usize {
        self.turns.len()
    }
}

/// Shared execution environment for workflow runs.
pub struct RuntimeEnv<'a> {
    pub registry: &'a ToolRegistry,
    pub sandbox: Sandbox,
    pub sampling: SamplingParams,
}

impl<'a> RuntimeEnv<'a> {
    pub fn new(registry: &'a ToolRegistry, sandbox: Sandbox) -> Self {
        RuntimeEnv { registry, sandbox, sampling: SamplingParams::default() }
    }

    pub fn with_sampling(mut self, sampling: SamplingParams) -> Self {
        self.sampling = sampling;
        self
    }
}

struct Ctx<'a> {
    gateway: &'a dyn PolicyGateway,
    policy_id: String,
    env: &'a RuntimeEnv<'a>,
    question: &'a str,
    binding_token: &'a str,
}

impl Ctx<'_> {
    fn bind(&self, prompt: &str) -> String {
        if self.binding_token.is_empty() {
            return prompt.to_string();
        }
        prompt.replace(self.binding_token, self.question)
    }
}

type Fault = (Termination, String);

struct LoopOutcome {
    final_text: String,
    /// Conversation including the final assistant message, for agents that
    /// keep history across reflection iterations.
    final_messages: Vec<Message>,
    last_turn_index: usize,
}

/// Execute a workflow and produce its transcript. Node semantics:
///
/// - agent: up to `max_turns` policy calls; well-formed tool calls are
///   dispatched and their results appended as tool messages, a response
///   without tool calls finalizes the node;
/// - ensemble: all members run (concurrently), then the consensus agent
///   receives every member's delivery (or full response when no delivery
///   tags exist); if the consensus output has no extractable answer the node
///   falls back to a majority vote over member answers, ties broken by
///   member order;
/// - reflection: initial solver turn, then `num_iterations` rounds of critic
///   feedback and solver revision; the final solver output is terminal.
pub fn run_workflow(
    spec: &WorkflowSpec,
    question: &str,
    gateway: &dyn PolicyGateway,
    binding: &PolicyBinding,
    env: &RuntimeEnv<'_>,
) -> Transcript {
    let mut transcript = Transcript {
        workflow_name: spec.name.clone(),
        turns: Vec::new(),
        final_answer: None,
        termination: Termination::Normal,
        termination_detail: None,
    };

    let policy_id = match route_role(Role::Executor, binding) {
        Ok(id) => id.to_string(),
        Err(e) => {
            transcript.termination = Termination::PolicyError;
            transcript.termination_detail = Some(e.to_string());
            return transcript;
        }
    };
    let Some(entry_idx) = spec.entry_index() else {
        transcript.termination = Termination::PolicyError;
        transcript.termination_detail = Some(format!("entry '{}' does not resolve", spec.entry));
        return transcript;
    };

    let ctx = Ctx {
        gateway,
        policy_id,
        env,
        question,
        binding_token: &spec.question_binding,
    };

    let chain = &spec.nodes[entry_idx..];
    let mut carried: Option<String> = None;
    let mut budget_cut = false;

    for (pos, node) in chain.iter().enumerate() {
        let is_terminal = pos == chain.len() - 1;
        let input = carried.clone().unwrap_or_else(|| question.to_string());
        let result = run_node(&ctx, &mut transcript.turns, node, &input, &mut budget_cut);
        match result {
            Ok(answer) => {
                if is_terminal {
                    transcript.final_answer = answer;
                } else if let Some(last) = transcript.turns.last_mut() {
                    last.forwards_output = true;
                    carried = Some(last.forwarded_content().to_string());
                }
            }
            Err((termination, detail)) => {
                transcript.termination = termination;
                transcript.termination_detail = Some(detail);
                return transcript;
            }
        }
    }

    if budget_cut {
        transcript.termination = Termination::MaxTurns;
    }
    transcript
}

fn run_node(
    ctx: &Ctx<'_>,
    turns: &mut Vec<AgentTurn>,
    node: &NodeSpec,
    input: &str,
    budget_cut: &mut bool,
) -> Result<Option<Answer>, Fault> {
    match node {
        NodeSpec::Agent(agent) => {
            let messages = vec![
                Message::system(ctx.bind(&agent.system_prompt)),
                Message::user(input.to_string()),
            ];
            let outcome = agent_loop(ctx, turns, agent, messages, budget_cut)?;
            Ok(extract_final_answer(&outcome.final_text))
        }
        NodeSpec::Ensemble(e) => run_ensemble(ctx, turns, e, input, budget_cut),
        NodeSpec::Reflection(r) => {
            let outcome = run_reflection(ctx, turns, r, input, budget_cut)?;
            Ok(extract_final_answer(&outcome))
        }
    }
}

/// The agent turn loop: policy call, tool-call parsing, sandbox dispatch,
/// repeated until the agent stops calling tools or `max_turns` is reached.
fn agent_loop(
    ctx: &Ctx<'_>,
    turns: &mut Vec<AgentTurn>,
    agent: &AgentSpec,
    mut messages: Vec<Message>,
    budget_cut: &mut bool,
) -> Result<LoopOutcome, Fault> {
    let max_turns = agent.max_turns.max(1);
    let mut calls = 0u32;
    loop {
        calls += 1;
        let request = PolicyRequest {
            policy_id: ctx.policy_id.clone(),
            role: Role::Executor,
            messages: messages.clone(),
            sampling: ctx.env.sampling,
        };
        let response = ctx
            .gateway
            .complete(&request)
            .map_err(|e| (Termination::PolicyError, e.to_string()))?;

        let parses = parse_tool_calls(&response.text);
        let delivery = extract_delivery(&response.text).map(str::to_string);
        let has_well_formed = parses.iter().any(|p| matches!(p, ToolCallParse::Call(_)));
        let dispatch = has_well_formed && calls < max_turns;

        let mut records = Vec::with_capacity(parses.len());
        let mut fault: Option<Fault> = None;
        for parse in parses {
            match parse {
                ToolCallParse::Malformed { raw, reason } => records.push(ToolCallRecord {
                    name: String::new(),
                    arguments: serde_json::Value::String(raw),
                    result_text: format!("malformed: {reason}"),
                    status: ToolCallStatus::Malformed,
                }),
                ToolCallParse::Call(call) if dispatch && fault.is_none() => {
                    let (record, tool_fault) = dispatch_tool(ctx, call);
                    records.push(record);
                    fault = tool_fault;
                }
                ToolCallParse::Call(call) => records.push(ToolCallRecord {
                    name: call.name,
                    arguments: serde_json::Value::Object(call.arguments),
                    result_text: String::new(),
                    status: ToolCallStatus::Skipped,
                }),
            }
        }

        turns.push(AgentTurn {
            agent_name: agent.name.clone(),
            role_label: agent.role.clone(),
            policy_id: ctx.policy_id.clone(),
            request_messages: messages.clone(),
            response_text: response.text.clone(),
            token_logprobs: response.token_logprobs.clone(),
            tool_calls: records,
            delivery,
            forwards_output: false,
        });
        let last_turn_index = turns.len() - 1;
        messages.push(Message::assistant(response.text.clone()));

        if let Some(f) = fault {
            return Err(f);
        }
        if !dispatch {
            if has_well_formed {
                *budget_cut = true;
            }
            return Ok(LoopOutcome { final_text: response.text, final_messages: messages, last_turn_index });
        }
        for record in &turns[last_turn_index].tool_calls {
            if matches!(record.status, ToolCallStatus::Ok | ToolCallStatus::Error) {
                messages.push(Message::tool(record.result_text.clone()));
            }
        }
    }
}

/// Run one tool call. Unknown names and bad arguments are data (the model
/// sees the error text); a sandbox spawn failure is a fault.
fn dispatch_tool(ctx: &Ctx<'_>, call: ParsedToolCall) -> (ToolCallRecord, Option<Fault>) {
    let mut record = ToolCallRecord {
        name: call.name.clone(),
        arguments: serde_json::Value::Object(call.arguments.clone()),
        result_text: String::new(),
        status: ToolCallStatus::Error,
    };

    let Some(tool) = ctx.env.registry.get(&call.name) else {
        record.result_text = format!("error: unknown tool '{}'", call.name);
        return (record, None);
    };
    if tool.name != "execute_code" {
        record.result_text = format!("error: tool '{}' has no executor", tool.name);
        return (record, None);
    }
    let Some(code) = call.arguments.get("code").and_then(|v| v.as_str()) else {
        record.result_text = "error: 'code' argument must be a string".to_string();
        return (record, None);
    };

    let timeout = Duration::from_secs_f64(tool.limits.timeout_s);
    match ctx.env.sandbox.run_with_timeout(code, "", timeout) {
        Err(e) => {
            record.result_text = format!("error: {e}");
            (record, Some((Termination::ToolError, e.to_string())))
        }
        Ok(outcome) => {
            record.result_text = render_outcome(&outcome, tool.limits.timeout_s);
            record.status = if outcome.success() { ToolCallStatus::Ok } else { ToolCallStatus::Error };
            (record, None)
        }
    }
}

fn render_outcome(outcome: &SandboxOutcome, timeout_s: f64) -> String {
    if outcome.timed_out {
        return format!("Error: code execution timed out ({timeout_s}s limit)");
    }
    let mut text = String::new();
    if !outcome.stdout.is_empty() {
        text.push_str("stdout:\n");
        text.push_str(&outcome.stdout);
        text.push('\n');
    }
    if !outcome.stderr.is_empty() {
        text.push_str("stderr:\n");
        text.push_str(&outcome.stderr);
        text.push('\n');
    }
    if text.is_empty() {
        text.push_str("(no output)");
    }
    text
}

fn run_ensemble(
    ctx: &Ctx<'_>,
    turns: &mut Vec<AgentTurn>,
    spec: &EnsembleSpec,
    input: &str,
    budget_cut: &mut bool,
) -> Result<Option<Answer>, Fault> {
    struct MemberRun {
        turns: Vec<AgentTurn>,
        result: Result<LoopOutcome, Fault>,
        budget_cut: bool,
    }

    // Members run concurrently; results are assembled in member order so the
    // transcript stays deterministic.
    let runs: Vec<MemberRun> = std::thread::scope(|scope| {
        let handles: Vec<_> = spec
            .members
            .iter()
            .map(|member| {
                scope.spawn(move || {
                    let mut member_turns = Vec::new();
                    let mut member_cut = false;
                    let messages = vec![
                        Message::system(ctx.bind(&member.system_prompt)),
                        Message::user(input.to_string()),
                    ];
                    let result = agent_loop(ctx, &mut member_turns, member, messages, &mut member_cut);
                    MemberRun { turns: member_turns, result, budget_cut: member_cut }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("member thread panicked")).collect()
    });

    let mut member_finals: Vec<(String, String, Option<Answer>)> = Vec::new();
    let mut fault: Option<Fault> = None;
    for (member, mut run) in spec.members.iter().zip(runs) {
        match run.result {
            Ok(outcome) => {
                let turn = &mut run.turns[outcome.last_turn_index];
                turn.forwards_output = true;
                let forwarded = turn.forwarded_content().to_string();
                let answer = extract_final_answer(&outcome.final_text);
                member_finals.push((member.name.clone(), forwarded, answer));
            }
            Err(f) => fault = fault.or(Some(f)),
        }
        *budget_cut |= run.budget_cut;
        turns.extend(run.turns);
    }
    if let Some(f) = fault {
        return Err(f);
    }

    let mut judge_input = format!("You received solutions from {} solvers.\n", member_finals.len());
    for (name, forwarded, _) in &member_finals {
        judge_input.push_str(&format!("\nSolution from {name}:\n{forwarded}\n"));
    }

    let Some(judge) = &spec.consensus_agent else {
        // Unreachable for validated consensus ensembles; fall back to the
        // member majority so the run still terminates.
        return Ok(majority_answer(&member_finals));
    };
    let messages = vec![Message::system(ctx.bind(&judge.system_prompt)), Message::user(judge_input)];
    let outcome = agent_loop(ctx, turns, judge, messages, budget_cut)?;
    Ok(extract_final_answer(&outcome.final_text).or_else(|| majority_answer(&member_finals)))
}

/// Majority vote over member answers; ties break by member order.
fn majority_answer(member_finals: &[(String, String, Option<Answer>)]) -> Option<Answer> {
    let answers: Vec<&Answer> = member_finals.iter().filter_map(|(_, _, a)| a.as_ref()).collect();
    if answers.is_empty() {
        return None;
    }
    let count_of = |target: &Answer| answers.iter().filter(|a| a.payload == target.payload).count();
    let best = answers.iter().map(|a| count_of(a)).max().unwrap_or(0);
    answers.iter().find(|a| count_of(a) == best).map(|a| (*a).clone())
}

fn run_reflection(
    ctx: &Ctx<'_>,
    turns: &mut Vec<AgentTurn>,
    spec: &ReflectionSpec,
    input: &str,
    budget_cut: &mut bool,
) -> Result<String, Fault> {
    let solver_messages = vec![
        Message::system(ctx.bind(&spec.solver.system_prompt)),
        Message::user(input.to_string()),
    ];
    let mut solved = agent_loop(ctx, turns, &spec.solver, solver_messages, budget_cut)?;

    for _ in 0..spec.num_iterations.max(1) {
        turns[solved.last_turn_index].forwards_output = true;
        let solver_fwd = turns[solved.last_turn_index].forwarded_content().to_string();

        let critic_messages = vec![
            Message::system(ctx.bind(&spec.critic.system_prompt)),
            Message::user(format!("Proposed solution:\n\n{solver_fwd}")),
        ];
        let critique = agent_loop(ctx, turns, &spec.critic, critic_messages, budget_cut)?;
        turns[critique.last_turn_index].forwards_output = true;
        let critic_fwd = turns[critique.last_turn_index].forwarded_content().to_string();

        let mut revision_messages = solved.final_messages;
        revision_messages.push(Message::user(format!("Feedback from reviewer:\n\n{critic_fwd}")));
        solved = agent_loop(ctx, turns, &spec.solver, revision_messages, budget_cut)?;
    }

    Ok(solved.final_text)
}
