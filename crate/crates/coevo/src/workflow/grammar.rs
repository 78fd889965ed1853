//! The declarative design grammar: how workflow specs travel as text.
//!
//! A design block is a `<design>…</design>` span whose body is a TOML
//! document. [`serialize_design`] is the reference encoder; the field names
//! it emits are normative:
//!
//! ```text
//! <design>
//! name = "math_single_solver"
//! entry = "MathSolver"
//! question_binding = "{{question}}"
//!
//! [[nodes]]
//! kind = "agent"            # "agent" | "ensemble" | "reflection"
//! name = "MathSolver"
//! role = "solver"
//! system_prompt = "..."
//! tools = []
//! max_turns = 1
//! </design>
//! ```
//!
//! Ensemble nodes carry `strategy`, `[[nodes.members]]` tables and a
//! `[nodes.consensus]` table; reflection nodes carry `num_iterations`,
//! `[nodes.solver]` and `[nodes.critic]` tables. Agent tables embedded in a
//! node use the agent fields above minus `kind`.

use serde::{Deserialize, Serialize};

use super::{
    validate_workflow, AgentSpec, EnsembleSpec, EnsembleStrategy, NodeSpec, ReflectionSpec,
    ToolRegistry, ValidationReport, WorkflowSpec, QUESTION_TOKEN,
};

const OPEN_TAG: &str = "<design>";
const CLOSE_TAG: &str = "</design>";

/// Why a designer output failed to yield a workflow. Each variant is a
/// distinct parse-failure reason carried into the rollout record.
#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum DesignParseError {
    #[error("no design block")]
    MissingBlock,
    #[error("ambiguous design: more than one design block")]
    AmbiguousBlock,
    #[error("unterminated design block")]
    UnterminatedBlock,
    #[error("design grammar violation: {0}")]
    Grammar(String),
    #[error("design validation failed: {0}")]
    Validation(ValidationReport),
}

impl DesignParseError {
    /// Short stable code for storage and reporting.
    pub fn code(&self) -> &'static str {
        match self {
            DesignParseError::MissingBlock => "no_design_block",
            DesignParseError::AmbiguousBlock => "ambiguous_design",
            DesignParseError::UnterminatedBlock => "unterminated_design",
            DesignParseError::Grammar(_) => "grammar_violation",
            DesignParseError::Validation(_) => "validation_failure",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDesign {
    name: String,
    entry: String,
    #[serde(default = "default_binding")]
    question_binding: String,
    #[serde(default)]
    nodes: Vec<RawNode>,
}

fn default_binding() -> String {
    QUESTION_TOKEN.to_string()
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawNode {
    kind: String,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    role: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    system_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tools: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_turns: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    strategy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_iterations: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    members: Option<Vec<RawAgent>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    consensus: Option<RawAgent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    solver: Option<RawAgent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    critic: Option<RawAgent>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawAgent {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    role: Option<String>,
    system_prompt: String,
    #[serde(default)]
    tools: Vec<String>,
    #[serde(default = "default_max_turns")]
    max_turns: u32,
}

fn default_max_turns() -> u32 {
    1
}

impl From<&AgentSpec> for RawAgent {
    fn from(a: &AgentSpec) -> Self {
        RawAgent {
            name: a.name.clone(),
            role: Some(a.role.clone()),
            system_prompt: a.system_prompt.clone(),
            tools: a.tools.clone(),
            max_turns: a.max_turns,
        }
    }
}

impl RawAgent {
    fn into_spec(self, default_role: &str) -> AgentSpec {
        AgentSpec {
            name: self.name,
            role: self.role.unwrap_or_else(|| default_role.to_string()),
            system_prompt: self.system_prompt,
            tools: self.tools,
            max_turns: self.max_turns,
        }
    }
}

fn node_to_raw(node: &NodeSpec) -> RawNode {
    match node {
        NodeSpec::Agent(a) => RawNode {
            kind: "agent".to_string(),
            name: a.name.clone(),
            role: Some(a.role.clone()),
            system_prompt: Some(a.system_prompt.clone()),
            tools: Some(a.tools.clone()),
            max_turns: Some(a.max_turns),
            ..RawNode::default()
        },
        NodeSpec::Ensemble(e) => RawNode {
            kind: "ensemble".to_string(),
            name: e.name.clone(),
            strategy: Some(match e.strategy {
                EnsembleStrategy::Consensus => "consensus".to_string(),
            }),
            members: Some(e.members.iter().map(RawAgent::from).collect()),
            consensus: e.consensus_agent.as_ref().map(RawAgent::from),
            ..RawNode::default()
        },
        NodeSpec::Reflection(r) => RawNode {
            kind: "reflection".to_string(),
            name: r.name.clone(),
            num_iterations: Some(r.num_iterations),
            solver: Some(RawAgent::from(&r.solver)),
            critic: Some(RawAgent::from(&r.critic)),
            ..RawNode::default()
        },
    }
}

fn raw_to_node(raw: RawNode) -> Result<NodeSpec, DesignParseError> {
    let grammar = |msg: String| DesignParseError::Grammar(msg);
    match raw.kind.as_str() {
        "agent" => Ok(NodeSpec::Agent(AgentSpec {
            role: raw.role.unwrap_or_else(|| "solver".to_string()),
            system_prompt: raw
                .system_prompt
                .ok_or_else(|| grammar(format!("agent node '{}' requires system_prompt", raw.name)))?,
            tools: raw.tools.unwrap_or_default(),
            max_turns: raw.max_turns.unwrap_or(1),
            name: raw.name,
        })),
        "ensemble" => {
            let strategy = match raw.strategy.as_deref() {
                None | Some("consensus") => EnsembleStrategy::Consensus,
                Some(other) => {
                    return Err(grammar(format!(
                        "ensemble node '{}' has unknown strategy '{other}'",
                        raw.name
                    )))
                }
            };
            let members = raw
                .members
                .ok_or_else(|| grammar(format!("ensemble node '{}' requires members", raw.name)))?
                .into_iter()
                .map(|m| m.into_spec("member"))
                .collect();
            Ok(NodeSpec::Ensemble(EnsembleSpec {
                name: raw.name,
                members,
                strategy,
                consensus_agent: raw.consensus.map(|c| c.into_spec("judge")),
            }))
        }
        "reflection" => Ok(NodeSpec::Reflection(ReflectionSpec {
            solver: raw
                .solver
                .ok_or_else(|| grammar(format!("reflection node '{}' requires solver", raw.name)))?
                .into_spec("solver"),
            critic: raw
                .critic
                .ok_or_else(|| grammar(format!("reflection node '{}' requires critic", raw.name)))?
                .into_spec("critic"),
            num_iterations: raw.num_iterations.unwrap_or(1),
            name: raw.name,
        })),
        other => Err(grammar(format!(
            "node '{}' has unknown kind '{other}'",
            raw.name
        ))),
    }
}

/// Encode a workflow as a design block. This function is the reference for
/// the grammar: whatever it emits, [`parse_design_output`] accepts.
pub fn serialize_design(spec: &WorkflowSpec) -> String {
    let raw = RawDesign {
        name: spec.name.clone(),
        entry: spec.entry.clone(),
        question_binding: spec.question_binding.clone(),
        nodes: spec.nodes.iter().map(node_to_raw).collect(),
    };
    let body = toml::to_string(&raw).expect("workflow specs are always TOML-encodable");
    format!("{OPEN_TAG}\n{body}{CLOSE_TAG}")
}

/// Extract and parse the single design block from designer output, then
/// validate against the process-wide tool registry.
pub fn parse_design_output(text: &str) -> Result<WorkflowSpec, DesignParseError> {
    parse_design_output_with(text, ToolRegistry::global())
}

/// Same as [`parse_design_output`] with an explicit tool registry.
pub fn parse_design_output_with(
    text: &str,
    tools: &ToolRegistry,
) -> Result<WorkflowSpec, DesignParseError> {
    let body = extract_block(text)?;
    let raw: RawDesign =
        toml::from_str(body).map_err(|e| DesignParseError::Grammar(e.to_string()))?;
    let mut nodes = Vec::with_capacity(raw.nodes.len());
    for raw_node in raw.nodes {
        nodes.push(raw_to_node(raw_node)?);
    }
    let spec = WorkflowSpec {
        name: raw.name,
        entry: raw.entry,
        question_binding: raw.question_binding,
        nodes,
    };
    let report = validate_workflow(&spec, tools);
    if !report.is_ok() {
        return Err(DesignParseError::Validation(report));
    }
    Ok(spec)
}

fn extract_block(text: &str) -> Result<&str, DesignParseError> {
    let mut opens = text.match_indices(OPEN_TAG);
    let first = match opens.next() {
        None => return Err(DesignParseError::MissingBlock),
        Some((at, _)) => at,
    };
    if opens.next().is_some() {
        return Err(DesignParseError::AmbiguousBlock);
    }
    let body_start = first + OPEN_TAG.len();
    let close = text[body_start..]
        .find(CLOSE_TAG)
        .ok_or(DesignParseError::UnterminatedBlock)?;
    Ok(&text[body_start..body_start + close])
}
