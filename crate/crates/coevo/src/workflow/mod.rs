//! Declarative workflow descriptions: the design a Designer policy emits.
//!
//! A [`WorkflowSpec`] is pure data — a named, ordered list of nodes plus an
//! entry point. Execution semantics live in [`crate::runtime`]. Designs are
//! exchanged as text in the design grammar (see [`grammar`]) and instantiated
//! from the built-in template bank (see [`templates`]).

mod grammar;
mod registry;
mod templates;

pub use grammar::{parse_design_output, parse_design_output_with, serialize_design, DesignParseError};
pub use registry::{ParameterField, ParameterSchema, ToolLimits, ToolRegistry, ToolSpec};
pub use templates::{instantiate_template, TemplateId, UnknownTemplateError, DESIGNER_PROMPT};

use serde::{Deserialize, Serialize};

/// Placeholder token replaced by the task query when a design is bound.
pub const QUESTION_TOKEN: &str = "{{question}}";

/// A complete multi-agent system design.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowSpec {
    pub name: String,
    /// Name of the node execution starts from.
    pub entry: String,
    /// Token that marks where the task query is injected into prompts.
    pub question_binding: String,
    pub nodes: Vec<NodeSpec>,
}

/// One coordination node in a workflow.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeSpec {
    Agent(AgentSpec),
    Ensemble(EnsembleSpec),
    Reflection(ReflectionSpec),
}

/// A single role-specialized agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    /// Subrole label ("solver", "critic", "judge", ...); all workflow agents
    /// run under the Executor policy.
    pub role: String,
    pub system_prompt: String,
    /// Tool identifiers resolved against a [`ToolRegistry`].
    pub tools: Vec<String>,
    /// Upper bound on policy calls for this agent's tool loop.
    pub max_turns: u32,
}

/// Parallel agents whose outputs a consensus agent merges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub name: String,
    pub members: Vec<AgentSpec>,
    pub strategy: EnsembleStrategy,
    /// Required when strategy is `Consensus`.
    pub consensus_agent: Option<AgentSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleStrategy {
    Consensus,
}

/// Solver/critic refinement loop. The loop is node-internal; it is not a
/// cycle in the workflow graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionSpec {
    pub name: String,
    pub solver: AgentSpec,
    pub critic: AgentSpec,
    pub num_iterations: u32,
}

impl NodeSpec {
    pub fn name(&self) -> &str {
        match self {
            NodeSpec::Agent(a) => &a.name,
            NodeSpec::Ensemble(e) => &e.name,
            NodeSpec::Reflection(r) => &r.name,
        }
    }

    /// Every agent embedded in this node, in declaration order.
    pub fn agents(&self) -> Vec<&AgentSpec> {
        match self {
            NodeSpec::Agent(a) => vec![a],
            NodeSpec::Ensemble(e) => {
                let mut out: Vec<&AgentSpec> = e.members.iter().collect();
                if let Some(c) = &e.consensus_agent {
                    out.push(c);
                }
                out
            }
            NodeSpec::Reflection(r) => vec![&r.solver, &r.critic],
        }
    }
}

impl WorkflowSpec {
    /// All embedded agents across all nodes, in declaration order.
    pub fn agent_specs(&self) -> Vec<&AgentSpec> {
        self.nodes.iter().flat_map(|n| n.agents()).collect()
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name() == name)
    }

    /// Index of the entry node in `nodes`, if it resolves.
    pub fn entry_index(&self) -> Option<usize> {
        self.nodes.iter().position(|n| n.name() == self.entry)
    }
}

/// Coarse taxonomy of a design's coordination structure, used by reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureClass {
    Single,
    Reflection,
    Ensemble,
    Other,
}

impl StructureClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            StructureClass::Single => "single",
            StructureClass::Reflection => "reflection",
            StructureClass::Ensemble => "ensemble",
            StructureClass::Other => "other",
        }
    }
}

/// Classify a design: any reflection node wins, then any ensemble node, then
/// exactly one agent node counts as single; everything else is other.
pub fn classify_structure(spec: &WorkflowSpec) -> StructureClass {
    if spec.nodes.iter().any(|n| matches!(n, NodeSpec::Reflection(_))) {
        return StructureClass::Reflection;
    }
    if spec.nodes.iter().any(|n| matches!(n, NodeSpec::Ensemble(_))) {
        return StructureClass::Ensemble;
    }
    if spec.nodes.len() == 1 && matches!(spec.nodes[0], NodeSpec::Agent(_)) {
        return StructureClass::Single;
    }
    StructureClass::Other
}

/// One broken invariant, naming the offending node and the rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Node (or embedded agent) the violation is attached to; empty for
    /// workflow-level rules.
    pub node: String,
    pub rule: String,
}

/// Outcome of validating a workflow. Violations are data, not faults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, node: impl Into<String>, rule: impl Into<String>) {
        self.violations.push(Violation {
            node: node.into(),
            rule: rule.into(),
        });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            if v.node.is_empty() {
                write!(f, "{}", v.rule)?;
            } else {
                write!(f, "{}: {}", v.node, v.rule)?;
            }
        }
        Ok(())
    }
}

fn validate_agent(agent: &AgentSpec, tools: &ToolRegistry, report: &mut ValidationReport) {
    if agent.name.is_empty() {
        report.push("", "agent name must be non-empty");
    }
    if agent.max_turns == 0 {
        report.push(&agent.name, "max_turns must be ≥ 1");
    }
    for tool in &agent.tools {
        if tools.get(tool).is_none() {
            report.push(&agent.name, format!("unknown tool '{tool}'"));
        }
    }
}

/// Check every structural invariant of a workflow against a tool registry.
/// Returns `ok` iff the spec is executable; violations name node and rule.
pub fn validate_workflow(spec: &WorkflowSpec, tools: &ToolRegistry) -> ValidationReport {
    let mut report = ValidationReport::default();

    if spec.name.is_empty() {
        report.push("", "workflow name must be non-empty");
    }
    if spec.question_binding.is_empty() {
        report.push("", "question_binding must be non-empty");
    }
    if spec.nodes.is_empty() {
        report.push("", "workflow must have at least one node");
    }

    let mut seen = std::collections::BTreeSet::new();
    for node in &spec.nodes {
        if !seen.insert(node.name().to_string()) {
            report.push(node.name(), "duplicate node name");
        }
    }

    if spec.entry_index().is_none() {
        report.push(&spec.entry, "entry does not resolve to a node");
    }

    for node in &spec.nodes {
        match node {
            NodeSpec::Agent(a) => validate_agent(a, tools, &mut report),
            NodeSpec::Ensemble(e) => {
                if e.members.len() < 2 {
                    report.push(&e.name, "ensemble must have ≥ 2 members");
                }
                let mut member_names = std::collections::BTreeSet::new();
                for m in &e.members {
                    if !member_names.insert(m.name.clone()) {
                        report.push(&e.name, format!("duplicate member name '{}'", m.name));
                    }
                    validate_agent(m, tools, &mut report);
                }
                match (&e.strategy, &e.consensus_agent) {
                    (EnsembleStrategy::Consensus, None) => {
                        report.push(&e.name, "missing consensus agent");
                    }
                    (EnsembleStrategy::Consensus, Some(c)) => validate_agent(c, tools, &mut report),
                }
            }
            NodeSpec::Reflection(r) => {
                if r.num_iterations == 0 {
                    report.push(&r.name, "num_iterations must be ≥ 1");
                }
                validate_agent(&r.solver, tools, &mut report);
                validate_agent(&r.critic, tools, &mut report);
            }
        }
    }

    report
}
