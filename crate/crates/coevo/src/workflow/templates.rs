//! The built-in template bank: four workflow families instantiable per task.
//!
//! Role prompts are shipped as editable text assets under `assets/prompts/`
//! and embedded at compile time; instantiation binds the task query by
//! substituting the question token.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    AgentSpec, EnsembleSpec, EnsembleStrategy, NodeSpec, ReflectionSpec, WorkflowSpec,
    QUESTION_TOKEN,
};

const SINGLE_SOLVER: &str = include_str!("../../assets/prompts/single_solver.txt");
const MEMBER_ALGEBRAIC: &str = include_str!("../../assets/prompts/ensemble_member_algebraic.txt");
const MEMBER_GEOMETRIC: &str = include_str!("../../assets/prompts/ensemble_member_geometric.txt");
const MEMBER_COMBINATORIAL: &str =
    include_str!("../../assets/prompts/ensemble_member_combinatorial.txt");
const ENSEMBLE_JUDGE: &str = include_str!("../../assets/prompts/ensemble_judge.txt");
const REFLECTION_SOLVER: &str = include_str!("../../assets/prompts/reflection_solver.txt");
const REFLECTION_CRITIC: &str = include_str!("../../assets/prompts/reflection_critic.txt");
const CODE_SOLVER: &str = include_str!("../../assets/prompts/code_solver.txt");
const UNIT_TEST_CRITIC: &str = include_str!("../../assets/prompts/unit_test_critic.txt");

/// The system prompt the rollout orchestrator hands the Designer policy.
pub const DESIGNER_PROMPT: &str = include_str!("../../assets/prompts/designer.txt");

/// The closed set of workflow families in the template bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Single,
    EnsembleJudge,
    SolverCriticReflection,
    SolverUnittest,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::Single,
        TemplateId::EnsembleJudge,
        TemplateId::SolverCriticReflection,
        TemplateId::SolverUnittest,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TemplateId::Single => "single",
            TemplateId::EnsembleJudge => "ensemble_judge",
            TemplateId::SolverCriticReflection => "solver_critic_reflection",
            TemplateId::SolverUnittest => "solver_unittest",
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("unknown template id '{0}'")]
pub struct UnknownTemplateError(pub String);

impl std::str::FromStr for TemplateId {
    type Err = UnknownTemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(TemplateId::Single),
            "ensemble_judge" => Ok(TemplateId::EnsembleJudge),
            "solver_critic_reflection" => Ok(TemplateId::SolverCriticReflection),
            "solver_unittest" => Ok(TemplateId::SolverUnittest),
            other => Err(UnknownTemplateError(other.to_string())),
        }
    }
}

fn bind(prompt: &str, question: &str) -> String {
    prompt.replace(QUESTION_TOKEN, question)
}

fn agent(
    name: &str,
    role: &str,
    prompt: &str,
    tools: Vec<String>,
    max_turns: u32,
    question: &str,
    overrides: Option<&BTreeMap<String, String>>,
) -> AgentSpec {
    let base = overrides
        .and_then(|m| m.get(name))
        .map(String::as_str)
        .unwrap_or(prompt);
    AgentSpec {
        name: name.to_string(),
        role: role.to_string(),
        system_prompt: bind(base, question),
        tools,
        max_turns,
    }
}

/// Build a bound, valid workflow from the template bank.
///
/// `overrides` maps agent names to replacement system prompts (applied before
/// question binding); agents not named keep their shipped prompts.
pub fn instantiate_template(
    id: TemplateId,
    question: &str,
    overrides: Option<&BTreeMap<String, String>>,
) -> WorkflowSpec {
    let q = question;
    let ov = overrides;
    match id {
        TemplateId::Single => WorkflowSpec {
            name: "math_single_solver".into(),
            entry: "MathSolver".into(),
            question_binding: QUESTION_TOKEN.into(),
            nodes: vec![NodeSpec::Agent(agent(
                "MathSolver",
                "solver",
                SINGLE_SOLVER,
                vec![],
                1,
                q,
                ov,
            ))],
        },
        TemplateId::EnsembleJudge => WorkflowSpec {
            name: "math_ensemble_judge".into(),
            entry: "MathEnsemble".into(),
            question_binding: QUESTION_TOKEN.into(),
            nodes: vec![NodeSpec::Ensemble(EnsembleSpec {
                name: "MathEnsemble".into(),
                members: vec![
                    agent("AlgebraicSolver", "solver", MEMBER_ALGEBRAIC, vec![], 1, q, ov),
                    agent("GeometricSolver", "solver", MEMBER_GEOMETRIC, vec![], 1, q, ov),
                    agent(
                        "CombinatorialSolver",
                        "solver",
                        MEMBER_COMBINATORIAL,
                        vec![],
                        1,
                        q,
                        ov,
                    ),
                ],
                strategy: EnsembleStrategy::Consensus,
                consensus_agent: Some(agent("MathJudge", "judge", ENSEMBLE_JUDGE, vec![], 1, q, ov)),
            })],
        },
        TemplateId::SolverCriticReflection => WorkflowSpec {
            name: "math_solver_critic".into(),
            entry: "SolverCriticReflection".into(),
            question_binding: QUESTION_TOKEN.into(),
            nodes: vec![NodeSpec::Reflection(ReflectionSpec {
                name: "SolverCriticReflection".into(),
                solver: agent("MathSolver", "solver", REFLECTION_SOLVER, vec![], 1, q, ov),
                critic: agent("MathCritic", "critic", REFLECTION_CRITIC, vec![], 1, q, ov),
                num_iterations: 2,
            })],
        },
        TemplateId::SolverUnittest => WorkflowSpec {
            name: "code_solver_unittest".into(),
            entry: "CodeSolverTestReflection".into(),
            question_binding: QUESTION_TOKEN.into(),
            nodes: vec![NodeSpec::Reflection(ReflectionSpec {
                name: "CodeSolverTestReflection".into(),
                solver: agent(
                    "CodeSolver",
                    "solver",
                    CODE_SOLVER,
                    vec!["execute_code".into()],
                    5,
                    q,
                    ov,
                ),
                critic: agent(
                    "UnitTestAgent",
                    "critic",
                    UNIT_TEST_CRITIC,
                    vec!["execute_code".into()],
                    5,
                    q,
                    ov,
                ),
                num_iterations: 2,
            })],
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::{validate_workflow, NodeSpec, ToolRegistry};

    #[test]
    fn every_template_instantiation_validates() {
        for id in TemplateId::ALL {
            let spec = instantiate_template(id, "What is 2+2?", None);
            let report = validate_workflow(&spec, ToolRegistry::global());
            assert!(report.is_ok(), "{id:?}: {report}");
        }
    }

    #[test]
    fn single_template_has_exactly_one_agent() {
        let spec = instantiate_template(TemplateId::Single, "q", None);
        assert_eq!(spec.nodes.len(), 1);
        assert_eq!(spec.agent_specs().len(), 1);
    }

    #[test]
    fn ensemble_template_has_three_members_and_a_judge() {
        let spec = instantiate_template(TemplateId::EnsembleJudge, "q", None);
        match &spec.nodes[0] {
            NodeSpec::Ensemble(e) => {
                assert_eq!(e.members.len(), 3);
                assert!(e.consensus_agent.is_some());
            }
            other => panic!("expected ensemble, got {other:?}"),
        }
        assert_eq!(spec.agent_specs().len(), 4);
    }

    #[test]
    fn reflection_template_uses_two_iterations() {
        let spec = instantiate_template(TemplateId::SolverCriticReflection, "q", None);
        match &spec.nodes[0] {
            NodeSpec::Reflection(r) => assert_eq!(r.num_iterations, 2),
            other => panic!("expected reflection, got {other:?}"),
        }
        assert_eq!(spec.agent_specs().len(), 2);
    }

    #[test]
    fn question_is_bound_into_prompts() {
        let spec = instantiate_template(TemplateId::Single, "How many primes below 10?", None);
        let solver = &spec.agent_specs()[0];
        assert!(solver.system_prompt.contains("How many primes below 10?"));
        assert!(!solver.system_prompt.contains(QUESTION_TOKEN));
    }

    #[test]
    fn prompt_overrides_replace_named_agents_only() {
        let mut overrides = std::collections::BTreeMap::new();
        overrides.insert("MathCritic".to_string(), "Check only arithmetic. {{question}}".to_string());
        let spec = instantiate_template(TemplateId::SolverCriticReflection, "1+1?", Some(&overrides));
        match &spec.nodes[0] {
            NodeSpec::Reflection(r) => {
                assert_eq!(r.critic.system_prompt, "Check only arithmetic. 1+1?");
                assert!(r.solver.system_prompt.contains("expert mathematician"));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn unknown_template_string_is_an_error() {
        let err = "solver_duet".parse::<TemplateId>().unwrap_err();
        assert!(err.to_string().contains("solver_duet"));
    }

    #[test]
    fn code_template_binds_the_execute_code_tool() {
        let spec = instantiate_template(TemplateId::SolverUnittest, "q", None);
        let agents = spec.agent_specs();
        assert!(agents.iter().all(|a| a.tools == ["execute_code"]));
        assert!(agents.iter().all(|a| a.max_turns == 5));
    }
}
