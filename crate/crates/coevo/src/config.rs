//! Run configuration: one TOML file covering rollout shape, schedule,
//! policy binding and backend, reward and credit constants, sandbox,
//! datasets, store location, and the simulation front-end. An annotated
//! sample ships at `assets/config.sample.toml`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::policy::{BindingMode, HttpConfig, PolicyBinding, SamplingParams, ScriptedConfig};
use crate::runtime::SandboxConfig;
use crate::schedule::{SchedulePolicy, DEFAULT_STAGE_LENGTH};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutSection {
    /// Candidate designs per query.
    pub m: usize,
    /// Executions per design.
    pub n: usize,
}

impl Default for RolloutSection {
    fn default() -> Self {
        RolloutSection { m: 4, n: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleSection {
    /// stagewise | coupled | executor_only | designer_only
    pub kind: String,
    pub k: u64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection { kind: "stagewise".into(), k: DEFAULT_STAGE_LENGTH }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicySection {
    /// shared | separate
    pub mode: String,
    /// Policy id for shared mode (also the model name on the wire).
    pub policy_id: String,
    pub designer_policy: String,
    pub executor_policy: String,
    /// scripted | http
    pub backend: String,
    pub http: Option<HttpConfig>,
}

impl Default for PolicySection {
    fn default() -> Self {
        PolicySection {
            mode: "shared".into(),
            policy_id: "policy-main".into(),
            designer_policy: String::new(),
            executor_policy: String::new(),
            backend: "scripted".into(),
            http: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RewardSection {
    pub lambda: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        RewardSection { lambda: crate::reward::DEFAULT_LAMBDA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CreditSection {
    pub epsilon_norm: f64,
    pub clip_epsilon: f64,
}

impl Default for CreditSection {
    fn default() -> Self {
        CreditSection {
            epsilon_norm: crate::credit::DEFAULT_EPSILON_NORM,
            clip_epsilon: crate::credit::DEFAULT_CLIP_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingSection {
    pub temperature: f64,
    pub designer_temperature: Option<f64>,
    pub executor_temperature: Option<f64>,
    pub max_tokens: u32,
    pub want_logprobs: bool,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection {
            temperature: 1.0,
            designer_temperature: None,
            executor_temperature: None,
            max_tokens: 4096,
            want_logprobs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    /// Task file or directory of task files.
    pub tasks: PathBuf,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { tasks: PathBuf::from("tasks") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StoreSection {
    pub dir: PathBuf,
}

impl Default for StoreSection {
    fn default() -> Self {
        StoreSection { dir: PathBuf::from("runs/default") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSection {
    /// Synthetic environment file; the built-in executor-bottleneck
    /// environment is used when unset.
    pub env: Option<PathBuf>,
    pub steps: usize,
    /// Rollout shape for the simulation; defaults to [rollout] m/n.
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub seeds: Vec<u64>,
    /// Policy names: stagewise | coupled | executor_only | designer_only.
    pub policies: Vec<String>,
    /// Stage lengths swept for each stagewise row.
    pub k_values: Vec<u64>,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            env: None,
            steps: 240,
            m: None,
            n: None,
            seeds: (0..10).collect(),
            policies: vec![
                "stagewise".into(),
                "coupled".into(),
                "executor_only".into(),
                "designer_only".into(),
            ],
            k_values: vec![DEFAULT_STAGE_LENGTH],
        }
    }
}

/// The full run configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub rollout: RolloutSection,
    pub schedule: ScheduleSection,
    pub policy: PolicySection,
    pub reward: RewardSection,
    pub credit: CreditSection,
    pub sampling: SamplingSection,
    pub sandbox: SandboxConfig,
    pub data: DataSection,
    pub store: StoreSection,
    pub scripted: ScriptedConfig,
    pub sim: SimSection,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), message: message.into() }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    /// Check every numeric domain and cross-field requirement.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.rollout.m == 0 || self.rollout.n == 0 {
            return Err(invalid("rollout.m/n", "M and N must be ≥ 1"));
        }
        self.schedule_policy()?;
        self.binding()?;
        match self.policy.backend.as_str() {
            "scripted" => {}
            "http" => {
                let http = self.policy.http.as_ref().ok_or_else(|| {
                    invalid("policy.http", "http backend requires a [policy.http] section")
                })?;
                if http.url.is_empty() {
                    return Err(invalid("policy.http.url", "must be non-empty"));
                }
            }
            other => return Err(invalid("policy.backend", format!("unknown backend '{other}'"))),
        }
        if !(self.reward.lambda >= 0.0) {
            return Err(invalid("reward.lambda", "must be ≥ 0"));
        }
        if !(self.credit.epsilon_norm > 0.0) {
            return Err(invalid("credit.epsilon_norm", "must be > 0"));
        }
        if !(self.credit.clip_epsilon > 0.0 && self.credit.clip_epsilon < 1.0) {
            return Err(invalid("credit.clip_epsilon", "must lie in (0, 1)"));
        }
        if !(self.sampling.temperature >= 0.0) {
            return Err(invalid("sampling.temperature", "must be ≥ 0"));
        }
        if self.sampling.max_tokens == 0 {
            return Err(invalid("sampling.max_tokens", "must be ≥ 1"));
        }
        if !(self.sandbox.timeout_s > 0.0) {
            return Err(invalid("sandbox.timeout_s", "must be > 0"));
        }
        if self.sandbox.max_processes == 0 {
            return Err(invalid("sandbox.max_processes", "must be ≥ 1"));
        }
        if self.sim.steps == 0 {
            return Err(invalid("sim.steps", "must be ≥ 1"));
        }
        if self.sim.seeds.is_empty() {
            return Err(invalid("sim.seeds", "must name at least one seed"));
        }
        self.sim_policies()?;
        Ok(())
    }

    pub fn schedule_policy(&self) -> Result<SchedulePolicy, ConfigError> {
        match self.schedule.kind.as_str() {
            "stagewise" => SchedulePolicy::stagewise(self.schedule.k)
                .map_err(|e| invalid("schedule.k", e.to_string())),
            "coupled" => Ok(SchedulePolicy::Coupled),
            "executor_only" => Ok(SchedulePolicy::ExecutorOnly),
            "designer_only" => Ok(SchedulePolicy::DesignerOnly),
            other => Err(invalid("schedule.kind", format!("unknown schedule '{other}'"))),
        }
    }

    pub fn binding(&self) -> Result<PolicyBinding, ConfigError> {
        match self.policy.mode.as_str() {
            "shared" => {
                if self.policy.policy_id.is_empty() {
                    return Err(invalid("policy.policy_id", "shared mode requires a policy id"));
                }
                Ok(PolicyBinding::shared(&self.policy.policy_id))
            }
            "separate" => {
                if self.policy.designer_policy.is_empty() || self.policy.executor_policy.is_empty()
                {
                    return Err(invalid(
                        "policy.designer_policy/executor_policy",
                        "separate mode requires both role policies",
                    ));
                }
                PolicyBinding::separate(&self.policy.designer_policy, &self.policy.executor_policy)
                    .map_err(|e| invalid("policy", e.to_string()))
            }
            other => Err(invalid("policy.mode", format!("unknown mode '{other}'"))),
        }
    }

    pub fn binding_mode(&self) -> BindingMode {
        match self.policy.mode.as_str() {
            "separate" => BindingMode::Separate,
            _ => BindingMode::Shared,
        }
    }

    pub fn designer_sampling(&self) -> SamplingParams {
        SamplingParams {
            temperature: self.sampling.designer_temperature.unwrap_or(self.sampling.temperature),
            max_tokens: self.sampling.max_tokens,
            want_logprobs: self.sampling.want_logprobs,
        }
    }

    pub fn executor_sampling(&self) -> SamplingParams {
        SamplingParams {
            temperature: self.sampling.executor_temperature.unwrap_or(self.sampling.temperature),
            max_tokens: self.sampling.max_tokens,
            want_logprobs: self.sampling.want_logprobs,
        }
    }

    /// Expand the simulation policy names (and stagewise K sweep) into
    /// concrete policies.
    pub fn sim_policies(&self) -> Result<Vec<SchedulePolicy>, ConfigError> {
        let mut out = Vec::new();
        for name in &self.sim.policies {
            match name.as_str() {
                "stagewise" => {
                    let ks: &[u64] = if self.sim.k_values.is_empty() {
                        &[DEFAULT_STAGE_LENGTH]
                    } else {
                        &self.sim.k_values
                    };
                    for &k in ks {
                        out.push(
                            SchedulePolicy::stagewise(k)
                                .map_err(|e| invalid("sim.k_values", e.to_string()))?,
                        );
                    }
                }
                "coupled" => out.push(SchedulePolicy::Coupled),
                "executor_only" => out.push(SchedulePolicy::ExecutorOnly),
                "designer_only" => out.push(SchedulePolicy::DesignerOnly),
                other => {
                    return Err(invalid("sim.policies", format!("unknown policy '{other}'")))
                }
            }
        }
        Ok(out)
    }
}
