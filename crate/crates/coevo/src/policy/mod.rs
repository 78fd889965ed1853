//! Uniform contract for obtaining policy completions.
//!
//! A [`PolicyGateway`] turns a [`PolicyRequest`] into a [`PolicyResponse`].
//! Two backends ship: [`ScriptedGateway`] replays fixture responses
//! deterministically for tests and desk-scale runs, and [`HttpGateway`]
//! speaks an OpenAI-compatible chat-completions protocol for real inference.
//! [`PolicyBinding`] routes the Designer and Executor roles onto policy ids
//! under shared or separate parameterization.

mod http;
mod scripted;

pub use http::{HttpConfig, HttpGateway};
pub use scripted::{message_digest, FixtureFile, ScriptedConfig, ScriptedGateway, ScriptedResponse};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};

/// The two trainable roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Designer,
    Executor,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Designer => "designer",
            Role::Executor => "executor",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    System,
    User,
    Assistant,
    Tool,
}

impl Speaker {
    pub fn as_str(&self) -> &'static str {
        match self {
            Speaker::System => "system",
            Speaker::User => "user",
            Speaker::Assistant => "assistant",
            Speaker::Tool => "tool",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub speaker: Speaker,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { speaker: Speaker::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Message { speaker: Speaker::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Message { speaker: Speaker::Assistant, content: content.into() }
    }
    pub fn tool(content: impl Into<String>) -> Self {
        Message { speaker: Speaker::Tool, content: content.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub want_logprobs: bool,
}

impl Default for SamplingParams {
    fn default() -> Self {
        SamplingParams { temperature: 1.0, max_tokens: 4096, want_logprobs: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRequest {
    pub policy_id: String,
    pub role: Role,
    pub messages: Vec<Message>,
    pub sampling: SamplingParams,
}

impl PolicyRequest {
    /// Check the type invariants a backend relies on.
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.messages.is_empty() {
            return Err(GatewayError::InvalidRequest {
                message: "messages must be non-empty".into(),
            });
        }
        match self.messages[0].speaker {
            Speaker::System | Speaker::User => {}
            other => {
                return Err(GatewayError::InvalidRequest {
                    message: format!("first message must be system or user, got {}", other.as_str()),
                })
            }
        }
        if !(self.sampling.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest {
                message: "temperature must be ≥ 0".into(),
            });
        }
        if self.sampling.max_tokens == 0 {
            return Err(GatewayError::InvalidRequest {
                message: "max_tokens must be ≥ 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProb {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResponse {
    pub text: String,
    pub token_logprobs: Option<Vec<TokenLogProb>>,
    pub finish: FinishReason,
}

impl PolicyResponse {
    /// Sum of token log-probabilities, when the backend reported them.
    pub fn logprob_sum(&self) -> Option<f64> {
        self.token_logprobs
            .as_ref()
            .map(|ts| ts.iter().map(|t| t.logprob).sum())
    }
}

/// Whether Designer and Executor share one parameter set or use two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingMode {
    Shared,
    Separate,
}

/// Role → policy-id routing table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyBinding {
    pub mode: BindingMode,
    pub map: BTreeMap<Role, String>,
}

impl PolicyBinding {
    /// Both roles served by one policy.
    pub fn shared(policy_id: impl Into<String>) -> Self {
        let id = policy_id.into();
        let mut map = BTreeMap::new();
        map.insert(Role::Designer, id.clone());
        map.insert(Role::Executor, id);
        PolicyBinding { mode: BindingMode::Shared, map }
    }

    /// Distinct policies per role; the ids must differ.
    pub fn separate(
        designer: impl Into<String>,
        executor: impl Into<String>,
    ) -> Result<Self, BindingError> {
        let d = designer.into();
        let e = executor.into();
        if d == e {
            return Err(BindingError::SeparateIdsEqual { id: d });
        }
        let mut map = BTreeMap::new();
        map.insert(Role::Designer, d);
        map.insert(Role::Executor, e);
        Ok(PolicyBinding { mode: BindingMode::Separate, map })
    }

    /// Re-check the mode/map invariants (for bindings built from config).
    pub fn validate(&self) -> Result<(), BindingError> {
        let d = self.map.get(&Role::Designer);
        let e = self.map.get(&Role::Executor);
        match (self.mode, d, e) {
            (BindingMode::Shared, Some(d), Some(e)) if d != e => {
                Err(BindingError::SharedIdsDiffer { designer: d.clone(), executor: e.clone() })
            }
            (BindingMode::Separate, Some(d), Some(e)) if d == e => {
                Err(BindingError::SeparateIdsEqual { id: d.clone() })
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum BindingError {
    #[error("separate binding requires distinct policy ids, both are '{id}'")]
    SeparateIdsEqual { id: String },
    #[error("shared binding requires one policy id, got '{designer}' and '{executor}'")]
    SharedIdsDiffer { designer: String, executor: String },
}

/// Look up the policy id bound to a role. Deterministic.
pub fn route_role(role: Role, binding: &PolicyBinding) -> Result<&str, RouteError> {
    binding
        .map
        .get(&role)
        .map(String::as_str)
        .ok_or(RouteError::RoleUnbound { role })
}

#[derive(Debug, Clone, Copy, thiserror::Error, PartialEq, Eq)]
pub enum RouteError {
    #[error("role {role} is missing from the policy binding")]
    RoleUnbound { role: Role },
}

/// Failures a gateway can surface; each kind is distinguishable.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum GatewayError {
    #[error("scripted fixture miss for digest {digest} (role {role}, policy '{policy_id}')")]
    FixtureMiss { policy_id: String, role: Role, digest: String },
    #[error("transport failure: {message}")]
    Transport { message: String },
    #[error("remote returned status {status}: {body_excerpt}")]
    RemoteStatus { status: u16, body_excerpt: String },
    #[error("response shape violation: {message}")]
    ResponseShape { message: String },
    #[error("invalid request: {message}")]
    InvalidRequest { message: String },
}

/// Backend-neutral completion contract. Implementations must be safe to call
/// concurrently from many workers and enforce their own in-flight limit.
pub trait PolicyGateway: Send + Sync {
    fn complete(&self, request: &PolicyRequest) -> Result<PolicyResponse, GatewayError>;
}

/// Counting semaphore bounding in-flight calls, with a high-water mark so
/// tests can observe the bound.
pub struct InFlightLimit {
    permits: usize,
    current: Mutex<usize>,
    available: Condvar,
    high_water: AtomicUsize,
}

impl std::fmt::Debug for InFlightLimit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InFlightLimit").field("permits", &self.permits).finish()
    }
}

impl InFlightLimit {
    pub fn new(permits: usize) -> Self {
        InFlightLimit {
            permits: permits.max(1),
            current: Mutex::new(0),
            available: Condvar::new(),
            high_water: AtomicUsize::new(0),
        }
    }

    /// Block until a slot is free; the returned guard releases it on drop.
    pub fn acquire(&self) -> InFlightGuard<'_> {
        let mut current = self.current.lock().expect("limiter poisoned");
        while *current >= self.permits {
            current = self.available.wait(current).expect("limiter poisoned");
        }
        *current += 1;
        self.high_water.fetch_max(*current, Ordering::SeqCst);
        InFlightGuard { limit: self }
    }

    /// Largest number of calls ever outstanding at once.
    pub fn high_water(&self) -> usize {
        self.high_water.load(Ordering::SeqCst)
    }
}

pub struct InFlightGuard<'a> {
    limit: &'a InFlightLimit,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut current = self.limit.current.lock().expect("limiter poisoned");
        *current -= 1;
        self.limit.available.notify_one();
    }
}
