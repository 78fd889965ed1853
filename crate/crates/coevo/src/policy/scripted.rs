//! Deterministic fixture-backed policy backend.
//!
//! A response is a pure function of `(policy_id, role, digest(messages))`:
//! two identical requests always yield byte-identical responses. Unmatched
//! digests fall back first to a per-role response, then to a global one, and
//! are a [`GatewayError::FixtureMiss`] when neither is configured.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    FinishReason, GatewayError, InFlightLimit, Message, PolicyGateway, PolicyRequest,
    PolicyResponse, Role, TokenLogProb,
};

/// Stable content hash over `(role, speaker:content lines)`. Order-sensitive;
/// whitespace inside contents is significant.
pub fn message_digest(role: Role, messages: &[Message]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(role.as_str().as_bytes());
    hasher.update(b"\n");
    for m in messages {
        hasher.update(m.speaker.as_str().as_bytes());
        hasher.update(b":");
        hasher.update(m.content.as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// One canned completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogProb>>,
}

impl ScriptedResponse {
    pub fn text(text: impl Into<String>) -> Self {
        ScriptedResponse { text: text.into(), token_logprobs: None }
    }

    fn to_response(&self, want_logprobs: bool) -> PolicyResponse {
        PolicyResponse {
            text: self.text.clone(),
            token_logprobs: if want_logprobs { self.token_logprobs.clone() } else { None },
            finish: FinishReason::Stop,
        }
    }
}

/// Deterministic scripted backend.
pub struct ScriptedGateway {
    // (policy_id, role, digest) → response; policy-agnostic entries keyed separately.
    exact: HashMap<(String, Role, String), ScriptedResponse>,
    any_policy: HashMap<(Role, String), ScriptedResponse>,
    role_fallbacks: HashMap<Role, ScriptedResponse>,
    fallback: Option<ScriptedResponse>,
    delay: Duration,
    limiter: InFlightLimit,
}

impl Default for ScriptedGateway {
    fn default() -> Self {
        Self::new()
    }
}

impl ScriptedGateway {
    pub fn new() -> Self {
        ScriptedGateway {
            exact: HashMap::new(),
            any_policy: HashMap::new(),
            role_fallbacks: HashMap::new(),
            fallback: None,
            delay: Duration::ZERO,
            limiter: InFlightLimit::new(usize::MAX),
        }
    }

    /// Register a response for the exact `(policy_id, role, messages)` tuple.
    pub fn with_fixture(
        mut self,
        policy_id: impl Into<String>,
        role: Role,
        messages: &[Message],
        response: ScriptedResponse,
    ) -> Self {
        let digest = message_digest(role, messages);
        self.exact.insert((policy_id.into(), role, digest), response);
        self
    }

    /// Register a response for `(role, messages)` under any policy id.
    pub fn with_fixture_any_policy(
        mut self,
        role: Role,
        messages: &[Message],
        response: ScriptedResponse,
    ) -> Self {
        let digest = message_digest(role, messages);
        self.any_policy.insert((role, digest), response);
        self
    }

    /// Register a response by precomputed digest.
    pub fn with_fixture_digest(
        mut self,
        policy_id: impl Into<String>,
        role: Role,
        digest: impl Into<String>,
        response: ScriptedResponse,
    ) -> Self {
        self.exact.insert((policy_id.into(), role, digest.into()), response);
        self
    }

    /// Response used when no fixture matches for this role.
    pub fn with_role_fallback(mut self, role: Role, response: ScriptedResponse) -> Self {
        self.role_fallbacks.insert(role, response);
        self
    }

    /// Response used when nothing else matches.
    pub fn with_fallback(mut self, response: ScriptedResponse) -> Self {
        self.fallback = Some(response);
        self
    }

    /// Artificial per-call latency, for exercising timing-sensitive paths.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }

    pub fn with_max_in_flight(mut self, max_in_flight: usize) -> Self {
        self.limiter = InFlightLimit::new(max_in_flight);
        self
    }

    /// Largest number of concurrently outstanding calls seen so far.
    pub fn high_water(&self) -> usize {
        self.limiter.high_water()
    }

    fn lookup(&self, request: &PolicyRequest, digest: &str) -> Option<&ScriptedResponse> {
        self.exact
            .get(&(request.policy_id.clone(), request.role, digest.to_string()))
            .or_else(|| self.any_policy.get(&(request.role, digest.to_string())))
            .or_else(|| self.role_fallbacks.get(&request.role))
            .or(self.fallback.as_ref())
    }

    /// Build a gateway from a fixture file.
    pub fn from_file(path: &Path) -> Result<Self, FixtureFileError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FixtureFileError::Io { path: path.display().to_string(), source: e })?;
        let file: FixtureFile = toml::from_str(&text)
            .map_err(|e| FixtureFileError::Parse { path: path.display().to_string(), message: e.to_string() })?;
        Ok(Self::from_config(file))
    }

    pub fn from_config(file: FixtureFile) -> Self {
        let mut gw = ScriptedGateway::new();
        for fx in file.fixtures {
            let response = ScriptedResponse { text: fx.text, token_logprobs: fx.token_logprobs };
            let digest = match (fx.digest, fx.messages) {
                (Some(d), _) => d,
                (None, Some(msgs)) => message_digest(fx.role, &msgs),
                (None, None) => continue,
            };
            match fx.policy {
                Some(policy) => {
                    gw.exact.insert((policy, fx.role, digest), response);
                }
                None => {
                    gw.any_policy.insert((fx.role, digest), response);
                }
            }
        }
        for fb in file.fallbacks {
            let response = ScriptedResponse { text: fb.text, token_logprobs: fb.token_logprobs };
            match fb.role {
                Some(role) => {
                    gw.role_fallbacks.insert(role, response);
                }
                None => gw.fallback = Some(response),
            }
        }
        if let Some(ms) = file.delay_ms {
            gw.delay = Duration::from_millis(ms);
        }
        gw
    }
}

impl PolicyGateway for ScriptedGateway {
    fn complete(&self, request: &PolicyRequest) -> Result<PolicyResponse, GatewayError> {
        request.validate()?;
        let _guard = self.limiter.acquire();
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let digest = message_digest(request.role, &request.messages);
        match self.lookup(request, &digest) {
            Some(response) => Ok(response.to_response(request.sampling.want_logprobs)),
            None => Err(GatewayError::FixtureMiss {
                policy_id: request.policy_id.clone(),
                role: request.role,
                digest,
            }),
        }
    }
}

/// On-disk fixture table, TOML-encoded.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FixtureFile {
    #[serde(default)]
    pub fixtures: Vec<FixtureEntry>,
    #[serde(default)]
    pub fallbacks: Vec<FallbackEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay_ms: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureEntry {
    /// Restrict to one policy id; omit to match any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<String>,
    pub role: Role,
    /// Either a precomputed digest or the full message list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub messages: Option<Vec<Message>>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogProb>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FallbackEntry {
    /// Restrict to one role; omit for the global fallback.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<TokenLogProb>>,
}

/// Scripted-backend settings carried by the run configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ScriptedConfig {
    /// Path to a [`FixtureFile`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designer_fallback: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub executor_fallback: Option<String>,
    #[serde(default)]
    pub delay_ms: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureFileError {
    #[error("cannot read fixture file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse fixture file {path}: {message}")]
    Parse { path: String, message: String },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::SamplingParams;

    fn request(policy: &str, role: Role, content: &str) -> PolicyRequest {
        PolicyRequest {
            policy_id: policy.into(),
            role,
            messages: vec![Message::user(content)],
            sampling: SamplingParams::default(),
        }
    }

    #[test]
    fn fixture_lookup_returns_the_canned_text() {
        let messages = vec![Message::user("solve")];
        let gw = ScriptedGateway::new().with_fixture(
            "P",
            Role::Executor,
            &messages,
            ScriptedResponse::text("…\\boxed{116}"),
        );
        let resp = gw.complete(&request("P", Role::Executor, "solve")).unwrap();
        assert_eq!(resp.text, "…\\boxed{116}");
        assert_eq!(resp.finish, FinishReason::Stop);
    }

    #[test]
    fn unmatched_digest_without_fallback_is_a_fixture_miss() {
        let gw = ScriptedGateway::new();
        let err = gw.complete(&request("P", Role::Executor, "anything")).unwrap_err();
        assert!(matches!(err, GatewayError::FixtureMiss { .. }));
    }

    #[test]
    fn role_fallback_catches_unmatched_digests() {
        let gw = ScriptedGateway::new()
            .with_role_fallback(Role::Executor, ScriptedResponse::text("fallback"));
        let resp = gw.complete(&request("P", Role::Executor, "anything")).unwrap();
        assert_eq!(resp.text, "fallback");
        assert!(gw.complete(&request("P", Role::Designer, "anything")).is_err());
    }

    #[test]
    fn identical_requests_yield_byte_identical_responses() {
        let gw = ScriptedGateway::new().with_fallback(ScriptedResponse {
            text: "stable".into(),
            token_logprobs: Some(vec![TokenLogProb { token: "st".into(), logprob: -0.25 }]),
        });
        let mut req = request("P", Role::Executor, "same");
        req.sampling.want_logprobs = true;
        let a = gw.complete(&req).unwrap();
        let b = gw.complete(&req).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.logprob_sum(), Some(-0.25));
    }

    #[test]
    fn logprobs_are_withheld_unless_requested() {
        let gw = ScriptedGateway::new().with_fallback(ScriptedResponse {
            text: "t".into(),
            token_logprobs: Some(vec![TokenLogProb { token: "t".into(), logprob: -0.1 }]),
        });
        let resp = gw.complete(&request("P", Role::Executor, "x")).unwrap();
        assert!(resp.token_logprobs.is_none());
    }

    #[test]
    fn digest_is_order_and_speaker_sensitive() {
        let a = message_digest(Role::Executor, &[Message::user("x"), Message::assistant("y")]);
        let b = message_digest(Role::Executor, &[Message::assistant("y"), Message::user("x")]);
        let c = message_digest(Role::Designer, &[Message::user("x"), Message::assistant("y")]);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn fixture_file_round_trip_drives_lookup() {
        let file = FixtureFile {
            fixtures: vec![FixtureEntry {
                policy: None,
                role: Role::Designer,
                digest: None,
                messages: Some(vec![Message::user("design")]),
                text: "<design>…</design>".into(),
                token_logprobs: None,
            }],
            fallbacks: vec![FallbackEntry {
                role: Some(Role::Executor),
                text: "\\boxed{1}".into(),
                token_logprobs: None,
            }],
            delay_ms: None,
        };
        let encoded = toml::to_string(&file).unwrap();
        let decoded: FixtureFile = toml::from_str(&encoded).unwrap();
        let gw = ScriptedGateway::from_config(decoded);
        assert_eq!(
            gw.complete(&request("P", Role::Designer, "design")).unwrap().text,
            "<design>…</design>"
        );
        assert_eq!(gw.complete(&request("P", Role::Executor, "zzz")).unwrap().text, "\\boxed{1}");
    }

    #[test]
    fn in_flight_limit_is_enforced_under_load() {
        let gw = std::sync::Arc::new(
            ScriptedGateway::new()
                .with_fallback(ScriptedResponse::text("ok"))
                .with_delay(Duration::from_millis(3))
                .with_max_in_flight(2),
        );
        std::thread::scope(|scope| {
            for i in 0..12 {
                let gw = std::sync::Arc::clone(&gw);
                scope.spawn(move || {
                    let _ = gw.complete(&request("P", Role::Executor, &format!("m{i}")));
                });
            }
        });
        assert!(gw.high_water() <= 2, "high water {}", gw.high_water());
    }
}
