//! OpenAI-compatible chat-completions backend.
//!
//! POSTs `{model, messages, temperature, max_tokens, logprobs}` to the
//! configured URL and reads `choices[0].message.content` plus, when present,
//! `choices[0].logprobs.content[].logprob`. Transport failures are retried
//! with exponential backoff; remote error statuses are not.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    FinishReason, GatewayError, InFlightLimit, PolicyGateway, PolicyRequest, PolicyResponse,
    Speaker, TokenLogProb,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Full chat-completions endpoint URL.
    pub url: String,
    /// Name of the environment variable holding the bearer token; unset means
    /// unauthenticated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_env: Option<String>,
    /// Per-call deadline in seconds.
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
    /// Transport-failure retries (4xx/5xx are never retried).
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Base backoff; attempt n sleeps `backoff_ms << n`.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_s() -> f64 {
    120.0
}
fn default_retries() -> u32 {
    2
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_max_in_flight() -> usize {
    8
}

impl HttpConfig {
    pub fn new(url: impl Into<String>) -> Self {
        HttpConfig {
            url: url.into(),
            token_env: None,
            timeout_s: default_timeout_s(),
            max_retries: default_retries(),
            backoff_ms: default_backoff_ms(),
            max_in_flight: default_max_in_flight(),
        }
    }
}

pub struct HttpGateway {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    bearer: Option<String>,
    limiter: InFlightLimit,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    logprobs: bool,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireChoiceMessage,
    #[serde(default)]
    logprobs: Option<WireLogprobs>,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireChoiceMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireLogprobs {
    #[serde(default)]
    content: Vec<WireTokenLogprob>,
}

#[derive(Deserialize)]
struct WireTokenLogprob {
    token: String,
    logprob: f64,
}

impl HttpGateway {
    pub fn new(config: HttpConfig) -> Result<Self, GatewayError> {
        let bearer = match &config.token_env {
            Some(var) => match std::env::var(var) {
                Ok(tok) => Some(tok),
                Err(_) => {
                    return Err(GatewayError::InvalidRequest {
                        message: format!("auth token environment variable '{var}' is not set"),
                    })
                }
            },
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(config.timeout_s))
            .build()
            .map_err(|e| GatewayError::Transport { message: e.to_string() })?;
        let limiter = InFlightLimit::new(config.max_in_flight);
        Ok(HttpGateway { config, client, bearer, limiter })
    }

    pub fn high_water(&self) -> usize {
        self.limiter.high_water()
    }

    fn send_once(&self, body: &WireRequest<'_>) -> Result<PolicyResponse, GatewayError> {
        let mut req = self.client.post(&self.config.url).json(body);
        if let Some(token) = &self.bearer {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| GatewayError::Transport { message: e.to_string() })?;
        let status = resp.status().as_u16();
        let text = resp
            .text()
            .map_err(|e| GatewayError::Transport { message: e.to_string() })?;
        if !(200..300).contains(&status) {
            let mut excerpt: String = text.chars().take(200).collect();
            if text.chars().count() > 200 {
                excerpt.push('…');
            }
            return Err(GatewayError::RemoteStatus { status, body_excerpt: excerpt });
        }
        let wire: WireResponse = serde_json::from_str(&text).map_err(|e| {
            GatewayError::ResponseShape { message: format!("invalid JSON: {e}") }
        })?;
        let choice = wire.choices.into_iter().next().ok_or(GatewayError::ResponseShape {
            message: "response has no choices".into(),
        })?;
        let content = choice.message.content.ok_or(GatewayError::ResponseShape {
            message: "choices[0].message.content is missing".into(),
        })?;
        let token_logprobs = choice.logprobs.map(|lp| {
            lp.content
                .into_iter()
                .map(|t| TokenLogProb { token: t.token, logprob: t.logprob })
                .collect::<Vec<_>>()
        });
        let finish = match choice.finish_reason.as_deref() {
            Some("length") => FinishReason::Length,
            Some("stop") | None => FinishReason::Stop,
            Some(_) => FinishReason::Error,
        };
        Ok(PolicyResponse { text: content, token_logprobs, finish })
    }
}

impl PolicyGateway for HttpGateway {
    fn complete(&self, request: &PolicyRequest) -> Result<PolicyResponse, GatewayError> {
        request.validate()?;
        let _guard = self.limiter.acquire();
        let messages: Vec<WireMessage<'_>> = request
            .messages
            .iter()
            .map(|m| WireMessage {
                role: match m.speaker {
                    Speaker::System => "system",
                    Speaker::User => "user",
                    Speaker::Assistant => "assistant",
                    Speaker::Tool => "tool",
                },
                content: &m.content,
            })
            .collect();
        let body = WireRequest {
            model: &request.policy_id,
            messages,
            temperature: request.sampling.temperature,
            max_tokens: request.sampling.max_tokens,
            logprobs: request.sampling.want_logprobs,
        };

        let mut attempt = 0u32;
        loop {
            match self.send_once(&body) {
                Err(GatewayError::Transport { message }) if attempt < self.config.max_retries => {
                    let backoff = self.config.backoff_ms.saturating_mul(1u64 << attempt.min(16));
                    std::thread::sleep(Duration::from_millis(backoff));
                    attempt += 1;
                    let _ = message;
                }
                other => {
                    let mut resp = other?;
                    if !request.sampling.want_logprobs {
                        resp.token_logprobs = None;
                    }
                    return Ok(resp);
                }
            }
        }
    }
}
