//! Agents backed by an OpenAI-style chat-completion endpoint.
//!
//! Requests carry `model`, `messages` and, when enabled, `logprobs` with
//! `top_logprobs`. Token counts come from the response `usage`; when it is
//! missing a local estimate is used and the bid is flagged. Per-token
//! entropy is computed over the returned top alternatives, which slightly
//! underestimates the full-vocabulary entropy.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::prompts::{format_examples, render, PromptSet};
use super::{normalize_entropy, Agent, Proposal, Trace, Verdict};
use crate::domain::{AgentProfile, Task, DEFAULT_SCORE_RANGE};
use crate::error::{Error, Result};
use crate::memory::ContrastivePair;

fn default_timeout() -> u64 {
    120
}
fn default_top_logprobs() -> u8 {
    5
}
fn default_vocab() -> u64 {
    151_936
}
fn default_fallback_entropy() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Full URL of the chat-completions route.
    pub url: String,
    pub model: String,
    /// Environment variable holding a bearer token, if the endpoint needs one.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub logprobs: bool,
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: u8,
    #[serde(default = "default_vocab")]
    pub vocab_size: u64,
    /// Entropy used when the endpoint returns no log-probabilities.
    #[serde(default = "default_fallback_entropy")]
    pub fallback_entropy: f64,
    #[serde(default)]
    pub tool_descriptions: String,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top_logprobs: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Usage {
    #[serde(default)]
    pub prompt_tokens: u64,
    #[serde(default)]
    pub completion_tokens: u64,
    #[serde(default)]
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopLogprob {
    pub token: String,
    pub logprob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    pub logprob: f64,
    #[serde(default)]
    pub top_logprobs: Vec<TopLogprob>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Logprobs {
    #[serde(default)]
    pub content: Vec<TokenLogprob>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseMessage {
    #[serde(default)]
    pub content: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    pub message: ResponseMessage,
    #[serde(default)]
    pub logprobs: Option<Logprobs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<Choice>,
    #[serde(default)]
    pub usage: Option<Usage>,
}

pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse>;
}

/// Blocking HTTP transport.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(config: &RemoteConfig) -> Result<Self> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                Error::Transport(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        Ok(HttpTransport {
            client,
            url: config.url.clone(),
            api_key,
        })
    }
}

impl ChatTransport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse> {
        let mut req = self.client.post(&self.url).json(request);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status();
        let body = resp.text().map_err(|e| Error::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(Error::Transport(format!("{} returned {status}: {body}", self.url)));
        }
        serde_json::from_str(&body).map_err(|e| Error::MalformedReply {
            agent: request.model.clone(),
            message: format!("response is not a chat completion: {e}"),
        })
    }
}

pub struct RemoteAgent {
    profile: AgentProfile,
    config: RemoteConfig,
    prompts: PromptSet,
    transport: Box<dyn ChatTransport>,
    score_range: (i32, i32),
}

/// Rough token count for text without provider usage data.
pub fn estimate_tokens(text: &str) -> u64 {
    let words = text.split_whitespace().count() as f64;
    ((words * 4.0 / 3.0).ceil() as u64).max(1)
}

/// Cuts a plan at its `<end_plan>` tag when present.
pub fn strip_plan(text: &str) -> &str {
    match text.find("<end_plan>") {
        Some(i) => text[..i].trim_end(),
        None => text.trim_end(),
    }
}

/// The integer after the last `Score:` in a judge reply.
pub fn parse_score(reply: &str) -> Option<i32> {
    reply.rmatch_indices("Score:").find_map(|(i, _)| {
        let rest = reply[i + "Score:".len()..].trim_start();
        let rest = rest.strip_prefix('[').unwrap_or(rest).trim_start();
        let end = rest
            .char_indices()
            .find(|&(j, c)| !(c.is_ascii_digit() || (j == 0 && c == '-')))
            .map_or(rest.len(), |(j, _)| j);
        rest[..end].parse().ok()
    })
}

/// Final answer from an execution reply: the text after the last `Answer:`,
/// else the whole reply.
pub fn parse_answer(reply: &str) -> String {
    match reply.rfind("Answer:") {
        Some(i) => reply[i + "Answer:".len()..].trim().to_string(),
        None => reply.trim().to_string(),
    }
}

fn normalize_answer(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches('.')
        .to_lowercase()
}

/// Entropy in nats over each token's returned alternatives.
fn token_entropies(lp: &Logprobs) -> Vec<f64> {
    lp.content
        .iter()
        .filter(|t| !t.top_logprobs.is_empty())
        .map(|t| {
            t.top_logprobs
                .iter()
                .map(|a| {
                    let p = a.logprob.exp();
                    if p > 0.0 {
                        -p * a.logprob
                    } else {
                        0.0
                    }
                })
                .sum()
        })
        .collect()
}

struct Reply {
    text: String,
    usage: Option<Usage>,
    logprobs: Option<Logprobs>,
}

impl RemoteAgent {
    pub fn new(profile: AgentProfile, config: RemoteConfig, prompts: PromptSet) -> Result<Self> {
        let transport = HttpTransport::new(&config)?;
        Ok(Self::with_transport(profile, config, prompts, Box::new(transport)))
    }

    pub fn with_transport(
        profile: AgentProfile,
        config: RemoteConfig,
        prompts: PromptSet,
        transport: Box<dyn ChatTransport>,
    ) -> Self {
        RemoteAgent {
            profile,
            config,
            prompts,
            transport,
            score_range: DEFAULT_SCORE_RANGE,
        }
    }

    pub fn with_score_range(mut self, range: (i32, i32)) -> Self {
        self.score_range = range;
        self
    }

    fn call(&self, prompt: String, want_logprobs: bool, stage: &'static str) -> Result<Reply> {
        let logprobs = want_logprobs && self.config.logprobs;
        let request = ChatRequest {
            model: self.config.model.clone(),
            messages: vec![ChatMessage {
                role: "user".into(),
                content: prompt,
            }],
            temperature: 0.0,
            logprobs: logprobs.then_some(true),
            top_logprobs: logprobs.then_some(self.config.top_logprobs),
            max_tokens: self.config.max_tokens,
        };
        let resp = self.transport.complete(&request).map_err(|e| match e {
            Error::Transport(m) => Error::Agent {
                agent: self.profile.id.clone(),
                stage,
                message: m,
            },
            other => other,
        })?;
        let choice = resp.choices.into_iter().next().ok_or_else(|| Error::MalformedReply {
            agent: self.profile.id.clone(),
            message: "no choices in response".into(),
        })?;
        let text = choice.message.content.ok_or_else(|| Error::MalformedReply {
            agent: self.profile.id.clone(),
            message: "reply has no content".into(),
        })?;
        Ok(Reply {
            text,
            usage: resp.usage,
            logprobs: choice.logprobs,
        })
    }

    fn proposal(&self, prompt: String) -> Result<Proposal> {
        let prompt_estimate = estimate_tokens(&prompt);
        let reply = self.call(prompt, true, "bidding")?;
        let plan = strip_plan(&reply.text).to_string();
        if plan.trim().is_empty() {
            return Err(Error::MalformedReply {
                agent: self.profile.id.clone(),
                message: "empty plan".into(),
            });
        }
        let (token_count, overhead, estimated) = match &reply.usage {
            Some(u) if u.completion_tokens > 0 => {
                let total = if u.total_tokens > 0 { u.total_tokens } else { u.prompt_tokens + u.completion_tokens };
                (u.completion_tokens, total, false)
            }
            _ => {
                let n = estimate_tokens(&plan);
                (n, n + prompt_estimate, true)
            }
        };
        let entropies = reply.logprobs.as_ref().map(token_entropies).unwrap_or_default();
        let entropy = if entropies.is_empty() {
            log::warn!(
                "{}: no log-probabilities returned, using fallback entropy {}",
                self.profile.id,
                self.config.fallback_entropy
            );
            self.config.fallback_entropy
        } else {
            normalize_entropy(&entropies, self.config.vocab_size)?
        };
        Ok(Proposal {
            strategy_text: plan,
            token_count,
            entropy,
            overhead_tokens: overhead,
            token_count_estimated: estimated,
        })
    }

    fn facts(task: &Task) -> &str {
        task.context.as_deref().unwrap_or("")
    }
}

fn usage_total(u: &Option<Usage>, fallback: u64) -> u64 {
    match u {
        Some(u) if u.total_tokens > 0 => u.total_tokens,
        Some(u) if u.prompt_tokens + u.completion_tokens > 0 => u.prompt_tokens + u.completion_tokens,
        _ => fallback,
    }
}

impl Agent for RemoteAgent {
    fn profile(&self) -> &AgentProfile {
        &self.profile
    }

    fn propose(&self, task: &Task) -> Result<Proposal> {
        let prompt = render(
            self.prompts.strategy(task.domain),
            &[
                ("task", &task.prompt),
                ("tool_descriptions", &self.config.tool_descriptions),
                ("answer_facts", Self::facts(task)),
            ],
        );
        self.proposal(prompt)
    }

    fn refine(&self, task: &Task, initial: &Proposal, pairs: &[ContrastivePair]) -> Result<Proposal> {
        let examples = format_examples(pairs);
        let prompt = render(
            self.prompts.refine(task.domain),
            &[
                ("task", &task.prompt),
                ("tool_descriptions", &self.config.tool_descriptions),
                ("answer_facts", Self::facts(task)),
                ("retrieved_tasks_and_plans", &examples),
                ("previous_losing_plan", &initial.strategy_text),
            ],
        );
        self.proposal(prompt)
    }

    fn judge(&self, task: &Task, strategy: &str) -> Result<Verdict> {
        let prompt = render(&self.prompts.judge, &[("task", &task.prompt), ("plan", strategy)]);
        let mut tokens = 0;
        let mut last = String::new();
        for _ in 0..2 {
            let reply = self.call(prompt.clone(), false, "judging")?;
            tokens += usage_total(&reply.usage, estimate_tokens(&prompt) + estimate_tokens(&reply.text));
            if let Some(score) = parse_score(&reply.text) {
                let (lo, hi) = self.score_range;
                if (lo..=hi).contains(&score) {
                    return Ok(Verdict { score, tokens });
                }
            }
            last = reply.text;
        }
        Err(Error::MalformedReply {
            agent: self.profile.id.clone(),
            message: format!("no valid `Score:` in judge reply after retry: {last:?}"),
        })
    }

    fn execute(&self, task: &Task, strategy: &str) -> Result<Trace> {
        let prompt = render(
            &self.prompts.execute,
            &[
                ("task", &task.prompt),
                ("tool_descriptions", &self.config.tool_descriptions),
                ("plan", strategy),
            ],
        );
        let prompt_estimate = estimate_tokens(&prompt);
        let reply = self.call(prompt, false, "executing")?;
        let answer = parse_answer(&reply.text);
        let correct = task
            .reference_answer
            .as_ref()
            .map(|r| normalize_answer(r) == normalize_answer(&answer));
        Ok(Trace {
            trace_tokens: usage_total(&reply.usage, prompt_estimate + estimate_tokens(&reply.text)),
            answer,
            correct,
        })
    }
}
