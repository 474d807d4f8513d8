//! The agent abstraction used by the auction engine.
//!
//! An agent can propose a strategy for a task, refine a strategy from
//! contrastive examples, score someone else's strategy as a juror, and
//! execute a task conditioned on a strategy. [`synthetic`] provides seeded
//! simulated agents; [`remote`] talks to chat-completion endpoints.

pub mod pool;
pub mod prompts;
pub mod remote;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentProfile, Task};
use crate::error::{Error, Result};
use crate::memory::ContrastivePair;

/// A strategy as returned by `propose` or `refine`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub strategy_text: String,
    pub token_count: u64,
    /// Normalized to `[0, 1]`.
    pub entropy: f64,
    /// Tokens consumed producing the strategy, prompt included.
    pub overhead_tokens: u64,
    pub token_count_estimated: bool,
}

/// One juror's score for one strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub score: i32,
    /// Tokens consumed producing the vote.
    pub tokens: u64,
}

/// Result of executing a task. The engine prices it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub answer: String,
    pub correct: Option<bool>,
    pub trace_tokens: u64,
}

pub trait Agent: Send + Sync {
    fn profile(&self) -> &AgentProfile;

    fn id(&self) -> &str {
        &self.profile().id
    }

    fn propose(&self, task: &Task) -> Result<Proposal>;

    fn refine(&self, task: &Task, initial: &Proposal, pairs: &[ContrastivePair]) -> Result<Proposal>;

    fn judge(&self, task: &Task, strategy: &str) -> Result<Verdict>;

    fn execute(&self, task: &Task, strategy: &str) -> Result<Trace>;
}

/// Mean per-token entropy divided by `ln(vocab_size)`, clamped to `[0, 1]`.
pub fn normalize_entropy(per_token_nats: &[f64], vocab_size: u64) -> Result<f64> {
    if per_token_nats.is_empty() {
        return Err(Error::Invalid("no per-token entropies to normalize".into()));
    }
    if vocab_size < 2 {
        return Err(Error::Invalid(format!("vocabulary size {vocab_size} is below 2")));
    }
    let mean = per_token_nats.iter().sum::<f64>() / per_token_nats.len() as f64;
    Ok((mean / (vocab_size as f64).ln()).clamp(0.0, 1.0))
}

/// Range checks every capability output must pass.
pub(crate) fn check_proposal(agent: &str, p: &Proposal) -> Result<()> {
    if p.token_count == 0 {
        return Err(Error::Agent {
            agent: agent.to_string(),
            stage: "bidding",
            message: "strategy has zero tokens".into(),
        });
    }
    if !(0.0..=1.0).contains(&p.entropy) {
        return Err(Error::Agent {
            agent: agent.to_string(),
            stage: "bidding",
            message: format!("entropy {} outside [0, 1]", p.entropy),
        });
    }
    Ok(())
}

pub(crate) fn check_verdict(agent: &str, v: &Verdict, range: (i32, i32)) -> Result<()> {
    if v.score < range.0 || v.score > range.1 {
        return Err(Error::Agent {
            agent: agent.to_string(),
            stage: "judging",
            message: format!("score {} outside [{}, {}]", v.score, range.0, range.1),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_normalization() {
        let v = 151_936u64;
        let ln_v = (v as f64).ln();
        assert_eq!(normalize_entropy(&[0.0, 0.0], v).unwrap(), 0.0);
        assert!((normalize_entropy(&[ln_v, ln_v], v).unwrap() - 1.0).abs() < 1e-12);
        assert!((normalize_entropy(&[0.0, ln_v], v).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(normalize_entropy(&[10.0 * ln_v], v).unwrap(), 1.0);
        assert!(normalize_entropy(&[], v).is_err());
        assert!(normalize_entropy(&[0.1], 1).is_err());
    }
}
