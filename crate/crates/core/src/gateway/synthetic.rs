//! Seeded simulated agents.
//!
//! Every draw is a hash of `(seed, call kind, agent, task, ...)`, so outputs
//! never depend on call order, threads or process.
//!
//! Each (agent, task) pair has a latent draw `u` in `[0, 1)`. With
//! probability `correlation` it is the task's shared difficulty, otherwise
//! the agent's own draw, so strong and weak agents tend to fail on the same
//! hard tasks. Executing a plan with improvement `gain` succeeds when
//! `u < skill(bin) + gain`. A plan's text carries a noisy reading of that
//! margin, which is all a juror sees.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Agent, Proposal, Trace, Verdict};
use crate::domain::{AgentProfile, BinSchedule, BinSlot, Task, DEFAULT_SCORE_RANGE};
use crate::error::{Error, Result};
use crate::memory::{tokens, ContrastivePair, OwnerSide};
use crate::seed;

/// Mean and standard deviation of a normal law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Law {
    pub mean: f64,
    pub spread: f64,
}

/// How refinement improves a plan.
///
/// `gain = min(max_gain, base + per_example * sum(relevance) + own_win *
/// wins)`, where relevance is the token Jaccard overlap between the task and
/// each example's source task, and `wins` counts examples the agent itself
/// won. No examples, no gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct RefinementLaw {
    pub base: f64,
    pub per_example: f64,
    #[serde(default)]
    pub own_win: f64,
    pub max_gain: f64,
}

impl RefinementLaw {
    pub fn gain(&self, task: &Task, pairs: &[ContrastivePair]) -> f64 {
        if pairs.is_empty() {
            return 0.0;
        }
        let here: BTreeSet<String> = tokens(&task.prompt).collect();
        let relevance: f64 = pairs
            .iter()
            .map(|p| {
                p.source_prompt.as_deref().map_or(0.0, |s| {
                    let there: BTreeSet<String> = tokens(s).collect();
                    jaccard(&here, &there)
                })
            })
            .sum();
        let wins = pairs.iter().filter(|p| p.owner_side == OwnerSide::Winning).count() as f64;
        (self.base + self.per_example * relevance + self.own_win * wins).min(self.max_gain)
    }
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

fn default_judge_noise() -> f64 {
    0.5
}
fn default_judge_scale() -> f64 {
    5.0
}
fn default_judge_tokens() -> u64 {
    8
}
fn default_trace_factor() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticAgentSpec {
    /// Success probability per complexity bin; unbinned tasks use the last.
    pub skill_curve: Vec<f64>,
    pub strategy_length: Law,
    pub entropy: Law,
    /// Added to every score this agent gives as a juror.
    #[serde(default)]
    pub judge_bias: i32,
    /// Standard deviation of this juror's score noise, in score points.
    #[serde(default = "default_judge_noise")]
    pub judge_noise: f64,
    /// Score points per unit of perceived plan margin.
    #[serde(default = "default_judge_scale")]
    pub judge_scale: f64,
    /// Standard deviation of the margin reading written into this agent's
    /// plans. Shared by all jurors reading the plan.
    #[serde(default)]
    pub plan_noise: f64,
    #[serde(default)]
    pub refinement: RefinementLaw,
    /// Multiplier on the world's per-bin trace length.
    #[serde(default = "default_trace_factor")]
    pub trace_factor: f64,
    #[serde(default = "default_judge_tokens")]
    pub judge_tokens: u64,
    pub seed: u64,
}

impl SyntheticAgentSpec {
    pub fn validate(&self, bins: usize) -> Result<()> {
        if self.skill_curve.len() != bins {
            return Err(Error::Invalid(format!(
                "skill curve has {} entries for {bins} bins",
                self.skill_curve.len()
            )));
        }
        if self.skill_curve.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Invalid("skill probabilities must lie in [0, 1]".into()));
        }
        let laws_ok = self.strategy_length.mean >= 1.0
            && self.strategy_length.spread >= 0.0
            && (0.0..=1.0).contains(&self.entropy.mean)
            && self.entropy.spread >= 0.0
            && self.judge_noise >= 0.0
            && self.plan_noise >= 0.0
            && self.trace_factor > 0.0;
        if !laws_ok {
            return Err(Error::Invalid("synthetic agent laws out of range".into()));
        }
        Ok(())
    }
}

/// Environment shared by every synthetic agent in a pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub seed: u64,
    /// Probability that an agent's latent draw is the task's shared one.
    pub correlation: f64,
    #[serde(default)]
    pub bins: BinSchedule,
    /// Mean execution trace tokens per bin, before the agent's factor.
    pub trace_tokens: Vec<f64>,
    /// Relative standard deviation of trace length, shared across agents.
    #[serde(default)]
    pub trace_spread: f64,
}

impl World {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::Invalid("correlation must lie in [0, 1]".into()));
        }
        if self.trace_tokens.len() != self.bins.len() || self.trace_tokens.iter().any(|&t| t < 1.0) {
            return Err(Error::Invalid("need one trace length >= 1 per bin".into()));
        }
        Ok(())
    }

    fn bin_index(&self, task: &Task) -> usize {
        match task.tau_minutes.map(|t| crate::domain::assign_bin(t, &self.bins)) {
            Some(Ok(BinSlot::Bin(i))) => i,
            _ => self.bins.len() - 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticAgent {
    profile: AgentProfile,
    spec: SyntheticAgentSpec,
    world: World,
    score_range: (i32, i32),
}

/// What a juror can read off a synthetic plan.
#[derive(Debug, Clone, PartialEq)]
struct Marker {
    agent: String,
    task: String,
    quality: f64,
    gain: f64,
}

fn write_marker(m: &Marker) -> String {
    format!(
        "[plan agent={} task={} quality={:.4} gain={:.4}]",
        m.agent, m.task, m.quality, m.gain
    )
}

fn read_marker(text: &str) -> Option<Marker> {
    let start = text.find("[plan ")?;
    let end = start + text[start..].find(']')?;
    let mut m = Marker {
        agent: String::new(),
        task: String::new(),
        quality: 0.0,
        gain: 0.0,
    };
    for kv in text[start + 6..end].split_whitespace() {
        let (k, v) = kv.split_once('=')?;
        match k {
            "agent" => m.agent = v.to_string(),
            "task" => m.task = v.to_string(),
            "quality" => m.quality = v.parse().ok()?,
            "gain" => m.gain = v.parse().ok()?,
            _ => {}
        }
    }
    Some(m)
}

const STEPS: [&str; 4] = [
    "1. Search for the exact task and collect candidate sources.",
    "2. Inspect the most relevant source and extract the needed facts.",
    "3. Cross-check the facts against a second source.",
    "4. Compose the final answer.",
];

impl SyntheticAgent {
    pub fn new(profile: AgentProfile, spec: SyntheticAgentSpec, world: World) -> Result<Self> {
        profile.validate()?;
        world.validate()?;
        spec.validate(world.bins.len())?;
        Ok(SyntheticAgent {
            profile,
            spec,
            world,
            score_range: DEFAULT_SCORE_RANGE,
        })
    }

    pub fn with_score_range(mut self, range: (i32, i32)) -> Self {
        self.score_range = range;
        self
    }

    pub fn spec(&self) -> &SyntheticAgentSpec {
        &self.spec
    }

    /// Success probability on this task's bin.
    pub fn skill(&self, task: &Task) -> f64 {
        self.spec.skill_curve[self.world.bin_index(task)]
    }

    fn latent(&self, task: &Task) -> f64 {
        let id = self.profile.id.as_str();
        let coin = seed::unit(self.world.seed, &["coin", id, &task.id]);
        if coin < self.world.correlation {
            seed::unit(self.world.seed, &["difficulty", &task.id])
        } else {
            seed::unit(self.spec.seed, &["own", id, &task.id])
        }
    }

    /// Success margin of a plan with the given gain; positive means success.
    pub fn margin(&self, task: &Task, gain: f64) -> f64 {
        self.skill(task) + gain - self.latent(task)
    }

    fn plan(&self, task: &Task, gain: f64, kind: &str) -> Proposal {
        let id = self.profile.id.as_str();
        let s = self.spec.seed;
        let reading = self.margin(task, gain)
            + self.spec.plan_noise * seed::normal(s, &["plan", kind, id, &task.id]);
        let marker = Marker {
            agent: id.to_string(),
            task: task.id.clone(),
            quality: reading,
            gain,
        };
        let len = self.spec.strategy_length;
        let tokens = (len.mean + len.spread * seed::normal(s, &["length", kind, id, &task.id]))
            .round()
            .max(1.0) as u64;
        let ent = self.spec.entropy;
        let entropy = (ent.mean + ent.spread * seed::normal(s, &["entropy", kind, id, &task.id]))
            .clamp(0.0, 1.0);
        let mut text = write_marker(&marker);
        for step in STEPS {
            text.push('\n');
            text.push_str(step);
        }
        text.push_str("\n<end_plan>");
        Proposal {
            strategy_text: text,
            token_count: tokens,
            entropy,
            overhead_tokens: tokens,
            token_count_estimated: false,
        }
    }
}

impl Agent for SyntheticAgent {
    fn profile(&self) -> &AgentProfile {
        &self.profile
    }

    fn propose(&self, task: &Task) -> Result<Proposal> {
        Ok(self.plan(task, 0.0, "initial"))
    }

    fn refine(&self, task: &Task, _initial: &Proposal, pairs: &[ContrastivePair]) -> Result<Proposal> {
        Ok(self.plan(task, self.spec.refinement.gain(task, pairs), "refined"))
    }

    fn judge(&self, task: &Task, strategy: &str) -> Result<Verdict> {
        let (lo, hi) = self.score_range;
        let quality = read_marker(strategy).map_or(0.0, |m| m.quality);
        let noise = seed::normal(
            self.spec.seed,
            &["judge", &self.profile.id, &task.id, &seed::fnv1a(strategy.as_bytes()).to_string()],
        );
        let raw = (lo + hi) as f64 / 2.0
            + self.spec.judge_scale * quality
            + self.spec.judge_bias as f64
            + self.spec.judge_noise * noise;
        Ok(Verdict {
            score: (raw.round() as i32).clamp(lo, hi),
            tokens: self.spec.judge_tokens,
        })
    }

    fn execute(&self, task: &Task, strategy: &str) -> Result<Trace> {
        // only this agent's own refinements carry over into execution
        let gain = read_marker(strategy)
            .filter(|m| m.agent == self.profile.id && m.task == task.id)
            .map_or(0.0, |m| m.gain);
        let success = self.margin(task, gain) > 0.0;
        let bin = self.world.bin_index(task);
        let jitter = 1.0 + self.world.trace_spread * seed::normal(self.world.seed, &["trace", &task.id]);
        let tokens = (self.world.trace_tokens[bin] * self.spec.trace_factor * jitter.max(0.1))
            .round()
            .max(1.0) as u64;
        Ok(Trace {
            answer: if success {
                format!("solved {}", task.id)
            } else {
                format!("failed {}", task.id)
            },
            correct: Some(success),
            trace_tokens: tokens,
        })
    }
}
