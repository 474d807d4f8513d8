//! Shared domain types.
//!
//! Everything here is a plain value object: constructed once, validated,
//! then shared freely between threads. Maps are `BTreeMap`s so serialized
//! output is byte-stable across runs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type AgentId = String;
pub type TaskId = String;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Bidder,
    Judge,
    Executor,
}

impl Role {
    pub fn all() -> BTreeSet<Role> {
        [Role::Bidder, Role::Judge, Role::Executor].into_iter().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub id: AgentId,
    pub params: u64,
    /// Effective price in currency per million total tokens.
    pub price_per_mtok: f64,
    #[serde(default = "Role::all")]
    pub roles: BTreeSet<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl AgentProfile {
    pub fn new(id: impl Into<AgentId>, params: u64, price_per_mtok: f64) -> Self {
        AgentProfile {
            id: id.into(),
            params,
            price_per_mtok,
            roles: Role::all(),
            endpoint: None,
        }
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Invalid("agent id must not be empty".into()));
        }
        if !(self.price_per_mtok > 0.0) || !self.price_per_mtok.is_finite() {
            return Err(Error::Invalid(format!(
                "agent {} has non-positive price {}",
                self.id, self.price_per_mtok
            )));
        }
        if self.has_role(Role::Bidder) && !self.has_role(Role::Executor) {
            return Err(Error::Invalid(format!(
                "agent {} bids but cannot execute",
                self.id
            )));
        }
        Ok(())
    }
}

/// Validates a list of profiles as one pool: each profile valid, ids unique.
pub fn validate_pool(agents: &[AgentProfile]) -> Result<()> {
    if agents.is_empty() {
        return Err(Error::Invalid("agent pool is empty".into()));
    }
    let mut seen = BTreeSet::new();
    for a in agents {
        a.validate()?;
        if !seen.insert(a.id.as_str()) {
            return Err(Error::DuplicateAgent(a.id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    DeepSearch,
    Coding,
    Other,
}

impl Domain {
    pub fn tag(self) -> &'static str {
        match self {
            Domain::DeepSearch => "deep_search",
            Domain::Coding => "coding",
            Domain::Other => "other",
        }
    }
}

impl std::str::FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "deep_search" => Ok(Domain::DeepSearch),
            "coding" => Ok(Domain::Coding),
            "other" => Ok(Domain::Other),
            _ => Err(Error::Invalid(format!("unknown domain `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub domain: Domain,
    pub prompt: String,
    /// Average human solution time in minutes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_minutes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_answer: Option<String>,
    /// Opaque environment context handed to agents with the prompt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Task {
    pub fn new(id: impl Into<TaskId>, domain: Domain, prompt: impl Into<String>) -> Self {
        Task {
            id: id.into(),
            domain,
            prompt: prompt.into(),
            tau_minutes: None,
            reference_answer: None,
            context: None,
            source: None,
        }
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau_minutes = Some(tau);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityBin {
    pub lower_exclusive: f64,
    pub upper_inclusive: f64,
    pub label: String,
}

impl ComplexityBin {
    pub fn contains(&self, tau: f64) -> bool {
        self.lower_exclusive < tau && tau <= self.upper_inclusive
    }
}

/// Where a task falls in a bin schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinSlot {
    Bin(usize),
    Unbinned,
}

/// An ordered list of disjoint complexity bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BinSchedule(pub Vec<ComplexityBin>);

impl Default for BinSchedule {
    /// Five bins from 6 seconds to one hour, each upper bound 5x the last
    /// until the one-hour cap.
    fn default() -> Self {
        let bounds = [0.0, 0.1, 0.5, 2.5, 12.5, 60.0];
        BinSchedule(
            bounds
                .windows(2)
                .map(|w| ComplexityBin {
                    lower_exclusive: w[0],
                    upper_inclusive: w[1],
                    label: format!("tau<={}", w[1]),
                })
                .collect(),
        )
    }
}

impl BinSchedule {
    pub fn new(bins: Vec<ComplexityBin>) -> Result<Self> {
        for b in &bins {
            if !(b.lower_exclusive < b.upper_inclusive) {
                return Err(Error::Invalid(format!("empty bin {}", b.label)));
            }
        }
        for w in bins.windows(2) {
            if w[1].lower_exclusive < w[0].upper_inclusive {
                return Err(Error::Invalid(format!(
                    "bins {} and {} overlap or are out of order",
                    w[0].label, w[1].label
                )));
            }
        }
        Ok(BinSchedule(bins))
    }

    pub fn bins(&self) -> &[ComplexityBin] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn label(&self, slot: BinSlot) -> &str {
        match slot {
            BinSlot::Bin(i) => &self.0[i].label,
            BinSlot::Unbinned => "unbinned",
        }
    }

    /// Slot for a task, `None` when the task carries no solution time.
    pub fn slot_of(&self, task: &Task) -> Result<Option<BinSlot>> {
        task.tau_minutes.map(|t| assign_bin(t, self)).transpose()
    }
}

/// Places a solution time into the unique bin with `lower < tau <= upper`.
pub fn assign_bin(tau_minutes: f64, schedule: &BinSchedule) -> Result<BinSlot> {
    if !(tau_minutes > 0.0) {
        return Err(Error::NonPositiveTau(tau_minutes));
    }
    Ok(schedule
        .0
        .iter()
        .position(|b| b.contains(tau_minutes))
        .map_or(BinSlot::Unbinned, BinSlot::Bin))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub agent_id: AgentId,
    pub strategy_text: String,
    pub token_count: u64,
    /// Normalized entropy in `[0, 1]`.
    pub entropy: f64,
    pub jury_scores: BTreeMap<AgentId, i32>,
    pub refined: bool,
    /// Tokens spent producing this bid and its jury votes.
    pub overhead_tokens: u64,
    /// Set when `token_count` is a local estimate rather than provider usage.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub token_count_estimated: bool,
}

impl Bid {
    pub fn validate(&self, score_range: (i32, i32)) -> Result<()> {
        if self.token_count < 1 {
            return Err(Error::Invalid(format!(
                "bid of {} has zero tokens",
                self.agent_id
            )));
        }
        if !(0.0..=1.0).contains(&self.entropy) {
            return Err(Error::Invalid(format!(
                "bid of {} has entropy {} outside [0, 1]",
                self.agent_id, self.entropy
            )));
        }
        for (judge, &s) in &self.jury_scores {
            if s < score_range.0 || s > score_range.1 {
                return Err(Error::Invalid(format!(
                    "judge {judge} scored {s} outside [{}, {}]",
                    score_range.0, score_range.1
                )));
            }
        }
        Ok(())
    }
}

/// Terms that an ablation can switch off in scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Price,
    Length,
    Entropy,
    Jury,
    SelfJudgment,
}

pub const DEFAULT_SCORE_RANGE: (i32, i32) = (0, 5);

fn default_score_range() -> (i32, i32) {
    DEFAULT_SCORE_RANGE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringWeights {
    pub w_c: f64,
    pub w_h: f64,
    pub w_judge: BTreeMap<AgentId, f64>,
    #[serde(default = "default_score_range")]
    pub score_range: (i32, i32),
    #[serde(default)]
    pub ablation_mask: BTreeSet<Ablation>,
    /// Dataset tag the weights were tuned on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuned_on: Option<String>,
}

impl ScoringWeights {
    pub fn new(w_c: f64, w_h: f64, w_judge: BTreeMap<AgentId, f64>) -> Self {
        ScoringWeights {
            w_c,
            w_h,
            w_judge,
            score_range: DEFAULT_SCORE_RANGE,
            ablation_mask: BTreeSet::new(),
            tuned_on: None,
        }
    }

    pub fn zero(judges: impl IntoIterator<Item = AgentId>) -> Self {
        Self::new(0.0, 0.0, judges.into_iter().map(|j| (j, 0.0)).collect())
    }

    pub fn masks(&self, a: Ablation) -> bool {
        self.ablation_mask.contains(&a)
    }

    pub fn judges(&self) -> impl Iterator<Item = &AgentId> {
        self.w_judge.keys()
    }

    /// Errors unless the judge keys are exactly `judges`.
    pub fn check_judges<'a>(&self, judges: impl IntoIterator<Item = &'a AgentId>) -> Result<()> {
        let expected: BTreeSet<&AgentId> = judges.into_iter().collect();
        let have: BTreeSet<&AgentId> = self.w_judge.keys().collect();
        if expected != have {
            return Err(Error::WeightPoolMismatch(format!(
                "weights have judges {have:?}, pool jury is {expected:?}"
            )));
        }
        Ok(())
    }

    /// Same weights with every judge outside `keep` dropped.
    pub fn restricted_to(&self, keep: &BTreeSet<AgentId>) -> Self {
        let mut w = self.clone();
        w.w_judge.retain(|j, _| keep.contains(j));
        w
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut w = self.clone();
        w.w_c *= c;
        w.w_h *= c;
        w.w_judge.values_mut().for_each(|v| *v *= c);
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostValue {
    pub cost: f64,
    pub value: f64,
    pub net: f64,
}

impl CostValue {
    pub fn new(cost: f64, value: f64) -> Self {
        CostValue {
            cost,
            value,
            net: cost - value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Won,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredBid {
    pub bid: Bid,
    pub score: CostValue,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub answer: String,
    pub correct: Option<bool>,
    pub trace_tokens: u64,
    pub spend: f64,
}

/// One task's full auction outcome; also the memory-bank row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionRecord {
    pub task_id: TaskId,
    pub sequence_index: usize,
    pub initial_bids: Vec<ScoredBid>,
    pub refined_bids: Vec<ScoredBid>,
    pub provisional_winner: AgentId,
    pub final_winner: AgentId,
    pub winning_strategy: String,
    pub execution: Option<ExecutionResult>,
    /// Eligible agents whose refinement was skipped, with the reason.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub skipped_refinements: BTreeMap<AgentId, String>,
}

impl AuctionRecord {
    pub fn all_bids(&self) -> impl Iterator<Item = &ScoredBid> {
        self.initial_bids.iter().chain(self.refined_bids.iter())
    }

    pub fn winning_bid(&self) -> Option<&ScoredBid> {
        self.all_bids().find(|b| b.outcome == Outcome::Won)
    }

    pub fn initial_bid(&self, agent: &str) -> Option<&ScoredBid> {
        self.initial_bids.iter().find(|b| b.bid.agent_id == agent)
    }

    pub fn refined_bid(&self, agent: &str) -> Option<&ScoredBid> {
        self.refined_bids.iter().find(|b| b.bid.agent_id == agent)
    }

    pub fn provisional_net(&self) -> Option<f64> {
        self.initial_bid(&self.provisional_winner).map(|b| b.score.net)
    }

    /// Strategy generation plus jury-vote tokens over every bid.
    pub fn overhead_tokens(&self) -> u64 {
        self.all_bids().map(|b| b.bid.overhead_tokens).sum()
    }

    /// Checks the structural record invariants.
    pub fn validate(&self) -> Result<()> {
        let won = self.all_bids().filter(|b| b.outcome == Outcome::Won).count();
        if won != 1 {
            return Err(Error::Invalid(format!(
                "record {} labels {won} bids as won",
                self.task_id
            )));
        }
        if self.initial_bid(&self.provisional_winner).is_none() {
            return Err(Error::Invalid(format!(
                "record {}: provisional winner {} has no initial bid",
                self.task_id, self.provisional_winner
            )));
        }
        let w = self.winning_bid().expect("checked above");
        if w.bid.agent_id != self.final_winner || w.bid.strategy_text != self.winning_strategy {
            return Err(Error::Invalid(format!(
                "record {}: winning bid does not belong to final winner {}",
                self.task_id, self.final_winner
            )));
        }
        Ok(())
    }
}

impl fmt::Display for BinSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinSlot::Bin(i) => write!(f, "bin{i}"),
            BinSlot::Unbinned => f.write_str("unbinned"),
        }
    }
}
