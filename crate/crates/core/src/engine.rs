//! Runs auctions: one per task, strictly in order, threading the memory.
//!
//! Per task:
//!
//! 1. every bidder proposes a strategy and the whole jury scores it;
//! 2. the provisional winner minimizes cost-minus-value;
//! 3. each bidder strictly cheaper than the provisional winner retrieves
//!    similar past auctions, builds contrastive pairs, refines its strategy
//!    and has it rescored by the same jury;
//! 4. the best refined bid wins if its net is below the provisional net,
//!    otherwise the provisional winner keeps the task;
//! 5. only the final winner executes, conditioned on its winning strategy;
//! 6. the record is appended to the memory.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::analysis::{EvalEntry, EvalMatrix};
use crate::domain::{
    AgentId, AuctionRecord, Bid, ExecutionResult, Outcome, Role, ScoredBid, ScoringWeights, Task,
    TaskId,
};
use crate::error::{Error, ErrorFamily, Result};
use crate::gateway::{check_proposal, check_verdict, Agent, Proposal};
use crate::memory::{BankLog, Embedder, MemoryBank};
use crate::optimizer::{argmin_net, Candidate, TieBreak, TIE_TOL};
use crate::par::{self, Execution};
use crate::scoring::{self, FeatureRow};
use crate::seed;

pub const DEFAULT_RETRIEVAL_K: usize = 8;

/// What to do when a bidder fails to propose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    /// Abort the task.
    #[default]
    Strict,
    /// Drop the failed bidder from this auction.
    Lenient,
}

fn default_k() -> usize {
    DEFAULT_RETRIEVAL_K
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionConfig {
    pub weights: ScoringWeights,
    #[serde(default = "default_k")]
    pub retrieval_k: usize,
    #[serde(default = "yes")]
    pub refinement_enabled: bool,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Restricts the jury to these agents.
    #[serde(default)]
    pub jury_subset: Option<BTreeSet<AgentId>>,
    #[serde(default)]
    pub random_seed: u64,
    #[serde(default)]
    pub failure_mode: FailureMode,
    #[serde(default)]
    pub execution: Execution,
}

impl AuctionConfig {
    pub fn new(weights: ScoringWeights) -> Self {
        AuctionConfig {
            weights,
            retrieval_k: DEFAULT_RETRIEVAL_K,
            refinement_enabled: true,
            tie_break: TieBreak::default(),
            jury_subset: None,
            random_seed: 0,
            failure_mode: FailureMode::default(),
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.refinement_enabled && self.retrieval_k == 0 {
            return Err(Error::Invalid("retrieval k must be at least 1".into()));
        }
        Ok(())
    }
}

pub type Pool = [Arc<dyn Agent>];

/// Chooses between the provisional winner and the refined bids: the
/// lowest refined net wins only when strictly below the provisional net.
/// Returns `None` to keep the provisional winner, else the refined index.
pub fn select_final(provisional: Candidate<'_>, refined: &[Candidate<'_>], tie: TieBreak) -> Option<usize> {
    let best = argmin_net(refined, tie)?;
    let tol = TIE_TOL * provisional.net.abs().max(1.0);
    (refined[best].net < provisional.net - tol).then_some(best)
}

/// A task that failed, with its error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: TaskId,
    pub sequence_index: usize,
    pub family: String,
    pub message: String,
}

impl TaskFailure {
    fn new(task: &Task, index: usize, e: &Error) -> Self {
        TaskFailure {
            task_id: task.id.clone(),
            sequence_index: index,
            family: family_name(e.family()).into(),
            message: e.to_string(),
        }
    }
}

fn family_name(f: ErrorFamily) -> &'static str {
    match f {
        ErrorFamily::Input => "input",
        ErrorFamily::Io => "io",
        ErrorFamily::Malformed => "malformed",
        ErrorFamily::EmbedderMismatch => "embedder_mismatch",
        ErrorFamily::WeightPoolMismatch => "weight_pool_mismatch",
        ErrorFamily::Tuning => "tuning",
        ErrorFamily::Agent => "agent",
        ErrorFamily::Analysis => "analysis",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    /// Task ids in the order they were auctioned.
    pub order: Vec<TaskId>,
    pub records: Vec<AuctionRecord>,
    pub failures: Vec<TaskFailure>,
}

/// Auctions tasks for a fixed pool and configuration.
pub struct Auctioneer<'a> {
    pool: &'a Pool,
    config: AuctionConfig,
    embedder: &'a dyn Embedder,
    jury: Vec<usize>,
    prices: BTreeMap<AgentId, f64>,
    prompts: BTreeMap<TaskId, String>,
}

fn agent_error(agent: &str, stage: &'static str, e: Error) -> Error {
    match e {
        Error::Agent { .. } | Error::MalformedReply { .. } => e,
        other => Error::Agent {
            agent: agent.to_string(),
            stage,
            message: other.to_string(),
        },
    }
}

impl<'a> Auctioneer<'a> {
    pub fn new(pool: &'a Pool, config: AuctionConfig, embedder: &'a dyn Embedder) -> Result<Self> {
        config.validate()?;
        if pool.is_empty() {
            return Err(Error::Invalid("agent pool is empty".into()));
        }
        let profiles: Vec<_> = pool.iter().map(|a| a.profile().clone()).collect();
        crate::domain::validate_pool(&profiles)?;
        if !profiles.iter().any(|p| p.has_role(Role::Bidder)) {
            return Err(Error::Invalid("no agent in the pool can bid".into()));
        }
        let jury: Vec<usize> = profiles
            .iter()
            .enumerate()
            .filter(|(_, p)| p.has_role(Role::Judge))
            .filter(|(_, p)| config.jury_subset.as_ref().is_none_or(|s| s.contains(&p.id)))
            .map(|(i, _)| i)
            .collect();
        config
            .weights
            .check_judges(jury.iter().map(|&i| &profiles[i].id))?;
        let prices = profiles.iter().map(|p| (p.id.clone(), p.price_per_mtok)).collect();
        Ok(Auctioneer {
            pool,
            config,
            embedder,
            jury,
            prices,
            prompts: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &AuctionConfig {
        &self.config
    }

    /// Makes the prompts of earlier tasks available to refinement prompts.
    pub fn remember_prompts<'t>(&mut self, tasks: impl IntoIterator<Item = &'t Task>) {
        for t in tasks {
            self.prompts.insert(t.id.clone(), t.prompt.clone());
        }
    }

    fn price(&self, agent: &str) -> f64 {
        self.prices[agent]
    }

    /// Scores one proposal with the full jury.
    fn score(&self, task: &Task, agent: &str, p: Proposal, refined: bool) -> Result<ScoredBid> {
        let range = self.config.weights.score_range;
        let verdicts = par::map(self.config.execution, &self.jury, |&j| {
            let juror = &self.pool[j];
            juror
                .judge(task, &p.strategy_text)
                .and_then(|v| check_verdict(juror.id(), &v, range).map(|_| v))
                .map_err(|e| agent_error(juror.id(), "judging", e))
                .map(|v| (juror.id().to_string(), v))
        });
        let mut jury_scores = BTreeMap::new();
        let mut jury_tokens = 0;
        for v in verdicts {
            let (id, v) = v?;
            jury_tokens += v.tokens;
            jury_scores.insert(id, v.score);
        }
        let bid = Bid {
            agent_id: agent.to_string(),
            strategy_text: p.strategy_text,
            token_count: p.token_count,
            entropy: p.entropy,
            jury_scores,
            refined,
            overhead_tokens: p.overhead_tokens + jury_tokens,
            token_count_estimated: p.token_count_estimated,
        };
        let score = scoring::net(&FeatureRow::from_bid(&bid, self.price(agent)), &self.config.weights)?;
        Ok(ScoredBid {
            bid,
            score,
            outcome: Outcome::Lost,
        })
    }

    /// Runs one auction and appends its record to `bank`.
    pub fn run_auction(
        &mut self,
        task: &Task,
        bank: &mut MemoryBank,
        sequence_index: usize,
    ) -> Result<(AuctionRecord, Vec<f64>)> {
        let embedding = self.embedder.embed(&task.prompt)?;
        let exec = self.config.execution;
        let bidders: Vec<usize> = (0..self.pool.len())
            .filter(|&i| self.pool[i].profile().has_role(Role::Bidder))
            .collect();

        // 1. proposals, each scored by the full jury
        let attempts = par::map(exec, &bidders, |&i| {
            let agent = &self.pool[i];
            let proposal = agent
                .propose(task)
                .and_then(|p| check_proposal(agent.id(), &p).map(|_| p))
                .map_err(|e| agent_error(agent.id(), "bidding", e))?;
            Ok::<_, Error>(proposal)
        });
        let mut proposals = Vec::new();
        for (&i, attempt) in bidders.iter().zip(attempts) {
            match attempt {
                Ok(p) => proposals.push((i, p)),
                Err(e) if self.config.failure_mode == FailureMode::Lenient => {
                    log::warn!("task {}: dropping bidder {}: {e}", task.id, self.pool[i].id());
                }
                Err(e) => return Err(e),
            }
        }
        if proposals.is_empty() {
            return Err(Error::Invalid(format!("task {}: every bidder failed", task.id)));
        }
        let mut initial = Vec::with_capacity(proposals.len());
        for (i, p) in proposals {
            initial.push(self.score(task, self.pool[i].id(), p, false)?);
        }

        // 2. provisional winner
        let cands: Vec<Candidate<'_>> = initial
            .iter()
            .map(|b| Candidate {
                agent: &b.bid.agent_id,
                net: b.score.net,
                price: self.price(&b.bid.agent_id),
            })
            .collect();
        let prov = argmin_net(&cands, self.config.tie_break)
            .ok_or_else(|| Error::Invalid(format!("task {}: no finite bid", task.id)))?;
        let prov_candidate = cands[prov];
        let prov_id = prov_candidate.agent.to_string();

        // 3. refinement by strictly cheaper bidders
        let mut refined = Vec::new();
        let mut skipped = BTreeMap::new();
        if self.config.refinement_enabled {
            let eligible: Vec<usize> = (0..initial.len())
                .filter(|&b| cands[b].price < prov_candidate.price)
                .collect();
            let hits = bank.retrieve_top_k(&embedding, self.config.retrieval_k)?;
            let retrieved: Vec<TaskId> = hits.into_iter().map(|h| h.task_id).collect();
            let results = par::map(exec, &eligible, |&b| {
                let agent_id = initial[b].bid.agent_id.as_str();
                if retrieved.is_empty() {
                    return Err("memory is empty".to_string());
                }
                let mut pairs = bank.build_pairs(&retrieved, agent_id);
                if pairs.is_empty() {
                    return Err("no contrastive pairs among retrieved tasks".to_string());
                }
                for p in &mut pairs {
                    p.source_prompt = self.prompts.get(&p.source_task_id).cloned();
                }
                let agent = self
                    .pool
                    .iter()
                    .find(|a| a.id() == agent_id)
                    .expect("bidder is in the pool");
                let initial_proposal = Proposal {
                    strategy_text: initial[b].bid.strategy_text.clone(),
                    token_count: initial[b].bid.token_count,
                    entropy: initial[b].bid.entropy,
                    overhead_tokens: 0,
                    token_count_estimated: initial[b].bid.token_count_estimated,
                };
                agent
                    .refine(task, &initial_proposal, &pairs)
                    .and_then(|p| check_proposal(agent_id, &p).map(|_| p))
                    .and_then(|p| self.score(task, agent_id, p, true))
                    .map_err(|e| format!("refinement failed: {e}"))
            });
            for (&b, r) in eligible.iter().zip(results) {
                let agent_id = initial[b].bid.agent_id.clone();
                match r {
                    Ok(bid) => refined.push(bid),
                    Err(reason) => {
                        log::debug!("task {}: {agent_id} skips refinement: {reason}", task.id);
                        skipped.insert(agent_id, reason);
                    }
                }
            }
        }

        // 4. final selection
        let refined_cands: Vec<Candidate<'_>> = refined
            .iter()
            .map(|b| Candidate {
                agent: &b.bid.agent_id,
                net: b.score.net,
                price: self.price(&b.bid.agent_id),
            })
            .collect();
        let choice = select_final(prov_candidate, &refined_cands, self.config.tie_break);
        drop(refined_cands);
        let winner = match choice {
            Some(r) => {
                refined[r].outcome = Outcome::Won;
                &refined[r]
            }
            None => {
                initial[prov].outcome = Outcome::Won;
                &initial[prov]
            }
        };
        let final_winner = winner.bid.agent_id.clone();
        let winning_strategy = winner.bid.strategy_text.clone();

        // 5. execution by the winner only
        let agent = self
            .pool
            .iter()
            .find(|a| a.id() == final_winner)
            .expect("winner is in the pool");
        let trace = agent
            .execute(task, &winning_strategy)
            .map_err(|e| agent_error(&final_winner, "executing", e))?;
        let execution = ExecutionResult {
            spend: self.price(&final_winner) * trace.trace_tokens as f64 / 1e6,
            answer: trace.answer,
            correct: trace.correct,
            trace_tokens: trace.trace_tokens,
        };

        let record = AuctionRecord {
            task_id: task.id.clone(),
            sequence_index,
            initial_bids: initial,
            refined_bids: refined,
            provisional_winner: prov_id,
            final_winner,
            winning_strategy,
            execution: Some(execution),
            skipped_refinements: skipped,
        };
        record.validate()?;

        // 6. memory write
        bank.append(record.clone(), embedding.clone())?;
        self.prompts.insert(task.id.clone(), task.prompt.clone());
        Ok((record, embedding))
    }

    /// Runs tasks in order, or in a seeded permutation when `permute` is
    /// set. A failing task is recorded and skipped; the run continues.
    pub fn run_sequence(
        &mut self,
        tasks: &[Task],
        bank: &mut MemoryBank,
        permute: bool,
        mut log: Option<&mut BankLog>,
    ) -> Result<RunOutput> {
        let mut seen = BTreeSet::new();
        for t in tasks {
            if !seen.insert(t.id.as_str()) {
                return Err(Error::DuplicateTask(t.id.clone()));
            }
        }
        let order = if permute {
            permutation(tasks.len(), self.config.random_seed)
        } else {
            (0..tasks.len()).collect()
        };
        let mut out = RunOutput {
            order: order.iter().map(|&i| tasks[i].id.clone()).collect(),
            records: Vec::new(),
            failures: Vec::new(),
        };
        for (index, &i) in order.iter().enumerate() {
            let task = &tasks[i];
            match self.run_auction(task, bank, index) {
                Ok((record, embedding)) => {
                    if let Some(log) = log.as_deref_mut() {
                        log.append(&record, &embedding)?;
                    }
                    out.records.push(record);
                }
                Err(e) => {
                    log::warn!("task {} failed: {e}", task.id);
                    out.failures.push(TaskFailure::new(task, index, &e));
                }
            }
        }
        Ok(out)
    }
}

/// Runs every executor on every task with its own unrefined strategy.
/// Feeds oracle routing and diagnostics; needs graded outcomes.
pub fn evaluate_all(pool: &Pool, tasks: &[Task], exec: Execution) -> Result<EvalMatrix> {
    let executors: Vec<&Arc<dyn Agent>> = pool.iter().filter(|a| a.profile().has_role(Role::Executor)).collect();
    if executors.is_empty() {
        return Err(Error::Invalid("no agent in the pool can execute".into()));
    }
    let rows = par::map(exec, tasks, |task| -> Result<(TaskId, BTreeMap<AgentId, EvalEntry>)> {
        let mut row = BTreeMap::new();
        for agent in &executors {
            let id = agent.id();
            let p = agent.propose(task).map_err(|e| agent_error(id, "proposing", e))?;
            check_proposal(id, &p)?;
            let trace = agent
                .execute(task, &p.strategy_text)
                .map_err(|e| agent_error(id, "executing", e))?;
            let correct = trace.correct.ok_or_else(|| {
                Error::Invalid(format!("{id} on task {} returned an ungraded answer", task.id))
            })?;
            row.insert(
                id.to_string(),
                EvalEntry { correct, trace_tokens: trace.trace_tokens, strategy_tokens: p.token_count },
            );
        }
        Ok((task.id.clone(), row))
    });
    let mut entries = BTreeMap::new();
    for r in rows {
        let (task, row) = r?;
        if entries.insert(task.clone(), row).is_some() {
            return Err(Error::DuplicateTask(task));
        }
    }
    Ok(EvalMatrix {
        prices: executors.iter().map(|a| (a.id().to_string(), a.profile().price_per_mtok)).collect(),
        entries,
    })
}

/// Seeded permutation of `0..n`.
pub fn permutation(n: usize, seed_value: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed_value, "task-order"));
    order
}
