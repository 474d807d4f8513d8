//! Per-bin pass@1, effective price and selection shares.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, AuctionRecord, BinSchedule, BinSlot, Task, TaskId};
use crate::error::{Error, Result};

/// One routed task, whatever policy routed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutedTask {
    pub task_id: TaskId,
    pub chosen: AgentId,
    pub correct: Option<bool>,
    pub trace_tokens: u64,
    /// Routing overhead (strategies and jury votes) per agent that paid it.
    pub overhead: Vec<(AgentId, u64)>,
}

impl RoutedTask {
    pub fn from_record(r: &AuctionRecord) -> Result<Self> {
        let exec = r.execution.as_ref().ok_or_else(|| {
            Error::Invalid(format!("record {} has no execution result", r.task_id))
        })?;
        Ok(RoutedTask {
            task_id: r.task_id.clone(),
            chosen: r.final_winner.clone(),
            correct: exec.correct,
            trace_tokens: exec.trace_tokens,
            overhead: r
                .all_bids()
                .map(|b| (b.bid.agent_id.clone(), b.bid.overhead_tokens))
                .collect(),
        })
    }

    pub fn from_records(records: &[AuctionRecord]) -> Result<Vec<Self>> {
        records.iter().map(Self::from_record).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMetrics {
    pub tasks: usize,
    /// Tasks with a known correctness label.
    pub graded: usize,
    /// Percent correct among graded tasks; absent when none are graded.
    pub pass_at_1: Option<f64>,
    pub spend: f64,
    pub tokens: u64,
    pub dollars_per_mtok: f64,
    pub mean_trace_tokens: f64,
    /// Percent of tasks routed to each agent.
    pub selection_shares: BTreeMap<AgentId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedReport {
    /// Keyed by bin label. Empty bins are absent.
    pub bins: BTreeMap<String, BinMetrics>,
    /// Bin labels in schedule order, then `unbinned` if present.
    pub order: Vec<String>,
    pub overall: BinMetrics,
}

fn summarize(
    tasks: &[&RoutedTask],
    prices: &BTreeMap<AgentId, f64>,
    include_overhead: bool,
) -> Result<BinMetrics> {
    let price = |a: &AgentId| prices.get(a).copied().ok_or_else(|| Error::UnknownAgent(a.clone()));
    let mut spend = 0.0;
    let mut tokens = 0u64;
    let mut trace = 0u64;
    let (mut graded, mut correct) = (0, 0);
    let mut counts: BTreeMap<AgentId, usize> = BTreeMap::new();
    for t in tasks {
        spend += price(&t.chosen)? * t.trace_tokens as f64 / 1e6;
        tokens += t.trace_tokens;
        trace += t.trace_tokens;
        if include_overhead {
            for (a, n) in &t.overhead {
                spend += price(a)? * *n as f64 / 1e6;
                tokens += n;
            }
        }
        if let Some(c) = t.correct {
            graded += 1;
            correct += c as usize;
        }
        *counts.entry(t.chosen.clone()).or_default() += 1;
    }
    let n = tasks.len();
    Ok(BinMetrics {
        tasks: n,
        graded,
        pass_at_1: (graded > 0).then(|| 100.0 * correct as f64 / graded as f64),
        spend,
        tokens,
        dollars_per_mtok: if tokens > 0 { spend / tokens as f64 * 1e6 } else { 0.0 },
        mean_trace_tokens: if n > 0 { trace as f64 / n as f64 } else { 0.0 },
        selection_shares: counts
            .into_iter()
            .map(|(a, c)| (a, 100.0 * c as f64 / n as f64))
            .collect(),
    })
}

/// Aggregates routed tasks per complexity bin. Tasks without a solution
/// time count toward `overall` only.
pub fn binned_metrics(
    routed: &[RoutedTask],
    tasks: &BTreeMap<TaskId, Task>,
    prices: &BTreeMap<AgentId, f64>,
    schedule: &BinSchedule,
    include_overhead: bool,
) -> Result<BinnedReport> {
    let mut by_slot: BTreeMap<BinSlot, Vec<&RoutedTask>> = BTreeMap::new();
    for r in routed {
        let task = tasks
            .get(&r.task_id)
            .ok_or_else(|| Error::Invalid(format!("routed task {} is not in the task set", r.task_id)))?;
        if let Some(slot) = schedule.slot_of(task)? {
            by_slot.entry(slot).or_default().push(r);
        }
    }
    let mut bins = BTreeMap::new();
    let mut order = Vec::new();
    for (slot, members) in &by_slot {
        let label = schedule.label(*slot).to_string();
        bins.insert(label.clone(), summarize(members, prices, include_overhead)?);
        order.push(label);
    }
    let all: Vec<&RoutedTask> = routed.iter().collect();
    Ok(BinnedReport {
        bins,
        order,
        overall: summarize(&all, prices, include_overhead)?,
    })
}
