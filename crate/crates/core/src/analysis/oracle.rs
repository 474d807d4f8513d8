//! Hindsight oracle routing and routing diagnostics.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, TaskId};
use crate::error::{Error, Result};

use super::metrics::RoutedTask;

/// One agent's result on one task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalEntry {
    pub correct: bool,
    pub trace_tokens: u64,
    /// Tokens the agent spent writing its own strategy before executing.
    #[serde(default)]
    pub strategy_tokens: u64,
}

/// Every agent run on every task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMatrix {
    pub prices: BTreeMap<AgentId, f64>,
    pub entries: BTreeMap<TaskId, BTreeMap<AgentId, EvalEntry>>,
}

impl EvalMatrix {
    pub fn agents(&self) -> impl Iterator<Item = &AgentId> {
        self.prices.keys()
    }

    pub fn entry(&self, task: &str, agent: &str) -> Result<&EvalEntry> {
        self.entries
            .get(task)
            .and_then(|row| row.get(agent))
            .ok_or_else(|| Error::MissingEntry { task: task.into(), agent: agent.into() })
    }

    /// Agents from cheapest to priciest, ties by id.
    pub fn by_price(&self) -> Vec<&AgentId> {
        let mut v: Vec<&AgentId> = self.prices.keys().collect();
        v.sort_by(|a, b| self.cmp_price(a, b));
        v
    }

    pub fn cmp_price(&self, a: &str, b: &str) -> Ordering {
        let pa = self.prices.get(a).copied().unwrap_or(f64::INFINITY);
        let pb = self.prices.get(b).copied().unwrap_or(f64::INFINITY);
        pa.total_cmp(&pb).then_with(|| a.cmp(b))
    }

    /// Checks every task has a result for every agent.
    pub fn check_complete(&self) -> Result<()> {
        for (task, row) in &self.entries {
            for agent in self.prices.keys() {
                if !row.contains_key(agent) {
                    return Err(Error::MissingEntry { task: task.clone(), agent: agent.clone() });
                }
            }
            if let Some(extra) = row.keys().find(|a| !self.prices.contains_key(*a)) {
                return Err(Error::UnknownAgent(extra.clone()));
            }
        }
        Ok(())
    }

    /// Routes every task to one fixed agent.
    pub fn single_agent(&self, agent: &str) -> Result<Vec<RoutedTask>> {
        self.route(self.entries.keys().map(|t| (t.clone(), agent.to_string())))
    }

    /// Looks up the matrix outcome of each (task, agent) choice. No
    /// routing overhead is charged.
    pub fn route(&self, choices: impl IntoIterator<Item = (TaskId, AgentId)>) -> Result<Vec<RoutedTask>> {
        choices
            .into_iter()
            .map(|(task, agent)| {
                let e = self.entry(&task, &agent)?;
                Ok(RoutedTask {
                    task_id: task,
                    chosen: agent,
                    correct: Some(e.correct),
                    trace_tokens: e.trace_tokens,
                    overhead: Vec::new(),
                })
            })
            .collect()
    }
}

/// Cheapest correct agent per task, else the cheapest agent.
pub fn oracle_route(matrix: &EvalMatrix) -> Result<BTreeMap<TaskId, AgentId>> {
    matrix.check_complete()?;
    let ladder = matrix.by_price();
    let cheapest = ladder
        .first()
        .ok_or_else(|| Error::Invalid("evaluation matrix has no agents".into()))?;
    matrix
        .entries
        .iter()
        .map(|(task, row)| {
            let pick = ladder.iter().find(|a| row[**a].correct).unwrap_or(cheapest);
            Ok((task.clone(), (*pick).clone()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Correct,
    OverEscalation,
    UnderEscalation,
    Unavoidable,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Correct,
        Category::OverEscalation,
        Category::UnderEscalation,
        Category::Unavoidable,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Category::Correct => "correct",
            Category::OverEscalation => "over_escalation",
            Category::UnderEscalation => "under_escalation",
            Category::Unavoidable => "unavoidable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDiagnosis {
    pub task_id: TaskId,
    pub category: Category,
    pub chosen: AgentId,
    /// `None` when no agent succeeds.
    pub oracle_choice: Option<AgentId>,
}

/// Row-normalized chosen-vs-oracle percentages. Columns include `none`
/// for tasks no agent solves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub rows: Vec<AgentId>,
    pub cols: Vec<String>,
    pub counts: Vec<Vec<usize>>,
    pub percent: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub tasks: Vec<RoutingDiagnosis>,
    /// Percent of tasks per category.
    pub breakdown: BTreeMap<Category, f64>,
    pub confusion: ConfusionMatrix,
}

pub const NO_ORACLE: &str = "none";

/// Classifies each routing choice against the hindsight oracle.
///
/// Precedence: unavoidable, then correct, then over-escalation, then
/// under-escalation. Since the oracle picks the cheapest correct agent, a
/// choice that is neither equal to nor pricier than it must be cheaper and
/// failing, so the four cases are exhaustive.
pub fn diagnose(
    chosen: &[(TaskId, AgentId)],
    oracle: &BTreeMap<TaskId, AgentId>,
    matrix: &EvalMatrix,
) -> Result<Diagnostics> {
    let mut tasks = Vec::with_capacity(chosen.len());
    for (task, agent) in chosen {
        let row = matrix
            .entries
            .get(task)
            .ok_or_else(|| Error::MissingEntry { task: task.clone(), agent: agent.clone() })?;
        matrix.entry(task, agent)?;
        let pick = oracle
            .get(task)
            .ok_or_else(|| Error::Invalid(format!("no oracle choice for task {task}")))?;
        let any = row.values().any(|e| e.correct);
        let category = if !any {
            Category::Unavoidable
        } else if agent == pick {
            Category::Correct
        } else if matrix.cmp_price(agent, pick) == Ordering::Greater {
            Category::OverEscalation
        } else {
            Category::UnderEscalation
        };
        tasks.push(RoutingDiagnosis {
            task_id: task.clone(),
            category,
            chosen: agent.clone(),
            oracle_choice: any.then(|| pick.clone()),
        });
    }

    let n = tasks.len().max(1) as f64;
    let breakdown = Category::ALL
        .iter()
        .map(|c| (*c, 100.0 * tasks.iter().filter(|d| d.category == *c).count() as f64 / n))
        .collect();

    let rows: Vec<AgentId> = matrix.by_price().into_iter().cloned().collect();
    let mut cols: Vec<String> = rows.clone();
    cols.push(NO_ORACLE.into());
    let mut counts = vec![vec![0usize; cols.len()]; rows.len()];
    for d in &tasks {
        let r = rows.iter().position(|a| *a == d.chosen).expect("entry checked above");
        let c = match &d.oracle_choice {
            Some(a) => rows.iter().position(|x| x == a).expect("oracle agents come from the matrix"),
            None => cols.len() - 1,
        };
        counts[r][c] += 1;
    }
    let percent = counts
        .iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            row.iter()
                .map(|&c| if total > 0 { 100.0 * c as f64 / total as f64 } else { 0.0 })
                .collect()
        })
        .collect();
    Ok(Diagnostics { tasks, breakdown, confusion: ConfusionMatrix { rows, cols, counts, percent } })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// agents s < m < l by price; `table` gives correctness per task.
    fn matrix(table: &[(&str, [bool; 3])]) -> EvalMatrix {
        let prices: BTreeMap<AgentId, f64> =
            [("s", 0.05), ("m", 0.16), ("l", 0.36)].iter().map(|(a, p)| (a.to_string(), *p)).collect();
        let entries = table
            .iter()
            .map(|(t, c)| {
                let row = ["s", "m", "l"]
                    .iter()
                    .zip(c)
                    .map(|(a, &ok)| (a.to_string(), EvalEntry { correct: ok, trace_tokens: 100, strategy_tokens: 0 }))
                    .collect();
                (t.to_string(), row)
            })
            .collect();
        EvalMatrix { prices, entries }
    }

    #[test]
    fn oracle_choices() {
        let m = matrix(&[("none", [false; 3]), ("cheap", [true; 3]), ("large", [false, false, true])]);
        let o = oracle_route(&m).unwrap();
        assert_eq!(o["none"], "s");
        assert_eq!(o["cheap"], "s");
        assert_eq!(o["large"], "l");
    }

    #[test]
    fn missing_entry_is_reported() {
        let mut m = matrix(&[("a", [true; 3])]);
        m.entries.get_mut("a").unwrap().remove("m");
        assert!(matches!(oracle_route(&m), Err(Error::MissingEntry { .. })));
    }

    #[test]
    fn categories() {
        let m = matrix(&[
            ("ok", [true, true, true]),
            ("over", [true, true, true]),
            ("under", [false, true, true]),
            ("lost", [false, false, false]),
        ]);
        let o = oracle_route(&m).unwrap();
        let chosen: Vec<(TaskId, AgentId)> = [("ok", "s"), ("over", "l"), ("under", "s"), ("lost", "l")]
            .iter()
            .map(|(t, a)| (t.to_string(), a.to_string()))
            .collect();
        let d = diagnose(&chosen, &o, &m).unwrap();
        let cats: Vec<Category> = d.tasks.iter().map(|x| x.category).collect();
        assert_eq!(
            cats,
            vec![Category::Correct, Category::OverEscalation, Category::UnderEscalation, Category::Unavoidable]
        );
        assert_eq!(d.tasks[3].oracle_choice, None);
        assert_eq!(d.confusion.cols.last().unwrap(), NO_ORACLE);
        for row in &d.confusion.percent {
            let s: f64 = row.iter().sum();
            assert!(s == 0.0 || (s - 100.0).abs() < 1e-9);
        }
    }
}
