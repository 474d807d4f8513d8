//! Willingness-to-pay nearest-neighbor router.
//!
//! Each query is routed to the agent maximizing `wtp * q - c`, where `q`
//! and `c` are the agent's mean quality and mean cost over the query's
//! cosine nearest neighbors among the training tasks. The linear tradeoff
//! follows the usual router-benchmark construction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::analysis::EvalMatrix;
use crate::domain::{AgentId, Task, TaskId};
use crate::error::{Error, Result};
use crate::memory::{top_k, Embedder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub task_id: TaskId,
    pub embedding: Vec<f64>,
    /// Observed quality in [0, 1] per agent.
    pub quality: BTreeMap<AgentId, f64>,
    /// Observed cost per agent, in dollars for the task.
    pub cost: BTreeMap<AgentId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtpModel {
    pub points: Vec<TrainingPoint>,
    pub k: usize,
    pub wtp: f64,
    pub embedder_tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WtpChoice {
    pub agent: AgentId,
    pub utility: f64,
    pub neighbors: usize,
}

pub const DEFAULT_K: usize = 50;
pub const DEFAULT_WTP: f64 = 5.0;

impl WtpModel {
    pub fn new(points: Vec<TrainingPoint>, k: usize, wtp: f64, embedder_tag: impl Into<String>) -> Result<Self> {
        let m = WtpModel { points, k, wtp, embedder_tag: embedder_tag.into() };
        m.validate()?;
        Ok(m)
    }

    /// Training points from an evaluation matrix: quality is 0/1
    /// correctness, cost is `price * trace_tokens / 1e6`.
    pub fn from_matrix(
        matrix: &EvalMatrix,
        tasks: &BTreeMap<TaskId, Task>,
        embedder: &dyn Embedder,
        k: usize,
        wtp: f64,
    ) -> Result<Self> {
        matrix.check_complete()?;
        let mut points = Vec::with_capacity(matrix.entries.len());
        for (task_id, row) in &matrix.entries {
            let task = tasks
                .get(task_id)
                .ok_or_else(|| Error::Invalid(format!("matrix task {task_id} is not in the task set")))?;
            let mut quality = BTreeMap::new();
            let mut cost = BTreeMap::new();
            for (agent, e) in row {
                quality.insert(agent.clone(), e.correct as u8 as f64);
                cost.insert(agent.clone(), matrix.prices[agent] * e.trace_tokens as f64 / 1e6);
            }
            points.push(TrainingPoint {
                task_id: task_id.clone(),
                embedding: embedder.embed(&task.prompt)?,
                quality,
                cost,
            });
        }
        WtpModel::new(points, k, wtp, embedder.tag())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Invalid("wtp k must be at least 1".into()));
        }
        if !self.wtp.is_finite() || self.wtp < 0.0 {
            return Err(Error::Invalid(format!("willingness to pay must be finite and >= 0, got {}", self.wtp)));
        }
        let Some(first) = self.points.first() else {
            return Err(Error::Invalid("wtp model has no training points".into()));
        };
        let dim = first.embedding.len();
        for p in &self.points {
            if p.embedding.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.embedding.len() });
            }
            if let Some((a, q)) = p.quality.iter().find(|(_, q)| !(0.0..=1.0).contains(*q)) {
                return Err(Error::Invalid(format!("quality {q} of {a} on {} is outside [0, 1]", p.task_id)));
            }
            if p.quality.keys().ne(p.cost.keys()) {
                return Err(Error::Invalid(format!("quality and cost agents differ on {}", p.task_id)));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.points[0].embedding.len()
    }

    /// Indices and similarities of the `min(k, n)` nearest training points.
    pub fn neighbors(&self, query: &[f64]) -> Result<Vec<(usize, f64)>> {
        if query.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: query.len() });
        }
        let rows: Vec<Vec<f64>> = self.points.iter().map(|p| p.embedding.clone()).collect();
        Ok(top_k(query, &rows, self.k.min(rows.len())))
    }

    pub fn route(&self, query: &[f64]) -> Result<WtpChoice> {
        let hood = self.neighbors(query)?;
        let mut sums: BTreeMap<&AgentId, (f64, f64, usize)> = BTreeMap::new();
        for &(i, _) in &hood {
            let p = &self.points[i];
            for (a, q) in &p.quality {
                let s = sums.entry(a).or_default();
                s.0 += q;
                s.1 += p.cost[a];
                s.2 += 1;
            }
        }
        let scored = sums.into_iter().map(|(a, (q, c, n))| {
            let (q, c) = (q / n as f64, c / n as f64);
            (a, self.wtp * q - c, c)
        });
        // best utility, then cheaper mean cost, then id
        let best = scored
            .reduce(|best, cand| {
                let better = cand.1 > best.1 || (cand.1 == best.1 && cand.2 < best.2);
                if better { cand } else { best }
            })
            .ok_or_else(|| Error::Invalid("neighbors carry no agent observations".into()))?;
        Ok(WtpChoice { agent: best.0.clone(), utility: best.1, neighbors: hood.len() })
    }

    pub fn route_task(&self, task: &Task, embedder: &dyn Embedder) -> Result<WtpChoice> {
        if embedder.tag() != self.embedder_tag {
            return Err(Error::EmbedderMismatch { expected: self.embedder_tag.clone(), found: embedder.tag() });
        }
        self.route(&embedder.embed(&task.prompt)?)
    }
}
