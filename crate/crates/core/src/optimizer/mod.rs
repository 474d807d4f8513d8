//! Weight learning and weight-based routing.

pub mod brute;
pub mod milp;
pub mod simplex;

use serde::{Deserialize, Serialize};

use crate::domain::{AgentId, ScoringWeights};
use crate::error::{Error, Result};
use crate::scoring::{self, FeatureRow};

pub use brute::brute_force_tune;
pub use milp::{build_milp, solve_exact, MilpModel, SolveOptions, TuningInstance, TuningSolution};

/// Relative tolerance under which two nets count as tied.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Lowest price, then lexicographically smallest id.
    #[default]
    CheapestThenId,
    IdOnly,
}

/// A selection candidate: `(agent, net, price)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate<'a> {
    pub agent: &'a str,
    pub net: f64,
    pub price: f64,
}

/// Index of the minimal-net candidate under the tie-break policy.
pub fn argmin_net(candidates: &[Candidate<'_>], tie: TieBreak) -> Option<usize> {
    let min = candidates.iter().map(|c| c.net).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let tol = TIE_TOL * min.abs().max(1.0);
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.net <= min + tol)
        .min_by(|(_, a), (_, b)| match tie {
            TieBreak::CheapestThenId => a.price.total_cmp(&b.price).then(a.agent.cmp(b.agent)),
            TieBreak::IdOnly => a.agent.cmp(b.agent),
        })
        .map(|(i, _)| i)
}

/// Routes a task to the agent whose bid minimizes cost-minus-value.
pub fn route_with_weights(rows: &[FeatureRow], w: &ScoringWeights, tie: TieBreak) -> Result<AgentId> {
    let nets = rows
        .iter()
        .map(|r| scoring::net(r, w).map(|cv| cv.net))
        .collect::<Result<Vec<_>>>()?;
    let candidates: Vec<Candidate<'_>> = rows
        .iter()
        .zip(&nets)
        .map(|(r, &net)| Candidate { agent: &r.agent_id, net, price: r.price })
        .collect();
    argmin_net(&candidates, tie)
        .map(|i| rows[i].agent_id.clone())
        .ok_or_else(|| Error::Invalid("no finite bid to route".into()))
}
