//! Exact Shapley values by subset enumeration.
//!
//! ```text
//! phi_i = sum over S not containing i of |S|! (n - |S| - 1)! / n! * (v(S + i) - v(S))
//! ```
//!
//! Coalitions are bitmasks over the player list; every coalition value is
//! computed once, so a game costs `2^n` evaluations.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::AgentId;
use crate::error::{Error, Result};
use crate::par::{self, Execution};

pub const MAX_PLAYERS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub players: Vec<AgentId>,
    pub raw: BTreeMap<AgentId, f64>,
    /// Percentage shares summing to 100.
    pub shares: BTreeMap<AgentId, f64>,
    /// Set when some raw value was negative and shares were normalized by
    /// the sum of positive parts (negative players get a zero share).
    pub positive_part_normalized: bool,
    pub grand_value: f64,
    pub empty_value: f64,
}

/// Shapley values for the game whose value function takes a membership
/// mask (`mask[i]` = player `i` present). Coalition values are evaluated
/// in parallel when `exec` allows.
pub fn shapley<F>(players: &[AgentId], value: F, exec: Execution) -> Result<ShapleyReport>
where
    F: Fn(&[bool]) -> f64 + Sync + Send,
{
    let n = players.len();
    if n > MAX_PLAYERS {
        return Err(Error::TooManyPlayers { got: n, limit: MAX_PLAYERS });
    }
    if n == 0 {
        return Err(Error::Invalid("a game needs at least one player".into()));
    }
    let values = par::map_range(exec, 1 << n, |mask| {
        let members: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
        value(&members)
    });
    let phi = shapley_from_table(n, &values);
    let raw: BTreeMap<AgentId, f64> = players.iter().cloned().zip(phi.iter().copied()).collect();
    let (shares, positive_part_normalized) = normalize_shares(&raw);
    Ok(ShapleyReport {
        players: players.to_vec(),
        raw,
        shares,
        positive_part_normalized,
        grand_value: values[(1 << n) - 1],
        empty_value: values[0],
    })
}

/// Shapley values from a full table of coalition values indexed by mask.
pub fn shapley_from_table(n: usize, values: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), 1 << n, "value table must cover every coalition");
    // weight[s] = s! (n - s - 1)! / n!
    let weight: Vec<f64> = (0..n)
        .map(|s| {
            let mut w = 1.0;
            // s! (n-s-1)! / n! = 1 / (n * C(n-1, s))
            let mut binom = 1.0;
            for k in 0..s {
                binom = binom * (n - 1 - k) as f64 / (k + 1) as f64;
            }
            w /= n as f64 * binom;
            w
        })
        .collect();
    // marginals are summed per coalition size before weighting, so players
    // with identical marginal multisets get bitwise-identical values
    (0..n)
        .map(|i| {
            let bit = 1usize << i;
            let mut by_size = vec![0.0; n];
            for m in (0..1usize << n).filter(|m| m & bit == 0) {
                by_size[m.count_ones() as usize] += values[m | bit] - values[m];
            }
            weight.iter().zip(&by_size).map(|(w, s)| w * s).sum()
        })
        .collect()
}

fn normalize_shares(raw: &BTreeMap<AgentId, f64>) -> (BTreeMap<AgentId, f64>, bool) {
    let negative = raw.values().any(|&v| v < 0.0);
    let total: f64 = if negative {
        raw.values().map(|v| v.max(0.0)).sum()
    } else {
        raw.values().sum()
    };
    let shares = raw
        .iter()
        .map(|(a, &v)| {
            let v = if negative { v.max(0.0) } else { v };
            let share = if total != 0.0 { 100.0 * v / total } else { 100.0 / raw.len() as f64 };
            (a.clone(), share)
        })
        .collect();
    (shares, negative)
}
