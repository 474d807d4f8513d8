//! Cost, value and cost-minus-value for scored bids.
//!
//! ```text
//! C = w_c * price * tokens
//! V = w_h * entropy + sum_j w_j * score_j
//! net = C - V
//! ```
//!
//! Features are consumed at their natural scale; nothing here normalizes.
//! Ablations replace the price or length factor by 1, or drop the entropy
//! term, the jury term, or the bid owner's self-score.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Ablation, AgentId, Bid, CostValue, ScoringWeights};
use crate::error::{Error, Result};

/// Scoring inputs for one (task, agent) bid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub agent_id: AgentId,
    pub price: f64,
    pub token_count: u64,
    pub entropy: f64,
    pub jury_scores: BTreeMap<AgentId, i32>,
}

impl FeatureRow {
    pub fn from_bid(bid: &Bid, price: f64) -> Self {
        FeatureRow {
            agent_id: bid.agent_id.clone(),
            price,
            token_count: bid.token_count,
            entropy: bid.entropy,
            jury_scores: bid.jury_scores.clone(),
        }
    }
}

pub fn cost(row: &FeatureRow, w: &ScoringWeights) -> f64 {
    w.w_c * cost_feature(row, w)
}

pub fn value(row: &FeatureRow, w: &ScoringWeights) -> Result<f64> {
    let mut v = 0.0;
    if !w.masks(Ablation::Entropy) {
        v += w.w_h * row.entropy;
    }
    if !w.masks(Ablation::Jury) {
        for (judge, &wj) in &w.w_judge {
            if w.masks(Ablation::SelfJudgment) && *judge == row.agent_id {
                continue;
            }
            match row.jury_scores.get(judge) {
                Some(&s) => v += wj * s as f64,
                None if wj == 0.0 => {}
                None => {
                    return Err(Error::MissingJudgeScore {
                        judge: judge.clone(),
                        agent: row.agent_id.clone(),
                    })
                }
            }
        }
    }
    Ok(v)
}

pub fn net(row: &FeatureRow, w: &ScoringWeights) -> Result<CostValue> {
    Ok(CostValue::new(cost(row, w), value(row, w)?))
}

fn cost_feature(row: &FeatureRow, w: &ScoringWeights) -> f64 {
    let price = if w.masks(Ablation::Price) { 1.0 } else { row.price };
    let length = if w.masks(Ablation::Length) { 1.0 } else { row.token_count as f64 };
    price * length
}

/// Coefficients of `net` as a linear function of the weight vector
/// `(w_c, w_h, w_j...)`, with judges in the order given.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineNet {
    pub cost_coef: f64,
    pub entropy_coef: f64,
    pub judge_coefs: Vec<f64>,
}

impl AffineNet {
    /// Builds the form for `row` under the ablations in `mask_from`.
    ///
    /// Every listed judge is a free weight, so a missing score is an error
    /// unless the jury or this judge's self-score is masked out.
    pub fn of(row: &FeatureRow, judges: &[AgentId], mask_from: &ScoringWeights) -> Result<Self> {
        let jury_off = mask_from.masks(Ablation::Jury);
        let judge_coefs = judges
            .iter()
            .map(|j| {
                let self_off = mask_from.masks(Ablation::SelfJudgment) && *j == row.agent_id;
                if jury_off || self_off {
                    return Ok(0.0);
                }
                row.jury_scores
                    .get(j)
                    .map(|&s| -(s as f64))
                    .ok_or_else(|| Error::MissingJudgeScore {
                        judge: j.clone(),
                        agent: row.agent_id.clone(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AffineNet {
            cost_coef: cost_feature(row, mask_from),
            entropy_coef: if mask_from.masks(Ablation::Entropy) { 0.0 } else { -row.entropy },
            judge_coefs,
        })
    }

    /// All coefficients in weight-vector order.
    pub fn coefficients(&self) -> impl Iterator<Item = f64> + '_ {
        [self.cost_coef, self.entropy_coef]
            .into_iter()
            .chain(self.judge_coefs.iter().copied())
    }

    pub fn eval(&self, weights: &[f64]) -> f64 {
        self.coefficients().zip(weights).map(|(c, w)| c * w).sum()
    }

    /// `|C| + |V|` under unit weights: an a-priori bound on `|C - V|` for
    /// unit-magnitude weights.
    pub fn unit_weight_bound(&self) -> f64 {
        self.coefficients().map(f64::abs).sum()
    }
}
