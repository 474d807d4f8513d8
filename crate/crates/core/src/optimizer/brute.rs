//! Brute-force tuning oracle.
//!
//! Enumerates every assignment of agents to tasks and, for each, solves the
//! inner epigraph LP directly in `(w, Q)`:
//!
//! ```text
//! min Q  s.t.  net[t,c_t](w) <= Q                       for every t
//!              |net[t,i](w) - net[t,c_t](w)| <= M       for every t, i != c_t
//! ```
//!
//! With `x` fixed, the big-M rows of the full model collapse to exactly
//! these constraints (`z[t]` equals the chosen net). The formulation is
//! written independently of the MILP builder so the two can check each other.

use std::collections::BTreeMap;
use std::time::Instant;

use super::milp::{weights_from_flat, SolverStats, TuningInstance, TuningSolution};
use super::simplex::{LinearProgram, LpStatus, Relation};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::scoring::AffineNet;

pub const BRUTE_FORCE_LIMIT: f64 = 1e5;

pub fn brute_force_tune(instance: &TuningInstance, exec: Execution) -> Result<TuningSolution> {
    let start = Instant::now();
    instance.validate()?;
    let forms = instance.forms()?;
    instance.check_big_m(&forms)?;
    let (n_tasks, n_agents) = (instance.tasks.len(), instance.agents.len());
    let count = (n_agents as f64).powi(n_tasks as i32);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            assignments: count,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    let count = count as usize;
    let outcomes = par::map_range(exec, count, |idx| {
        let choice = decode(idx, n_tasks, n_agents);
        inner_lp(instance, &forms, &choice).map(|r| (choice, r))
    });

    let mut best: Option<(Vec<usize>, Vec<f64>, f64)> = None;
    let mut iterations = 0;
    for outcome in outcomes {
        let (choice, (flat, objective, iters)) = outcome?;
        iterations += iters;
        if best.as_ref().is_none_or(|(_, _, b)| objective < *b) {
            best = Some((choice, flat, objective));
        }
    }
    let (choice, flat, objective) = best.expect("at least one assignment");
    let weights = weights_from_flat(instance, &flat);
    let mut assignments = BTreeMap::new();
    let mut chosen_nets = BTreeMap::new();
    for (t, task) in instance.tasks.iter().enumerate() {
        assignments.insert(task.clone(), instance.agents[choice[t]].clone());
        chosen_nets.insert(task.clone(), forms[t][choice[t]].eval(&flat));
    }
    Ok(TuningSolution {
        weights,
        assignments,
        objective,
        chosen_nets,
        optimal: true,
        stats: SolverStats {
            nodes: count as u64,
            lp_iterations: iterations,
            wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        },
    })
}

/// Mixed-radix decode; task 0 is the most significant digit.
fn decode(mut idx: usize, n_tasks: usize, n_agents: usize) -> Vec<usize> {
    let mut choice = vec![0; n_tasks];
    for t in (0..n_tasks).rev() {
        choice[t] = idx % n_agents;
        idx /= n_agents;
    }
    choice
}

fn inner_lp(
    inst: &TuningInstance,
    forms: &[Vec<AffineNet>],
    choice: &[usize],
) -> Result<(Vec<f64>, f64, u64)> {
    let nw = inst.num_weights();
    let q = nw;
    let mut lp = LinearProgram::new(nw + 1);
    lp.objective[q] = 1.0;
    if let Some(b) = inst.weight_bound {
        for k in 0..nw {
            lp.set_bounds(k, -b, b);
        }
    }
    for (t, &c) in choice.iter().enumerate() {
        let chosen: Vec<f64> = forms[t][c].coefficients().collect();
        let mut epi: Vec<(usize, f64)> = chosen.iter().copied().enumerate().collect();
        epi.push((q, -1.0));
        lp.add(epi, Relation::Le, 0.0);
        for (i, f) in forms[t].iter().enumerate() {
            if i == c {
                continue;
            }
            let diff: Vec<(usize, f64)> = f
                .coefficients()
                .zip(&chosen)
                .map(|(a, b)| a - b)
                .enumerate()
                .collect();
            lp.add(diff.clone(), Relation::Le, inst.big_m);
            lp.add(diff, Relation::Ge, -inst.big_m);
        }
    }
    let sol = lp.solve()?;
    match sol.status {
        LpStatus::Optimal => Ok((sol.x[..nw].to_vec(), sol.objective, sol.iterations)),
        LpStatus::Unbounded => Err(Error::Unbounded),
        // w = 0, Q = 0 satisfies every row
        LpStatus::Infeasible => Err(Error::Solver("inner LP reported infeasible".into())),
    }
}
