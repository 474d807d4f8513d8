//! Cost-aware strategy auctions for routing tasks across a pool of
//! heterogeneous agents.
//!
//! Agents bid with short strategic plans. Each bid is scored by a learned
//! cost-minus-value rule, agents cheaper than the provisional winner may
//! refine their bid using contrastive examples retrieved from an auction
//! memory, and the final winner executes the task.
//!
//! The crate is organized by pipeline stage:
//!
//! - [`domain`]: shared value types (agents, tasks, bids, weights, records).
//! - [`pricing`]: effective per-million-token prices from an anchor price.
//! - [`scoring`]: cost, value and net scores under a weight vector.
//! - [`optimizer`]: the min-max weight-learning MILP, its exact solver and a
//!   brute-force oracle.
//! - [`memory`]: the append-only auction memory with cosine retrieval.
//! - [`engine`]: one auction per task, and ordered runs over task sequences.
//! - [`gateway`]: the agent abstraction with synthetic and remote backends.
//! - [`analysis`]: binned metrics, Shapley attribution, oracle routing,
//!   diagnostics, selection curves and significance tests.
//! - [`wtp`]: a willingness-to-pay nearest-neighbor baseline router.
//! - [`scenario`]: seeded synthetic scenarios for end-to-end simulation.
//! - [`io`]: task, pool, weight, feature and transcript files, and CSV
//!   reports.

pub mod analysis;
pub mod domain;
pub mod engine;
pub mod error;
pub mod gateway;
pub mod io;
pub mod memory;
pub mod optimizer;
pub mod par;
pub mod pricing;
pub mod scenario;
pub mod scoring;
pub mod seed;
pub mod wtp;

pub use error::{Error, ErrorFamily, Result};
pub use par::Execution;
