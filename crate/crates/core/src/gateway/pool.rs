//! Declarative pool descriptions and the agents they build.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::prompts::PromptSet;
use super::remote::{RemoteAgent, RemoteConfig};
use super::synthetic::{SyntheticAgent, SyntheticAgentSpec, World};
use super::Agent;
use crate::domain::{AgentId, AgentProfile, Role, DEFAULT_SCORE_RANGE};
use crate::error::{Error, Result};
use crate::pricing::{derive_pool_prices, DerivedPrice, PriceAnchor, PriceInput, DEFAULT_ROUNDING_PLACES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    Synthetic(SyntheticAgentSpec),
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: AgentId,
    pub params: u64,
    /// Overrides the anchor-derived price.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<f64>,
    #[serde(default = "Role::all")]
    pub roles: BTreeSet<Role>,
    pub backend: Backend,
}

fn default_places() -> u32 {
    DEFAULT_ROUNDING_PLACES
}
fn default_range() -> (i32, i32) {
    DEFAULT_SCORE_RANGE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    #[serde(default)]
    pub anchor: PriceAnchor,
    #[serde(default = "default_places")]
    pub rounding_places: u32,
    #[serde(default = "default_range")]
    pub score_range: (i32, i32),
    /// Required when any agent is synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub world: Option<World>,
    /// Directory of prompt templates overriding the built-in ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts_dir: Option<PathBuf>,
    pub agents: Vec<AgentSpec>,
}

impl PoolSpec {
    pub fn prices(&self) -> Result<BTreeMap<AgentId, DerivedPrice>> {
        derive_pool_prices(
            self.agents.iter().map(|a| PriceInput {
                id: &a.id,
                params: a.params,
                explicit_price: a.price,
            }),
            &self.anchor,
            self.rounding_places,
        )
    }

    pub fn profiles(&self) -> Result<Vec<AgentProfile>> {
        let prices = self.prices()?;
        let profiles: Vec<AgentProfile> = self
            .agents
            .iter()
            .map(|a| AgentProfile {
                id: a.id.clone(),
                params: a.params,
                price_per_mtok: prices[&a.id].rounded,
                roles: a.roles.clone(),
                endpoint: match &a.backend {
                    Backend::Remote(c) => Some(c.url.clone()),
                    Backend::Synthetic(_) => None,
                },
            })
            .collect();
        crate::domain::validate_pool(&profiles)?;
        Ok(profiles)
    }

    pub fn agent_ids(&self) -> Vec<AgentId> {
        self.agents.iter().map(|a| a.id.clone()).collect()
    }

    /// Ids of agents sitting on the jury.
    pub fn judges(&self) -> Vec<AgentId> {
        self.agents
            .iter()
            .filter(|a| a.roles.contains(&Role::Judge))
            .map(|a| a.id.clone())
            .collect()
    }

    /// The same pool with only the `keep` agents, in every role.
    pub fn restricted_to(&self, keep: &BTreeSet<AgentId>) -> PoolSpec {
        let mut spec = self.clone();
        spec.agents.retain(|a| keep.contains(&a.id));
        spec
    }

    pub fn build(&self) -> Result<Vec<Arc<dyn Agent>>> {
        let profiles = self.profiles()?;
        let prompts = match &self.prompts_dir {
            Some(dir) => PromptSet::load_dir(dir)?,
            None => PromptSet::default(),
        };
        self.agents
            .iter()
            .zip(profiles)
            .map(|(a, profile)| -> Result<Arc<dyn Agent>> {
                Ok(match &a.backend {
                    Backend::Synthetic(spec) => {
                        let world = self.world.clone().ok_or_else(|| {
                            Error::Invalid(format!("synthetic agent {} needs a pool world", a.id))
                        })?;
                        Arc::new(SyntheticAgent::new(profile, spec.clone(), world)?.with_score_range(self.score_range))
                    }
                    Backend::Remote(config) => Arc::new(
                        RemoteAgent::new(profile, config.clone(), prompts.clone())?.with_score_range(self.score_range),
                    ),
                })
            })
            .collect()
    }
}
