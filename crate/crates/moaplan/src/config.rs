//! TOML configuration: planner settings, agents, policy bindings and
//! simulation profiles.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use moaplan_core::exec::{BindingTable, SimProfile};
use moaplan_core::moa::{AgentConfig, AgentRegistry};
use moaplan_core::planner::PlannerConfig;
use serde::{Deserialize, Serialize};

pub const DEFAULT_MAX_TICKS: u32 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecSettings {
    pub max_ticks: u32,
    /// Base URL of the policy server for live runs.
    pub policy_url: Option<String>,
    /// Endpoint returning the current camera frame, if any.
    pub camera_url: Option<String>,
    pub policy_timeout_secs: u64,
}

impl Default for ExecSettings {
    fn default() -> Self {
        ExecSettings {
            max_ticks: DEFAULT_MAX_TICKS,
            policy_url: None,
            camera_url: None,
            policy_timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub planner: PlannerConfig,
    pub agents: Vec<AgentConfig>,
    pub bindings: BindingTable,
    pub profiles: BTreeMap<String, SimProfile>,
    pub exec: ExecSettings,
}

impl Config {
    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let mut cfg: Config = toml::from_str(text)?;
        for (key, profile) in cfg.profiles.iter_mut() {
            if profile.name.is_empty() {
                profile.name = key.clone();
            }
        }
        cfg.planner.check()?;
        if !cfg.agents.is_empty() {
            AgentRegistry::new(cfg.agents.clone())?;
        }
        for profile in cfg.profiles.values() {
            profile.check()?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// The agent registry, or None when no agents are configured.
    pub fn registry(&self) -> anyhow::Result<Option<AgentRegistry>> {
        if self.agents.is_empty() {
            return Ok(None);
        }
        Ok(Some(AgentRegistry::new(self.agents.clone())?))
    }

    pub fn profile(&self, name: &str) -> anyhow::Result<&SimProfile> {
        self.profiles.get(name).with_context(|| {
            let known: Vec<&str> = self.profiles.keys().map(String::as_str).collect();
            format!("no simulation profile {name:?} (have {known:?})")
        })
    }
}
