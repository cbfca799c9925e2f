//! JSON documents for instances and equilibria.
//!
//! An instance file looks like
//!
//! ```json
//! {"market": "lindahl", "items": "goods", "goods": 2,
//!  "agents": [{"budget": 1.0, "utility": {"kind": "linear", "a": [2.0, 1.0]}}]}
//! ```
//!
//! Chores markets use `"items": "chores"` and a `"disutility"` per agent.

use serde::{Deserialize, Serialize};

use super::{Agents, Equilibrium, MarketInstance, MarketKind, ResidualReport};
use crate::error::{Error, Result};
use crate::utilities::{DisutilityFamily, UtilityFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarketForm {
    Fisher,
    Lindahl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Goods,
    Chores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentEntry {
    pub budget: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utility: Option<UtilityFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disutility: Option<DisutilityFamily>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub market: MarketForm,
    pub items: ItemKind,
    pub goods: usize,
    pub agents: Vec<AgentEntry>,
}

impl InstanceFile {
    pub fn from_instance(inst: &MarketInstance) -> Self {
        let (market, items) = match inst.kind() {
            MarketKind::FisherGoods => (MarketForm::Fisher, ItemKind::Goods),
            MarketKind::LindahlGoods => (MarketForm::Lindahl, ItemKind::Goods),
            MarketKind::FisherChores => (MarketForm::Fisher, ItemKind::Chores),
            MarketKind::LindahlChores => (MarketForm::Lindahl, ItemKind::Chores),
        };
        let agents = match inst.agents() {
            Agents::Goods(us) => inst
                .budgets()
                .iter()
                .zip(us)
                .map(|(&budget, u)| AgentEntry { budget, utility: Some(u.clone()), disutility: None })
                .collect(),
            Agents::Chores(ds) => inst
                .budgets()
                .iter()
                .zip(ds)
                .map(|(&budget, d)| AgentEntry { budget, utility: None, disutility: Some(d.clone()) })
                .collect(),
        };
        InstanceFile { market, items, goods: inst.m(), agents }
    }

    pub fn into_instance(self) -> Result<MarketInstance> {
        let kind = match (self.market, self.items) {
            (MarketForm::Fisher, ItemKind::Goods) => MarketKind::FisherGoods,
            (MarketForm::Lindahl, ItemKind::Goods) => MarketKind::LindahlGoods,
            (MarketForm::Fisher, ItemKind::Chores) => MarketKind::FisherChores,
            (MarketForm::Lindahl, ItemKind::Chores) => MarketKind::LindahlChores,
        };
        let mut budgets = Vec::with_capacity(self.agents.len());
        let mut utilities = Vec::new();
        let mut disutilities = Vec::new();
        for (i, a) in self.agents.into_iter().enumerate() {
            budgets.push(a.budget);
            match (self.items, a.utility, a.disutility) {
                (ItemKind::Goods, Some(u), None) => utilities.push(u),
                (ItemKind::Chores, None, Some(d)) => disutilities.push(d),
                (ItemKind::Goods, _, _) => {
                    return Err(Error::Schema(format!("/agents/{i}: goods agents need exactly a \"utility\"")))
                }
                (ItemKind::Chores, _, _) => {
                    return Err(Error::Schema(format!("/agents/{i}: chores agents need exactly a \"disutility\"")))
                }
            }
        }
        let agents = match self.items {
            ItemKind::Goods => Agents::Goods(utilities),
            ItemKind::Chores => Agents::Chores(disutilities),
        };
        MarketInstance::new(kind, self.goods, budgets, agents)
    }
}

fn parse<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        Error::Schema(format!("at {path} (line {}, column {}): {inner}", inner.line(), inner.column()))
    })
}

pub fn parse_instance(text: &str) -> Result<MarketInstance> {
    parse::<InstanceFile>(text)?.into_instance()
}

pub fn instance_to_json(inst: &MarketInstance) -> String {
    serde_json::to_string_pretty(&InstanceFile::from_instance(inst)).expect("instance serializes")
}

/// An equilibrium with its optional verification report and provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    #[serde(flatten)]
    pub equilibrium: Equilibrium,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ResidualReport>,
}

pub fn parse_solution(text: &str) -> Result<SolutionFile> {
    parse(text)
}

pub fn solution_to_json(sol: &SolutionFile) -> String {
    serde_json::to_string_pretty(sol).expect("solution serializes")
}
