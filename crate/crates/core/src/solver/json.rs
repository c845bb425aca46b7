use serde::{Deserialize, Serialize};

use crate::game::{ActionId, InfoSetKey};

use super::{PlanLayout, SolveResult};

pub const SOLVE_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfosetEntry {
    #[serde(flatten)]
    pub key: InfoSetKey,
    pub regrets: Vec<f64>,
    pub strategy: Vec<f64>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanCount {
    pub plan: Vec<ActionId>,
    pub count: u64,
}

/// Versioned, order-stable JSON form of a [`SolveResult`]. Wall-clock time is
/// left out so that equal runs serialize to equal bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDocument {
    pub schema_version: u32,
    pub iterations: u64,
    pub visits: Vec<Vec<u64>>,
    pub infosets: Vec<InfosetEntry>,
    pub plan_layout: PlanLayout,
    pub frequencies: Vec<PlanCount>,
}

impl SolveResult {
    pub fn to_document(&self) -> SolveDocument {
        let infosets = self
            .tables
            .entries()
            .into_iter()
            .map(|(key, node)| InfosetEntry {
                key,
                regrets: self.tables.node_regrets(node).to_vec(),
                strategy: self.tables.node_strategy(node).to_vec(),
                value: self.tables.node_value(node),
            })
            .collect();
        let frequencies = self
            .frequencies
            .entries()
            .into_iter()
            .map(|(plan, count)| PlanCount { plan: plan.0, count })
            .collect();
        SolveDocument {
            schema_version: SOLVE_SCHEMA_VERSION,
            iterations: self.iterations,
            visits: self.visits.clone(),
            infosets,
            plan_layout: self.frequencies.layout.clone(),
            frequencies,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_document()).expect("solve document serializes")
    }
}
