//! JSON model documents.
//!
//! ```json
//! {
//!   "name": "example",
//!   "metadata": {"scenario": "..."},
//!   "nodes": [
//!     {"id": "a", "states": ["TRUE", "FALSE"], "parents": [], "cpt": [0.3, 0.7]}
//!   ],
//!   "decisions": [{"id": "d", "alternatives": ["x", "y"], "parents": []}],
//!   "utilities": [{"id": "u", "parents": ["a"], "table": [-1.0, 0.0]}],
//!   "dn_nodes": []
//! }
//! ```
//!
//! `cpt` is the flat row-major table (first state's row first, first parent
//! slowest). Reconstructed nodes may also carry `noisy_or` parameters, which must
//! reproduce `cpt`. `dn_nodes` replace (by id) or extend the chance nodes of the
//! decision network; `decisions`, `utilities` and `dn_nodes` are optional.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decision::{DecisionError, DecisionNetwork, DecisionNode, UtilityNode};
use crate::network::{validate, Cpt, ModelError, Network, NodeId, NodeSpec};
use crate::noisy_or::NoisyOr;

/// Largest allowed difference between a stored CPT and its noisy-OR expansion.
const NOISY_OR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyOrRecord {
    pub leak: f64,
    /// Strength vectors keyed by parent id.
    pub links: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    pub states: Vec<String>,
    #[serde(default)]
    pub parents: Vec<NodeId>,
    pub cpt: Vec<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reconstructed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noisy_or: Option<NoisyOrRecord>,
}

impl NodeRecord {
    pub fn spec(&self) -> NodeSpec {
        NodeSpec {
            id: self.id.clone(),
            states: self.states.clone(),
            parents: self.parents.clone(),
        }
    }

    pub fn table(&self) -> Cpt {
        Cpt::from_flat(self.states.len(), self.cpt.clone())
    }

    fn noisy_or_check(&self) -> Option<ModelError> {
        let rec = self.noisy_or.as_ref()?;
        let bad = |msg: String| Some(ModelError::Format(format!("node `{}`: {msg}", self.id)));
        if self.states.len() != 2 {
            return bad("noisy-OR needs a binary node".into());
        }
        let mut links = Vec::with_capacity(self.parents.len());
        for p in &self.parents {
            match rec.links.get(p.as_str()) {
                Some(l) => links.push(l.clone()),
                None => return bad(format!("noisy-OR has no link for parent `{p}`")),
            }
        }
        if rec.links.len() != self.parents.len() {
            return bad("noisy-OR links name a non-parent".into());
        }
        let nor = NoisyOr {
            leak: rec.leak,
            links,
        };
        if !nor.is_valid() {
            return bad("noisy-OR parameter outside [0, 1]".into());
        }
        let expanded = nor.to_cpt();
        if expanded.values().len() != self.cpt.len() {
            return bad("noisy-OR link arity does not match parent states".into());
        }
        let worst = expanded
            .values()
            .iter()
            .zip(&self.cpt)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if worst > NOISY_OR_TOLERANCE {
            return bad(format!(
                "cpt differs from its noisy-OR expansion by {worst:e}"
            ));
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub name: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub nodes: Vec<NodeRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decisions: Vec<DecisionNode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub utilities: Vec<UtilityNode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dn_nodes: Vec<NodeRecord>,
}

impl ModelDocument {
    pub fn parse(json: &str) -> Result<Self, ModelError> {
        serde_json::from_str(json).map_err(|e| ModelError::Format(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ModelError::Format(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Serialize a network (declaration order, no decision parts).
    pub fn from_network(net: &Network) -> Self {
        let (specs, cpts) = net.to_parts();
        ModelDocument {
            name: net.name().to_owned(),
            metadata: net.metadata().clone(),
            nodes: specs
                .into_iter()
                .zip(cpts)
                .map(|(s, c)| NodeRecord {
                    id: s.id,
                    states: s.states,
                    parents: s.parents,
                    cpt: c.values().to_vec(),
                    reconstructed: false,
                    noisy_or: None,
                })
                .collect(),
            decisions: Vec::new(),
            utilities: Vec::new(),
            dn_nodes: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model documents always serialize")
    }

    fn parts(records: &[NodeRecord]) -> (Vec<NodeSpec>, Vec<Cpt>) {
        records.iter().map(|r| (r.spec(), r.table())).unzip()
    }

    /// Every violation of the static network, plus noisy-OR consistency.
    pub fn validate(&self) -> Vec<ModelError> {
        let (specs, cpts) = Self::parts(&self.nodes);
        let mut report = validate(&specs, &cpts);
        report.extend(
            self.nodes
                .iter()
                .chain(&self.dn_nodes)
                .filter_map(NodeRecord::noisy_or_check),
        );
        report
    }

    pub fn network(&self) -> Result<Network, ModelError> {
        if let Some(err) = self.validate().into_iter().next() {
            return Err(err);
        }
        let (specs, cpts) = Self::parts(&self.nodes);
        Network::from_parts(self.name.clone(), specs, cpts, self.metadata.clone())
    }

    pub fn has_decisions(&self) -> bool {
        !self.decisions.is_empty()
    }

    /// Chance nodes of the decision network: static nodes with `dn_nodes` applied.
    pub fn decision_chance_nodes(&self) -> Vec<NodeRecord> {
        let mut nodes = self.nodes.clone();
        for extra in &self.dn_nodes {
            match nodes.iter_mut().find(|n| n.id == extra.id) {
                Some(slot) => *slot = extra.clone(),
                None => nodes.push(extra.clone()),
            }
        }
        nodes
    }

    pub fn decision_network(&self) -> Result<DecisionNetwork, DecisionError> {
        if let Some(err) = self
            .dn_nodes
            .iter()
            .filter_map(NodeRecord::noisy_or_check)
            .next()
        {
            return Err(err.into());
        }
        let (specs, cpts) = Self::parts(&self.decision_chance_nodes());
        DecisionNetwork::new(
            format!("{}-decision", self.name),
            specs,
            cpts,
            self.decisions.clone(),
            self.utilities.clone(),
            self.metadata.clone(),
        )
    }
}
