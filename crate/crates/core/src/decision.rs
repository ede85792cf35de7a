//! Single-stage influence diagrams: decision and utility nodes on top of a chance
//! network, expected-utility maximization, dwell-time suppression of action
//! switches, and hard safety overrides.
//!
//! Decision nodes are embedded in the chance network as roots with a uniform
//! table; clamping a root by evidence is the same as intervening on it, so
//! `P(x | evidence, decisions)` is an ordinary posterior query.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::{joint_ve, posterior_ve, InferenceError, Query};
use crate::network::{Cpt, Evidence, ModelError, Network, NodeId, NodeSpec};

/// Largest joint alternative space searched exhaustively.
pub const MAX_ALTERNATIVE_SPACE: usize = 1_000_000;

/// Relative tolerance under which two expected utilities count as tied.
pub const EU_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecisionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("decision `{0}` needs at least two alternatives")]
    TooFewAlternatives(String),
    #[error("decision `{decision}` lists alternative `{alternative}` twice")]
    DuplicateAlternative {
        decision: String,
        alternative: String,
    },
    #[error("unknown decision `{0}`")]
    UnknownDecision(String),
    #[error("decision `{decision}` has no alternative `{alternative}`")]
    UnknownAlternative {
        decision: String,
        alternative: String,
    },
    #[error("assignment does not cover decision `{0}`")]
    IncompleteAssignment(String),
    #[error("informational parent `{parent}` of `{decision}` does not exist")]
    UnknownInformationalParent { decision: String, parent: String },
    #[error("informational parent `{parent}` of `{decision}` is influenced by that decision")]
    InformationalCycle { decision: String, parent: String },
    #[error("utility `{utility}` references unknown parent `{parent}`")]
    UnknownUtilityParent { utility: String, parent: String },
    #[error("utility `{utility}` has {got} entries, expected {expected}")]
    UtilityShapeMismatch {
        utility: String,
        expected: usize,
        got: usize,
    },
    #[error("utility `{0}` has a non-finite entry")]
    NonFiniteUtility(String),
    #[error("decision network has no utility nodes")]
    NoUtilities,
    #[error("decision `{0}` cannot be observed as evidence")]
    DecisionObserved(String),
    #[error("joint alternative space {size} exceeds {limit}")]
    AlternativeSpaceTooLarge { size: usize, limit: usize },
    #[error("overrides force both `{first}` and `{second}` for decision `{decision}`")]
    ConflictingOverrides {
        decision: String,
        first: String,
        second: String,
    },
    #[error("dwell guard must be at least 1")]
    InvalidGuard,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionNode {
    pub id: NodeId,
    pub alternatives: Vec<String>,
    /// Nodes observed before the decision is taken.
    #[serde(default)]
    pub parents: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityNode {
    pub id: NodeId,
    pub parents: Vec<NodeId>,
    /// One value per joint parent configuration, first parent varying slowest.
    pub table: Vec<f64>,
}

/// A chance network extended with decision and utility nodes.
#[derive(Debug, Clone)]
pub struct DecisionNetwork {
    network: Network,
    decisions: Vec<DecisionNode>,
    decision_index: Vec<usize>,
    utilities: Vec<UtilityNode>,
}

impl DecisionNetwork {
    /// Build from chance-node parts (which may list decisions as parents),
    /// decision nodes and utility nodes.
    pub fn new(
        name: impl Into<String>,
        chance_specs: Vec<NodeSpec>,
        chance_cpts: Vec<Cpt>,
        decisions: Vec<DecisionNode>,
        utilities: Vec<UtilityNode>,
        metadata: BTreeMap<String, serde_json::Value>,
    ) -> Result<Self, DecisionError> {
        for d in &decisions {
            if d.alternatives.len() < 2 {
                return Err(DecisionError::TooFewAlternatives(d.id.to_string()));
            }
            for (i, a) in d.alternatives.iter().enumerate() {
                if d.alternatives[..i].contains(a) {
                    return Err(DecisionError::DuplicateAlternative {
                        decision: d.id.to_string(),
                        alternative: a.clone(),
                    });
                }
            }
        }
        if utilities.is_empty() {
            return Err(DecisionError::NoUtilities);
        }

        let mut specs: Vec<NodeSpec> = decisions
            .iter()
            .map(|d| NodeSpec::new(d.id.clone(), d.alternatives.clone(), Vec::<NodeId>::new()))
            .collect();
        let mut cpts: Vec<Cpt> = decisions
            .iter()
            .map(|d| Cpt::uniform(d.alternatives.len(), 1))
            .collect();
        specs.extend(chance_specs);
        cpts.extend(chance_cpts);
        let network = Network::from_parts(name, specs, cpts, metadata)?;

        let decision_index: Vec<usize> = decisions
            .iter()
            .map(|d| network.require(d.id.as_str()))
            .collect::<Result<_, _>>()?;
        for (d, &di) in decisions.iter().zip(&decision_index) {
            let downstream = network.descendants(di);
            for p in &d.parents {
                let pi = network.index_of(p.as_str()).ok_or_else(|| {
                    DecisionError::UnknownInformationalParent {
                        decision: d.id.to_string(),
                        parent: p.to_string(),
                    }
                })?;
                if pi == di || downstream.contains(&pi) {
                    return Err(DecisionError::InformationalCycle {
                        decision: d.id.to_string(),
                        parent: p.to_string(),
                    });
                }
            }
        }

        for u in &utilities {
            let mut expected = 1usize;
            for p in &u.parents {
                let pi = network.index_of(p.as_str()).ok_or_else(|| {
                    DecisionError::UnknownUtilityParent {
                        utility: u.id.to_string(),
                        parent: p.to_string(),
                    }
                })?;
                expected *= network.cardinality(pi);
            }
            if u.table.len() != expected {
                return Err(DecisionError::UtilityShapeMismatch {
                    utility: u.id.to_string(),
                    expected,
                    got: u.table.len(),
                });
            }
            if u.table.iter().any(|v| !v.is_finite()) {
                return Err(DecisionError::NonFiniteUtility(u.id.to_string()));
            }
        }

        Ok(DecisionNetwork {
            network,
            decisions,
            decision_index,
            utilities,
        })
    }

    /// The chance network, including decisions as uniform roots.
    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn decisions(&self) -> &[DecisionNode] {
        &self.decisions
    }

    pub fn utilities(&self) -> &[UtilityNode] {
        &self.utilities
    }

    /// Size of the joint alternative space.
    pub fn alternative_space(&self) -> usize {
        self.decisions
            .iter()
            .map(|d| d.alternatives.len())
            .fold(1usize, |acc, n| acc.saturating_mul(n))
    }

    /// Copy with every utility table mapped through `f`.
    pub fn map_utilities(&self, f: impl Fn(f64) -> f64) -> DecisionNetwork {
        let mut dn = self.clone();
        for u in &mut dn.utilities {
            for v in &mut u.table {
                *v = f(*v);
            }
        }
        dn
    }

    /// The `k`-th joint assignment in lexicographic order (first decision slowest).
    pub fn assignment_at(&self, mut k: usize) -> Vec<(NodeId, String)> {
        let mut picks = vec![0usize; self.decisions.len()];
        for (slot, d) in self.decisions.iter().enumerate().rev() {
            picks[slot] = k % d.alternatives.len();
            k /= d.alternatives.len();
        }
        self.decisions
            .iter()
            .zip(picks)
            .map(|(d, i)| (d.id.clone(), d.alternatives[i].clone()))
            .collect()
    }

    /// Chance network with decisions removed and their children's CPTs sliced at
    /// the chosen alternatives.
    pub fn clamped_network(
        &self,
        assignment: &[(NodeId, String)],
    ) -> Result<Network, DecisionError> {
        let chosen = self.resolve_assignment(assignment)?;
        let net = &self.network;
        let mut specs = Vec::new();
        let mut cpts = Vec::new();
        let (all_specs, _) = net.to_parts();
        for spec in all_specs {
            let node = net.require(spec.id.as_str())?;
            if self.decision_index.contains(&node) {
                continue;
            }
            let parents = net.parents(node);
            let kept: Vec<usize> = parents
                .iter()
                .copied()
                .filter(|p| !self.decision_index.contains(p))
                .collect();
            let kept_cols: usize = kept.iter().map(|&p| net.cardinality(p)).product();
            let card = net.cardinality(node);
            let mut values = vec![0.0; card * kept_cols];
            let mut kept_states = vec![0usize; kept.len()];
            for kc in 0..kept_cols {
                let mut full = Vec::with_capacity(parents.len());
                let mut it = kept_states.iter();
                for &p in parents {
                    match self.decision_index.iter().position(|&d| d == p) {
                        Some(slot) => full.push(chosen[slot]),
                        None => full.push(*it.next().expect("kept parent state")),
                    }
                }
                let col = net.column_index(node, &full);
                for s in 0..card {
                    values[s * kept_cols + kc] = net.cpt(node).get(s, col);
                }
                for k in (0..kept.len()).rev() {
                    kept_states[k] += 1;
                    if kept_states[k] < net.cardinality(kept[k]) {
                        break;
                    }
                    kept_states[k] = 0;
                }
            }
            specs.push(NodeSpec {
                id: spec.id.clone(),
                states: spec.states.clone(),
                parents: kept.iter().map(|&p| net.id(p).clone()).collect(),
            });
            cpts.push(Cpt::from_flat(card, values));
        }
        Ok(Network::from_parts(
            net.name(),
            specs,
            cpts,
            net.metadata().clone(),
        )?)
    }

    fn resolve_assignment(
        &self,
        assignment: &[(NodeId, String)],
    ) -> Result<Vec<usize>, DecisionError> {
        for (id, _) in assignment {
            if !self.decisions.iter().any(|d| &d.id == id) {
                return Err(DecisionError::UnknownDecision(id.to_string()));
            }
        }
        self.decisions
            .iter()
            .map(|d| {
                let (_, alt) = assignment
                    .iter()
                    .find(|(id, _)| id == &d.id)
                    .ok_or_else(|| DecisionError::IncompleteAssignment(d.id.to_string()))?;
                d.alternatives.iter().position(|a| a == alt).ok_or_else(|| {
                    DecisionError::UnknownAlternative {
                        decision: d.id.to_string(),
                        alternative: alt.clone(),
                    }
                })
            })
            .collect()
    }

    fn check_evidence(&self, evidence: &Evidence) -> Result<(), DecisionError> {
        for d in &self.decisions {
            if evidence.contains(d.id.as_str()) {
                return Err(DecisionError::DecisionObserved(d.id.to_string()));
            }
        }
        Ok(())
    }

    fn decision_evidence(&self, evidence: &Evidence, assignment: &[(NodeId, String)]) -> Evidence {
        assignment
            .iter()
            .fold(evidence.clone(), |ev, (d, a)| ev.with(d.clone(), a.clone()))
    }
}

/// Sum over utility nodes of the expected utility under `evidence` with the
/// decisions clamped to `assignment`.
pub fn expected_utility(
    dn: &DecisionNetwork,
    assignment: &[(NodeId, String)],
    evidence: &Evidence,
) -> Result<f64, DecisionError> {
    dn.check_evidence(evidence)?;
    let chosen = dn.resolve_assignment(assignment)?;
    let net = &dn.network;
    let full = dn.decision_evidence(evidence, assignment);
    let mut total = 0.0;
    for u in &dn.utilities {
        let parent_idx: Vec<usize> = u
            .parents
            .iter()
            .map(|p| net.require(p.as_str()))
            .collect::<Result<_, _>>()?;
        let chance: Vec<NodeId> = u
            .parents
            .iter()
            .zip(&parent_idx)
            .filter(|(_, i)| !dn.decision_index.contains(i))
            .map(|(p, _)| p.clone())
            .collect();
        let (joint, _) = joint_ve(net, &chance, &full)?;

        let chance_cards: Vec<usize> = parent_idx
            .iter()
            .filter(|i| !dn.decision_index.contains(i))
            .map(|&i| net.cardinality(i))
            .collect();
        let mut states = vec![0usize; chance_cards.len()];
        let mut eu = 0.0;
        for &p in &joint {
            let mut cell = 0usize;
            let mut it = states.iter();
            for &pi in &parent_idx {
                let s = match dn.decision_index.iter().position(|&d| d == pi) {
                    Some(slot) => chosen[slot],
                    None => *it.next().expect("chance parent state"),
                };
                cell = cell * net.cardinality(pi) + s;
            }
            eu += p * u.table[cell];
            for k in (0..states.len()).rev() {
                states[k] += 1;
                if states[k] < chance_cards[k] {
                    break;
                }
                states[k] = 0;
            }
        }
        total += eu;
    }
    Ok(total)
}

/// A full decision assignment with its expected utility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Policy {
    pub choices: Vec<(NodeId, String)>,
    pub expected_utility: f64,
}

impl Policy {
    pub fn choice(&self, decision: &str) -> Option<&str> {
        self.choices
            .iter()
            .find(|(d, _)| d.as_str() == decision)
            .map(|(_, a)| a.as_str())
    }

    pub fn same_choices(&self, other: &Policy) -> bool {
        self.choices == other.choices
    }

    /// `{decision: alternative, ..., "eu": value}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for (d, a) in &self.choices {
            map.insert(d.to_string(), serde_json::Value::String(a.clone()));
        }
        map.insert("eu".into(), serde_json::json!(self.expected_utility));
        serde_json::Value::Object(map)
    }
}

fn better(candidate: f64, best: f64) -> bool {
    candidate - best > EU_TIE_TOLERANCE * best.abs().max(1.0)
}

fn search(
    dn: &DecisionNetwork,
    evidence: &Evidence,
    fixed: &[(NodeId, String)],
) -> Result<Policy, DecisionError> {
    let size = dn.alternative_space();
    if size > MAX_ALTERNATIVE_SPACE {
        return Err(DecisionError::AlternativeSpaceTooLarge {
            size,
            limit: MAX_ALTERNATIVE_SPACE,
        });
    }
    dn.check_evidence(evidence)?;
    let candidates: Vec<Vec<(NodeId, String)>> = (0..size)
        .map(|k| dn.assignment_at(k))
        .filter(|a| fixed.iter().all(|f| a.contains(f)))
        .collect();
    let scores: Vec<Result<f64, DecisionError>> = candidates
        .par_iter()
        .map(|a| expected_utility(dn, a, evidence))
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, score) in scores.into_iter().enumerate() {
        let eu = score?;
        match best {
            Some((_, b)) if !better(eu, b) => {}
            _ => best = Some((i, eu)),
        }
    }
    let (i, eu) = best.expect("alternative space is non-empty");
    Ok(Policy {
        choices: candidates[i].clone(),
        expected_utility: eu,
    })
}

/// Exhaustive argmax of expected utility. Ties (within [`EU_TIE_TOLERANCE`]) go to
/// the lexicographically first assignment in decision declaration order.
pub fn optimal_policy(dn: &DecisionNetwork, evidence: &Evidence) -> Result<Policy, DecisionError> {
    search(dn, evidence, &[])
}

/// Minimum number of consecutive calls a new recommendation must persist before
/// it replaces the emitted policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DwellGuard(usize);

impl DwellGuard {
    pub fn new(calls: usize) -> Result<Self, DecisionError> {
        if calls == 0 {
            return Err(DecisionError::InvalidGuard);
        }
        Ok(DwellGuard(calls))
    }

    pub fn calls(&self) -> usize {
        self.0
    }
}

impl Default for DwellGuard {
    fn default() -> Self {
        DwellGuard(3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Trigger {
    /// Fires when the evidence contains `node = state`.
    Observed { node: NodeId, state: String },
    /// Fires when P(node = state) exceeds `threshold` under the evidence and the
    /// unconstrained optimal policy.
    ProbabilityAbove {
        node: NodeId,
        state: String,
        threshold: f64,
    },
}

/// A hard-coded safety rule forcing some decisions regardless of utility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyOverride {
    pub name: String,
    pub trigger: Trigger,
    pub force: Vec<(NodeId, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub recommended: Policy,
    pub emitted: Policy,
    pub forced: bool,
}

/// Per-stream history of recommendations; owned by the caller.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecommendationLog {
    entries: Vec<LogEntry>,
}

impl RecommendationLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn last_emitted(&self) -> Option<&Policy> {
        self.entries.last().map(|e| &e.emitted)
    }

    /// Number of times the emitted policy changed between consecutive calls.
    pub fn switches(&self) -> usize {
        self.entries
            .windows(2)
            .filter(|w| !w[0].emitted.same_choices(&w[1].emitted))
            .count()
    }

    fn trailing_streak(&self, candidate: &Policy) -> usize {
        self.entries
            .iter()
            .rev()
            .take_while(|e| e.recommended.same_choices(candidate))
            .count()
    }
}

fn active_forces(
    dn: &DecisionNetwork,
    evidence: &Evidence,
    unconstrained: &Policy,
    overrides: &[SafetyOverride],
) -> Result<Vec<(NodeId, String)>, DecisionError> {
    let mut forced: Vec<(NodeId, String)> = Vec::new();
    for o in overrides {
        let fires = match &o.trigger {
            Trigger::Observed { node, state } => {
                evidence.get(node.as_str()) == Some(state.as_str())
            }
            Trigger::ProbabilityAbove {
                node,
                state,
                threshold,
            } if evidence.contains(node.as_str()) => {
                let observed = evidence.get(node.as_str()) == Some(state.as_str());
                (if observed { 1.0 } else { 0.0 }) > *threshold
            }
            Trigger::ProbabilityAbove {
                node,
                state,
                threshold,
            } => {
                let ev = dn.decision_evidence(evidence, &unconstrained.choices);
                let post = posterior_ve(dn.network(), &Query::new([node.clone()], ev))?;
                let p = post.probability(node.as_str(), state).ok_or_else(|| {
                    ModelError::UnknownState {
                        node: node.to_string(),
                        state: state.clone(),
                    }
                })?;
                p > *threshold
            }
        };
        if !fires {
            continue;
        }
        for (d, a) in &o.force {
            let decision = dn
                .decisions
                .iter()
                .find(|x| &x.id == d)
                .ok_or_else(|| DecisionError::UnknownDecision(d.to_string()))?;
            if !decision.alternatives.contains(a) {
                return Err(DecisionError::UnknownAlternative {
                    decision: d.to_string(),
                    alternative: a.clone(),
                });
            }
            match forced.iter().find(|(fd, _)| fd == d) {
                Some((_, existing)) if existing != a => {
                    return Err(DecisionError::ConflictingOverrides {
                        decision: d.to_string(),
                        first: existing.clone(),
                        second: a.clone(),
                    })
                }
                Some(_) => {}
                None => forced.push((d.clone(), a.clone())),
            }
        }
    }
    Ok(forced)
}

/// One online recommendation step.
///
/// Active safety overrides are applied first and take effect immediately, with the
/// remaining decisions optimized around them. Otherwise the optimal policy is
/// emitted only if it equals the previously emitted one or has been recommended
/// for at least `guard` consecutive calls; until then the previous policy is
/// re-emitted (with its expected utility under the current evidence).
pub fn recommend_with_guards(
    dn: &DecisionNetwork,
    evidence: &Evidence,
    history: &mut RecommendationLog,
    guard: DwellGuard,
    overrides: &[SafetyOverride],
) -> Result<Policy, DecisionError> {
    let unconstrained = optimal_policy(dn, evidence)?;
    let forced = active_forces(dn, evidence, &unconstrained, overrides)?;

    let (recommended, emitted, is_forced) = if !forced.is_empty() {
        let policy = search(dn, evidence, &forced)?;
        (policy.clone(), policy, true)
    } else {
        let emitted = match history.last_emitted() {
            None => unconstrained.clone(),
            Some(prev) if prev.same_choices(&unconstrained) => unconstrained.clone(),
            Some(prev) => {
                if history.trailing_streak(&unconstrained) + 1 >= guard.calls() {
                    unconstrained.clone()
                } else {
                    Policy {
                        choices: prev.choices.clone(),
                        expected_utility: expected_utility(dn, &prev.choices, evidence)?,
                    }
                }
            }
        };
        (unconstrained, emitted, false)
    };
    history.entries.push(LogEntry {
        recommended,
        emitted: emitted.clone(),
        forced: is_forced,
    });
    Ok(emitted)
}
