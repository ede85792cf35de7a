//! Two-slice temporal networks: unrolling into a flat [`Network`] and exact
//! forward filtering over the slice interface.
//!
//! Slice `t` of node `x` is named `x@t`, with slice 0 drawn from the initial
//! network. Nodes with a [`Transition`] take their temporal parents from slice
//! `t - 1`; every other node is re-instantiated from the base slice.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::factor::{eliminate, Factor};
use crate::inference::InferenceError;
use crate::network::{Cpt, ModelError, Network, NodeId, NodeSpec, NORMALIZATION_TOLERANCE};

/// Default upper bound on unrolled slices.
pub const DEFAULT_STEP_CAP: usize = 1000;

pub const HOURS_PER_YEAR: f64 = 8760.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DbnError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("StepCapExceeded: {steps} steps requested, cap is {cap}")]
    StepCapExceeded { steps: usize, cap: usize },
    #[error("at least one step is required")]
    NoSteps,
    #[error("domain error: {0}")]
    Domain(String),
    #[error("initial and base slices differ at node `{0}`")]
    SliceMismatch(String),
    #[error("transition for `{0}` defined twice")]
    DuplicateTransition(String),
    #[error("transition CPT of `{node}` has {got} entries, expected {expected}")]
    TransitionShape {
        node: String,
        expected: usize,
        got: usize,
    },
    #[error("transition CPT of `{node}` column {column} sums to {sum}")]
    TransitionNotNormalized {
        node: String,
        column: usize,
        sum: f64,
    },
}

/// Per-step failure probability from an annual one, assuming a constant hazard:
/// `1 - (1 - p_annual)^(step_hours / 8760)`. `p_annual = 1` maps to 1.
pub fn annual_to_step(p_annual: f64, step_hours: f64) -> Result<f64, DbnError> {
    if !(0.0..=1.0).contains(&p_annual) {
        return Err(DbnError::Domain(format!(
            "annual probability {p_annual} outside [0, 1]"
        )));
    }
    if !(step_hours.is_finite() && step_hours > 0.0) {
        return Err(DbnError::Domain(format!(
            "step length {step_hours} h must be positive"
        )));
    }
    if p_annual == 1.0 {
        return Ok(1.0);
    }
    // expm1/ln_1p keep precision for the tiny per-hour values.
    Ok(-((-p_annual).ln_1p() * (step_hours / HOURS_PER_YEAR)).exp_m1())
}

/// CPT of a node at slice `t >= 1`.
///
/// Columns range over the temporal parents (at `t - 1`) followed by the node's
/// intra-slice parents in the base network, first parent slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub target: NodeId,
    pub temporal_parents: Vec<NodeId>,
    pub cpt: Cpt,
}

impl Transition {
    /// Absorbing failure: once TRUE stays TRUE, otherwise fails with `p_step`.
    pub fn absorbing(node: impl Into<NodeId>, p_step: f64) -> Self {
        let node = node.into();
        Transition {
            temporal_parents: vec![node.clone()],
            target: node,
            cpt: Cpt::from_rows(&[[1.0, p_step], [0.0, 1.0 - p_step]]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoSliceNetwork {
    initial: Network,
    base: Network,
    transitions: Vec<Transition>,
    /// Base index -> transition slot.
    transition_of: Vec<Option<usize>>,
    /// Base indices of nodes read from the previous slice, ascending.
    interface: Vec<usize>,
}

impl TwoSliceNetwork {
    pub fn new(
        initial: Network,
        base: Network,
        transitions: Vec<Transition>,
    ) -> Result<Self, DbnError> {
        if initial.len() != base.len() {
            return Err(DbnError::SliceMismatch("node count".into()));
        }
        for spec in initial.specs() {
            let i = base
                .index_of(spec.id.as_str())
                .ok_or_else(|| DbnError::SliceMismatch(spec.id.to_string()))?;
            if base.spec(i).states != spec.states {
                return Err(DbnError::SliceMismatch(spec.id.to_string()));
            }
        }

        let mut transition_of = vec![None; base.len()];
        let mut interface = Vec::new();
        for (slot, tr) in transitions.iter().enumerate() {
            let target = base.require(tr.target.as_str())?;
            if transition_of[target].is_some() {
                return Err(DbnError::DuplicateTransition(tr.target.to_string()));
            }
            transition_of[target] = Some(slot);
            let mut columns = 1usize;
            for p in &tr.temporal_parents {
                let pi = base.require(p.as_str())?;
                columns *= base.cardinality(pi);
                if !interface.contains(&pi) {
                    interface.push(pi);
                }
            }
            for &p in base.parents(target) {
                columns *= base.cardinality(p);
            }
            let expected = columns * base.cardinality(target);
            if tr.cpt.values().len() != expected || tr.cpt.states() != base.cardinality(target) {
                return Err(DbnError::TransitionShape {
                    node: tr.target.to_string(),
                    expected,
                    got: tr.cpt.values().len(),
                });
            }
            for c in 0..columns {
                let sum: f64 = tr.cpt.column(c).iter().sum();
                let in_range = tr.cpt.column(c).iter().all(|v| (0.0..=1.0).contains(v));
                if !in_range || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
                    return Err(DbnError::TransitionNotNormalized {
                        node: tr.target.to_string(),
                        column: c,
                        sum,
                    });
                }
            }
        }
        interface.sort_unstable();
        Ok(TwoSliceNetwork {
            initial,
            base,
            transitions,
            transition_of,
            interface,
        })
    }

    /// Template whose listed nodes are absorbing with the given per-step failure
    /// probabilities; the base slice equals the initial one.
    pub fn absorbing(initial: Network, per_step: &[(NodeId, f64)]) -> Result<Self, DbnError> {
        let transitions = per_step
            .iter()
            .map(|(n, p)| Transition::absorbing(n.clone(), *p))
            .collect();
        TwoSliceNetwork::new(initial.clone(), initial, transitions)
    }

    pub fn initial(&self) -> &Network {
        &self.initial
    }

    pub fn base(&self) -> &Network {
        &self.base
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }
}

fn check_steps(steps: usize, cap: usize) -> Result<(), DbnError> {
    if steps == 0 {
        return Err(DbnError::NoSteps);
    }
    if steps > cap {
        return Err(DbnError::StepCapExceeded { steps, cap });
    }
    if cap > DEFAULT_STEP_CAP && steps > DEFAULT_STEP_CAP {
        log::warn!("running {steps} slices, above the default cap of {DEFAULT_STEP_CAP}");
    }
    Ok(())
}

pub fn slice_name(node: &NodeId, t: usize) -> NodeId {
    NodeId::new(format!("{node}@{t}"))
}

/// Flatten `steps` slices into one network, with the default step cap.
pub fn unroll(tsn: &TwoSliceNetwork, steps: usize) -> Result<Network, DbnError> {
    unroll_with_cap(tsn, steps, DEFAULT_STEP_CAP)
}

pub fn unroll_with_cap(
    tsn: &TwoSliceNetwork,
    steps: usize,
    cap: usize,
) -> Result<Network, DbnError> {
    check_steps(steps, cap)?;
    let mut specs = Vec::new();
    let mut cpts = Vec::new();
    let (init_specs, init_cpts) = tsn.initial.to_parts();
    for (spec, cpt) in init_specs.into_iter().zip(init_cpts) {
        specs.push(NodeSpec {
            id: slice_name(&spec.id, 0),
            states: spec.states,
            parents: spec.parents.iter().map(|p| slice_name(p, 0)).collect(),
        });
        cpts.push(cpt);
    }
    let (base_specs, base_cpts) = tsn.base.to_parts();
    for t in 1..steps {
        for (spec, cpt) in base_specs.iter().zip(&base_cpts) {
            let node = tsn.base.require(spec.id.as_str())?;
            let here = spec.parents.iter().map(|p| slice_name(p, t));
            let (parents, table) = match tsn.transition_of[node] {
                Some(slot) => {
                    let tr = &tsn.transitions[slot];
                    let prev = tr.temporal_parents.iter().map(|p| slice_name(p, t - 1));
                    (prev.chain(here).collect(), tr.cpt.clone())
                }
                None => (here.collect(), cpt.clone()),
            };
            specs.push(NodeSpec {
                id: slice_name(&spec.id, t),
                states: spec.states.clone(),
                parents,
            });
            cpts.push(table);
        }
    }
    let mut metadata = tsn.base.metadata().clone();
    metadata.insert("unrolled_steps".into(), serde_json::json!(steps));
    Ok(Network::from_parts(
        format!("{}-unrolled", tsn.base.name()),
        specs,
        cpts,
        metadata,
    )?)
}

/// Marginal trajectory of one monitored node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeTrajectory {
    pub node: NodeId,
    pub states: Vec<String>,
    /// `probabilities[step][state]`.
    pub probabilities: Vec<Vec<f64>>,
}

impl NodeTrajectory {
    pub fn state_series(&self, state: &str) -> Option<Vec<f64>> {
        let s = self.states.iter().position(|x| x == state)?;
        Some(self.probabilities.iter().map(|p| p[s]).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryResult {
    pub step_hours: f64,
    pub steps: usize,
    pub series: Vec<NodeTrajectory>,
}

impl TrajectoryResult {
    pub fn node(&self, id: &str) -> Option<&NodeTrajectory> {
        self.series.iter().find(|s| s.node.as_str() == id)
    }
}

/// Forward filtering with the default step cap.
pub fn filter(
    tsn: &TwoSliceNetwork,
    steps: usize,
    monitored: &[NodeId],
    step_hours: f64,
) -> Result<TrajectoryResult, DbnError> {
    filter_with_cap(tsn, steps, monitored, step_hours, DEFAULT_STEP_CAP)
}

/// Exact forward filtering: the joint over the interface nodes is carried from
/// slice to slice, so each step costs one small elimination regardless of `t`.
pub fn filter_with_cap(
    tsn: &TwoSliceNetwork,
    steps: usize,
    monitored: &[NodeId],
    step_hours: f64,
    cap: usize,
) -> Result<TrajectoryResult, DbnError> {
    check_steps(steps, cap)?;
    let base = &tsn.base;
    let n = base.len();
    let targets: Vec<usize> = monitored
        .iter()
        .map(|m| base.require(m.as_str()))
        .collect::<Result<_, _>>()?;
    // Previous-slice copy of base node i is variable n + i.
    let priority = |v: usize| if v < n { base.declaration_index(v) } else { v };

    let mut series: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(steps); targets.len()];
    let mut interface_belief: Option<Factor> = None;

    for t in 0..steps {
        let mut factors: Vec<Factor> = Vec::with_capacity(n + 1);
        if t == 0 {
            let init = &tsn.initial;
            let to_base: Vec<usize> = (0..init.len())
                .map(|i| base.require(init.id(i).as_str()))
                .collect::<Result<_, _>>()?;
            for i in 0..init.len() {
                factors.push(Factor::from_cpt(init, i, |k| to_base[k]));
            }
        } else {
            factors.push(
                interface_belief
                    .take()
                    .expect("belief carried from previous slice"),
            );
            for i in 0..n {
                match tsn.transition_of[i] {
                    Some(slot) => {
                        let tr = &tsn.transitions[slot];
                        let mut scope = vec![i];
                        let mut cards = vec![base.cardinality(i)];
                        for p in &tr.temporal_parents {
                            let pi = base.require(p.as_str())?;
                            scope.push(n + pi);
                            cards.push(base.cardinality(pi));
                        }
                        for &p in base.parents(i) {
                            scope.push(p);
                            cards.push(base.cardinality(p));
                        }
                        factors.push(Factor::new(scope, cards, tr.cpt.values().to_vec()));
                    }
                    None => factors.push(Factor::from_cpt(base, i, |k| k)),
                }
            }
        }

        for (slot, &m) in targets.iter().enumerate() {
            let table = eliminate(factors.clone(), &[m], priority).into_values();
            let z: f64 = table.iter().sum();
            if z.is_nan() || z <= 0.0 {
                return Err(InferenceError::InconsistentEvidence.into());
            }
            series[slot].push(table.iter().map(|p| p / z).collect());
        }

        if t + 1 < steps {
            let joint = eliminate(factors, &tsn.interface, priority);
            let z = joint.sum();
            let scope = tsn.interface.iter().map(|&i| n + i).collect();
            let values = joint.values().iter().map(|p| p / z).collect();
            interface_belief = Some(Factor::new(scope, joint.cards().to_vec(), values));
        }
    }

    Ok(TrajectoryResult {
        step_hours,
        steps,
        series: targets
            .iter()
            .zip(series)
            .map(|(&m, probabilities)| NodeTrajectory {
                node: base.id(m).clone(),
                states: base.spec(m).states.clone(),
                probabilities,
            })
            .collect(),
    })
}

/// Per-step failure probabilities for a set of components, keyed by node.
pub fn per_step_rates(
    annual: &BTreeMap<NodeId, f64>,
    step_hours: f64,
) -> Result<Vec<(NodeId, f64)>, DbnError> {
    annual
        .iter()
        .map(|(n, &p)| Ok((n.clone(), annual_to_step(p, step_hours)?)))
        .collect()
}
