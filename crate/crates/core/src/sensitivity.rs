//! One-way parameter sensitivity of a target posterior (tornado analysis).
//!
//! Each CPT entry is swept over a small interval around its value while the
//! other entries of its column are rescaled proportionally, and the target
//! posterior is recomputed exactly at every sweep point.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::inference::{posterior_ve, InferenceError, Query};
use crate::network::{Evidence, ModelError, Network, NodeId};

pub const DEFAULT_SWEEP: f64 = 0.1;
pub const DEFAULT_POINTS: usize = 11;

/// Additive half-width, as a multiple of `sweep`, for entries sitting at 0 or 1.
pub const EDGE_STEP: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("sweep {0} must lie in (0, 1]")]
    InvalidSweep(f64),
    #[error("points must be odd and at least 3, got {0}")]
    InvalidPoints(usize),
    #[error("target `{0}` is observed")]
    TargetObserved(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTarget {
    pub node: NodeId,
    pub state: String,
    pub evidence: Evidence,
}

impl SensitivityTarget {
    pub fn new(node: impl Into<NodeId>, state: impl Into<String>) -> Self {
        SensitivityTarget {
            node: node.into(),
            state: state.into(),
            evidence: Evidence::new(),
        }
    }

    pub fn with_evidence(mut self, evidence: Evidence) -> Self {
        self.evidence = evidence;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TornadoOptions {
    /// Relative half-width of the sweep.
    pub sweep: f64,
    pub points: usize,
    /// Only sweep the priors of root nodes.
    pub roots_only: bool,
    /// Also sweep the target node's own CPT.
    pub include_target: bool,
}

impl Default for TornadoOptions {
    fn default() -> Self {
        TornadoOptions {
            sweep: DEFAULT_SWEEP,
            points: DEFAULT_POINTS,
            roots_only: false,
            include_target: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TornadoEntry {
    pub node: NodeId,
    pub state: String,
    /// Parent configuration, e.g. `a=TRUE;b=FALSE` (empty for roots).
    pub parent_config: String,
    pub declaration: usize,
    pub config_index: usize,
    pub state_index: usize,
    /// Unperturbed parameter value and the ends of its sweep interval.
    pub parameter: f64,
    pub parameter_low: f64,
    pub parameter_high: f64,
    /// True when the interval was additive because the entry sits at 0 or 1.
    pub additive: bool,
    /// Unperturbed target posterior.
    pub baseline: f64,
    /// Smallest and largest target posterior over the sweep points.
    pub low: f64,
    pub high: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, Copy)]
struct Parameter {
    node: usize,
    column: usize,
    state: usize,
}

/// Swept values: `points` values from `lo` to `hi` with the exact baseline
/// in the middle.
pub fn sweep_grid(p: f64, sweep: f64, points: usize) -> (Vec<f64>, bool) {
    let additive = p <= 0.0 || p >= 1.0;
    let (lo, hi) = if additive {
        (
            (p - sweep * EDGE_STEP).max(0.0),
            (p + sweep * EDGE_STEP).min(1.0),
        )
    } else {
        ((p * (1.0 - sweep)).max(0.0), (p * (1.0 + sweep)).min(1.0))
    };
    let half = points / 2;
    let mut grid = Vec::with_capacity(points);
    for i in 0..half {
        grid.push(lo + (p - lo) * i as f64 / half as f64);
    }
    grid.push(p);
    for i in 1..=half {
        grid.push(if i == half {
            hi
        } else {
            p + (hi - p) * i as f64 / half as f64
        });
    }
    (grid, additive)
}

/// Column with entry `state` set to `x` and the rest rescaled to keep the sum.
pub fn covary(column: &[f64], state: usize, x: f64) -> Vec<f64> {
    let rest: f64 = column
        .iter()
        .enumerate()
        .filter(|&(s, _)| s != state)
        .map(|(_, v)| v)
        .sum();
    let others = (column.len() - 1) as f64;
    column
        .iter()
        .enumerate()
        .map(|(s, &v)| {
            if s == state {
                x
            } else if rest > 0.0 {
                v * (1.0 - x) / rest
            } else {
                (1.0 - x) / others
            }
        })
        .collect()
}

fn parameters(net: &Network, target: usize, options: &TornadoOptions) -> Vec<Parameter> {
    let mut nodes: Vec<usize> = (0..net.len())
        .filter(|&n| !options.roots_only || net.parents(n).is_empty())
        .filter(|&n| options.include_target || n != target)
        .collect();
    nodes.sort_by_key(|&n| net.declaration_index(n));
    let mut out = Vec::new();
    for node in nodes {
        let card = net.cardinality(node);
        // A binary column has one free parameter; its FALSE entry mirrors TRUE.
        let states = if card == 2 { 1 } else { card };
        for column in 0..net.cpt(node).columns() {
            for state in 0..states {
                out.push(Parameter {
                    node,
                    column,
                    state,
                });
            }
        }
    }
    out
}

fn target_probability(
    net: &Network,
    query: &Query,
    target: &NodeId,
    state: &str,
) -> Result<f64, SensitivityError> {
    let post = posterior_ve(net, query)?;
    Ok(post
        .probability(target.as_str(), state)
        .expect("target state validated before the sweep"))
}

/// Tornado data ranked by descending spread, ties by node declaration index,
/// parent configuration and state.
pub fn tornado(
    net: &Network,
    target: &SensitivityTarget,
    options: &TornadoOptions,
) -> Result<Vec<TornadoEntry>, SensitivityError> {
    if !(options.sweep > 0.0 && options.sweep <= 1.0) {
        return Err(SensitivityError::InvalidSweep(options.sweep));
    }
    if options.points < 3 || options.points.is_multiple_of(2) {
        return Err(SensitivityError::InvalidPoints(options.points));
    }
    let t = net.require(target.node.as_str())?;
    net.state_index(t, &target.state)?;
    if target.evidence.contains(target.node.as_str()) {
        return Err(SensitivityError::TargetObserved(target.node.to_string()));
    }
    let query = Query::new([target.node.clone()], target.evidence.clone());
    let baseline = target_probability(net, &query, &target.node, &target.state)?;

    let observed: Vec<usize> = target
        .evidence
        .resolve(net)?
        .into_iter()
        .map(|(v, _)| v)
        .collect();
    let requisite = net.requisite_cpts(&[t], &observed);

    let params = parameters(net, t, options);
    let mut entries = params
        .par_iter()
        .map(|prm| {
            let cpt = net.cpt(prm.node);
            let column = cpt.column(prm.column);
            let p = column[prm.state];
            let (grid, additive) = sweep_grid(p, options.sweep, options.points);
            let mut low = baseline;
            let mut high = baseline;
            if requisite[prm.node] {
                for (i, &x) in grid.iter().enumerate() {
                    if i == options.points / 2 {
                        continue;
                    }
                    let mut swept = cpt.clone();
                    swept.set_column(prm.column, &covary(&column, prm.state, x));
                    let perturbed = net.with_cpt(prm.node, swept);
                    // The posterior is undefined where the sweep makes the evidence impossible.
                    let value =
                        match target_probability(&perturbed, &query, &target.node, &target.state) {
                            Err(SensitivityError::Inference(
                                InferenceError::InconsistentEvidence,
                            )) => continue,
                            other => other?,
                        };
                    low = low.min(value);
                    high = high.max(value);
                }
            }
            Ok(TornadoEntry {
                node: net.id(prm.node).clone(),
                state: net.spec(prm.node).states[prm.state].clone(),
                parent_config: net.column_label(prm.node, prm.column),
                declaration: net.declaration_index(prm.node),
                config_index: prm.column,
                state_index: prm.state,
                parameter: p,
                parameter_low: grid[0],
                parameter_high: grid[grid.len() - 1],
                additive,
                baseline,
                low,
                high,
                spread: high - low,
            })
        })
        .collect::<Result<Vec<_>, SensitivityError>>()?;
    rank_entries(&mut entries);
    Ok(entries)
}

pub fn rank_entries(entries: &mut [TornadoEntry]) {
    entries.sort_by(|a, b| {
        b.spread
            .total_cmp(&a.spread)
            .then(a.declaration.cmp(&b.declaration))
            .then(a.config_index.cmp(&b.config_index))
            .then(a.state_index.cmp(&b.state_index))
    });
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeImportance {
    pub node: NodeId,
    pub spread: f64,
}

/// Largest spread per node, descending; ties by declaration index.
pub fn node_importance(entries: &[TornadoEntry]) -> Vec<NodeImportance> {
    let mut best: Vec<(usize, NodeImportance)> = Vec::new();
    for e in entries {
        match best.iter_mut().find(|(_, n)| n.node == e.node) {
            Some((_, n)) => n.spread = n.spread.max(e.spread),
            None => best.push((
                e.declaration,
                NodeImportance {
                    node: e.node.clone(),
                    spread: e.spread,
                },
            )),
        }
    }
    best.sort_by(|(da, a), (db, b)| b.spread.total_cmp(&a.spread).then(da.cmp(db)));
    best.into_iter().map(|(_, n)| n).collect()
}
