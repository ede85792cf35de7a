//! Posterior inference over a [`Network`]: exact variable elimination, a full-joint
//! enumeration oracle, and a likelihood-weighting sampler.

use serde::Serialize;
use thiserror::Error;

use crate::network::{Evidence, ModelError, Network, NodeId};

mod enumeration;
mod sampling;
mod ve;

pub use enumeration::{joint_enumeration, posterior_enumeration, ENUMERATION_LIMIT};
pub use sampling::{posterior_lw, LikelihoodWeighting, LwEstimate};
pub use ve::{joint_ve, posterior_ve};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("evidence has probability zero")]
    InconsistentEvidence,
    #[error("joint state space of {size} exceeds the enumeration limit {limit}")]
    StateSpaceTooLarge { size: f64, limit: f64 },
    #[error("every likelihood weight was zero; evidence unreachable by sampling")]
    AllWeightsZero,
    #[error("sample count must be at least 1")]
    NoSamples,
}

/// `(node, state)` index pairs.
pub(crate) type IndexedEvidence = Vec<(usize, usize)>;

/// Target nodes and the evidence to condition on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Query {
    pub targets: Vec<NodeId>,
    pub evidence: Evidence,
}

impl Query {
    pub fn new<I, T>(targets: I, evidence: Evidence) -> Self
    where
        I: IntoIterator<Item = T>,
        T: Into<NodeId>,
    {
        Query {
            targets: targets.into_iter().map(Into::into).collect(),
            evidence,
        }
    }

    pub fn single(target: impl Into<NodeId>) -> Self {
        Query::new([target], Evidence::new())
    }

    /// Resolve targets and evidence to indices, checking the query invariants.
    pub(crate) fn resolve(
        &self,
        net: &Network,
    ) -> Result<(Vec<usize>, IndexedEvidence), InferenceError> {
        if self.targets.is_empty() {
            return Err(InferenceError::InvalidQuery("no targets".into()));
        }
        let mut targets = Vec::with_capacity(self.targets.len());
        for t in &self.targets {
            let i = net.require(t.as_str())?;
            if targets.contains(&i) {
                return Err(InferenceError::InvalidQuery(format!(
                    "target `{t}` listed twice"
                )));
            }
            if self.evidence.contains(t.as_str()) {
                return Err(InferenceError::InvalidQuery(format!(
                    "target `{t}` is also observed"
                )));
            }
            targets.push(i);
        }
        let evidence = self.evidence.resolve(net)?;
        Ok((targets, evidence))
    }
}

/// Posterior distribution of one target node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Marginal {
    pub node: NodeId,
    pub states: Vec<String>,
    pub probabilities: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<f64>>,
}

impl Marginal {
    pub fn probability(&self, state: &str) -> Option<f64> {
        self.states
            .iter()
            .position(|s| s == state)
            .map(|i| self.probabilities[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Posterior {
    pub marginals: Vec<Marginal>,
    /// Natural log of P(evidence); 0 for an empty evidence set up to rounding.
    pub log_evidence: f64,
}

impl Posterior {
    pub fn marginal(&self, node: &str) -> Option<&Marginal> {
        self.marginals.iter().find(|m| m.node.as_str() == node)
    }

    pub fn probability(&self, node: &str, state: &str) -> Option<f64> {
        self.marginal(node).and_then(|m| m.probability(state))
    }

    /// Largest absolute difference between matching entries of two posteriors.
    pub fn max_abs_diff(&self, other: &Posterior) -> f64 {
        self.marginals
            .iter()
            .zip(&other.marginals)
            .flat_map(|(a, b)| {
                a.probabilities
                    .iter()
                    .zip(&b.probabilities)
                    .map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max)
    }
}

pub(crate) fn marginal_from(net: &Network, node: usize, probabilities: Vec<f64>) -> Marginal {
    Marginal {
        node: net.id(node).clone(),
        states: net.spec(node).states.clone(),
        probabilities,
        std_errors: None,
    }
}
