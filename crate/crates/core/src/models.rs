//! Bundled Eely scenario models and failure-rate ingestion.
//!
//! Both scenarios share one structure. They differ in the priors of the
//! environmental roots, mission complexity and the remote-link roots, listed
//! under `scenario_priors` in each model's metadata. Altitude control,
//! navigation and autonomous control use calibrated noisy-OR tables and are
//! marked `reconstructed`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dbn::{annual_to_step, DbnError, TwoSliceNetwork};
use crate::decision::{DecisionError, DecisionNetwork};
use crate::hazid::{parse_pha_csv, HazardRecord, HazidError, Scenario};
use crate::model_file::ModelDocument;
use crate::network::{ModelError, Network, NodeId};

pub const SEABED_MODEL: &str = include_str!("../models/seabed.bn.json");
pub const CONFINED_MODEL: &str = include_str!("../models/confined.bn.json");
pub const FAILURE_RATES: &str = include_str!("../models/failure_rates.csv");
pub const PHA_SEABED: &str = include_str!("../models/pha_seabed.csv");
pub const PHA_CONFINED: &str = include_str!("../models/pha_confined.csv");

pub const DEFAULT_STEP_HOURS: f64 = 1.0;

#[derive(Debug, Error)]
pub enum ModelsError {
    #[error("unknown scenario `{0}` (expected seabed or confined)")]
    UnknownScenario(String),
    #[error("failure-rate file line {line}: {message}")]
    ParseError { line: usize, message: String },
    #[error("failure rate {value} for `{component}` outside [0, 1]")]
    RateOutOfRange { component: String, value: f64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("model metadata has no component `{0}`")]
    MissingComponent(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dbn(#[from] DbnError),
    #[error(transparent)]
    Decision(#[from] DecisionError),
    #[error(transparent)]
    Hazid(#[from] HazidError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRate {
    pub component: String,
    pub p_annual: f64,
    pub source: String,
}

pub fn parse_failure_rates(text: &str) -> Result<Vec<FailureRate>, ModelsError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<FailureRate>().enumerate() {
        // Line 1 is the header.
        let rate = row.map_err(|e| ModelsError::ParseError {
            line: i + 2,
            message: e.to_string(),
        })?;
        if !(0.0..=1.0).contains(&rate.p_annual) {
            return Err(ModelsError::RateOutOfRange {
                component: rate.component,
                value: rate.p_annual,
            });
        }
        out.push(rate);
    }
    Ok(out)
}

pub fn load_failure_rates(path: &Path) -> Result<Vec<FailureRate>, ModelsError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_failure_rates(&text)
}

pub fn bundled_failure_rates() -> Vec<FailureRate> {
    parse_failure_rates(FAILURE_RATES).expect("bundled failure rates parse")
}

/// Node id -> component name, from the model's `component_nodes` metadata.
pub fn component_nodes(net: &Network) -> BTreeMap<NodeId, String> {
    net.metadata()
        .get("component_nodes")
        .and_then(|v| v.as_object())
        .map(|m| {
            m.iter()
                .filter_map(|(k, v)| Some((NodeId::new(k.clone()), v.as_str()?.to_owned())))
                .collect()
        })
        .unwrap_or_default()
}

/// Temporal template whose component nodes fail absorbingly at the per-step
/// equivalent of their annual rate; every other node is resampled each slice.
pub fn two_slice(
    net: &Network,
    rates: &[FailureRate],
    step_hours: f64,
) -> Result<TwoSliceNetwork, ModelsError> {
    let mut per_step = Vec::new();
    for (node, component) in component_nodes(net) {
        let rate = rates
            .iter()
            .find(|r| r.component == component)
            .ok_or_else(|| ModelsError::MissingComponent(component.clone()))?;
        per_step.push((node, annual_to_step(rate.p_annual, step_hours)?));
    }
    Ok(TwoSliceNetwork::absorbing(net.clone(), &per_step)?)
}

#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub label: Scenario,
    pub document: ModelDocument,
    pub static_network: Network,
    pub two_slice: TwoSliceNetwork,
    pub decision: DecisionNetwork,
    pub pha: Vec<HazardRecord>,
}

impl ScenarioBundle {
    /// The temporal template at a different step length.
    pub fn two_slice_with_step(&self, step_hours: f64) -> Result<TwoSliceNetwork, ModelsError> {
        two_slice(&self.static_network, &bundled_failure_rates(), step_hours)
    }
}

pub fn scenario(label: &str) -> Result<ScenarioBundle, ModelsError> {
    let scenario =
        Scenario::parse(label).ok_or_else(|| ModelsError::UnknownScenario(label.to_owned()))?;
    let (model, pha) = match scenario {
        Scenario::Seabed => (SEABED_MODEL, PHA_SEABED),
        Scenario::Confined => (CONFINED_MODEL, PHA_CONFINED),
    };
    bundle_from(scenario, ModelDocument::parse(model)?, pha)
}

fn bundle_from(
    label: Scenario,
    document: ModelDocument,
    pha: &str,
) -> Result<ScenarioBundle, ModelsError> {
    let static_network = document.network()?;
    let two_slice = two_slice(
        &static_network,
        &bundled_failure_rates(),
        DEFAULT_STEP_HOURS,
    )?;
    let decision = document.decision_network()?;
    Ok(ScenarioBundle {
        label,
        static_network,
        two_slice,
        decision,
        pha: parse_pha_csv(pha)?,
        document,
    })
}

/// Bundle assembled from a user model file, without PHA records.
pub fn bundle_from_document(document: ModelDocument) -> Result<ScenarioBundle, ModelsError> {
    let label = document
        .metadata
        .get("scenario")
        .and_then(|v| v.as_str())
        .and_then(Scenario::parse)
        .unwrap_or(Scenario::Seabed);
    let static_network = document.network()?;
    let two_slice = two_slice(
        &static_network,
        &bundled_failure_rates(),
        DEFAULT_STEP_HOURS,
    )?;
    let decision = document.decision_network()?;
    Ok(ScenarioBundle {
        label,
        static_network,
        two_slice,
        decision,
        pha: Vec::new(),
        document,
    })
}
