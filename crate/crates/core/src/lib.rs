//! Discrete Bayesian, dynamic and decision networks with one-way sensitivity
//! analysis and PHA scoring, plus the bundled Eely seabed and confined models.

pub mod cli;
pub mod dbn;
pub mod decision;
pub mod factor;
pub mod hazid;
pub mod inference;
pub mod model_file;
pub mod models;
pub mod network;
pub mod noisy_or;
pub mod report;
pub mod sensitivity;

pub use network::{build_network, Cpt, Evidence, ModelError, Network, NodeId, NodeSpec};
