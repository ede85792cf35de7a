//! Leaky noisy-OR construction of binary CPTs.
//!
//! Each parent state carries an activation strength (0 for the inactive state);
//! P(child = TRUE | config) = 1 - (1 - leak) * prod_i (1 - strength_i[state_i]).

use serde::{Deserialize, Serialize};

use crate::network::Cpt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyOr {
    pub leak: f64,
    /// One strength vector per parent, in parent order, indexed by parent state.
    pub links: Vec<Vec<f64>>,
}

impl NoisyOr {
    /// Binary-parent convenience: `strengths[i]` applies when parent `i` is TRUE.
    pub fn binary(leak: f64, strengths: &[f64]) -> Self {
        NoisyOr {
            leak,
            links: strengths.iter().map(|&s| vec![s, 0.0]).collect(),
        }
    }

    pub fn probability(&self, parent_states: &[usize]) -> f64 {
        let off = self
            .links
            .iter()
            .zip(parent_states)
            .fold(1.0 - self.leak, |acc, (link, &s)| acc * (1.0 - link[s]));
        1.0 - off
    }

    /// Expand to a `TRUE`/`FALSE` CPT, first parent varying slowest.
    pub fn to_cpt(&self) -> Cpt {
        let cards: Vec<usize> = self.links.iter().map(Vec::len).collect();
        let columns: usize = cards.iter().product();
        let mut states = vec![0usize; cards.len()];
        let mut p_true = Vec::with_capacity(columns);
        for _ in 0..columns {
            p_true.push(self.probability(&states));
            for k in (0..cards.len()).rev() {
                states[k] += 1;
                if states[k] < cards[k] {
                    break;
                }
                states[k] = 0;
            }
        }
        Cpt::binary(&p_true)
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=1.0).contains(&self.leak)
            && self
                .links
                .iter()
                .all(|l| !l.is_empty() && l.iter().all(|s| (0.0..=1.0).contains(s)))
    }
}
