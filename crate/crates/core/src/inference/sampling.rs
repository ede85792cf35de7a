//! Likelihood weighting: forward sampling with evidence clamped, each sample
//! weighted by the likelihood of the evidence given its sampled parents.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::network::Network;

use super::{marginal_from, InferenceError, Posterior, Query};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LikelihoodWeighting {
    pub samples: usize,
    pub seed: u64,
}

/// Estimate plus weight diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct LwEstimate {
    pub posterior: Posterior,
    pub effective_sample_size: f64,
    pub min_weight: f64,
    pub max_weight: f64,
}

impl LikelihoodWeighting {
    pub fn new(samples: usize, seed: u64) -> Self {
        LikelihoodWeighting { samples, seed }
    }

    pub fn run(&self, net: &Network, query: &Query) -> Result<LwEstimate, InferenceError> {
        if self.samples == 0 {
            return Err(InferenceError::NoSamples);
        }
        let (targets, evidence) = query.resolve(net)?;
        let mut clamp = vec![None; net.len()];
        for &(node, state) in &evidence {
            clamp[node] = Some(state);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut states = vec![0usize; net.len()];
        let mut parent_buf = Vec::new();
        // Per target state: sum of w and sum of w^2 over samples in that state.
        let mut sw: Vec<Vec<f64>> = targets
            .iter()
            .map(|&t| vec![0.0; net.cardinality(t)])
            .collect();
        let mut sw2 = sw.clone();
        let (mut total_w, mut total_w2) = (0.0f64, 0.0f64);
        let (mut min_w, mut max_w) = (f64::INFINITY, 0.0f64);

        for _ in 0..self.samples {
            let mut w = 1.0;
            for node in 0..net.len() {
                parent_buf.clear();
                parent_buf.extend(net.parents(node).iter().map(|&p| states[p]));
                let column = net.column_index(node, &parent_buf);
                let cpt = net.cpt(node);
                match clamp[node] {
                    Some(s) => {
                        states[node] = s;
                        w *= cpt.get(s, column);
                    }
                    None => {
                        let u: f64 = rng.gen();
                        let card = net.cardinality(node);
                        let mut cum = 0.0;
                        let mut chosen = card - 1;
                        for s in 0..card {
                            cum += cpt.get(s, column);
                            if u < cum {
                                chosen = s;
                                break;
                            }
                        }
                        states[node] = chosen;
                    }
                }
            }
            total_w += w;
            total_w2 += w * w;
            min_w = min_w.min(w);
            max_w = max_w.max(w);
            for (slot, &t) in targets.iter().enumerate() {
                sw[slot][states[t]] += w;
                sw2[slot][states[t]] += w * w;
            }
        }

        if total_w.is_nan() || total_w <= 0.0 {
            return Err(InferenceError::AllWeightsZero);
        }
        let marginals = targets
            .iter()
            .enumerate()
            .map(|(slot, &t)| {
                let probs: Vec<f64> = sw[slot].iter().map(|w| w / total_w).collect();
                // Delta-method standard error of the self-normalized estimator.
                let errs: Vec<f64> = probs
                    .iter()
                    .zip(&sw2[slot])
                    .map(|(&p, &s2)| {
                        let var = s2 * (1.0 - 2.0 * p) + p * p * total_w2;
                        var.max(0.0).sqrt() / total_w
                    })
                    .collect();
                let mut m = marginal_from(net, t, probs);
                m.std_errors = Some(errs);
                m
            })
            .collect();
        Ok(LwEstimate {
            posterior: Posterior {
                marginals,
                log_evidence: (total_w / self.samples as f64).ln(),
            },
            effective_sample_size: total_w * total_w / total_w2,
            min_weight: min_w,
            max_weight: max_w,
        })
    }
}

/// Likelihood-weighted posterior with per-state standard errors.
pub fn posterior_lw(
    net: &Network,
    query: &Query,
    samples: usize,
    seed: u64,
) -> Result<Posterior, InferenceError> {
    LikelihoodWeighting::new(samples, seed)
        .run(net, query)
        .map(|e| e.posterior)
}
