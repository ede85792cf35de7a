//! Shared helpers for the integration tests: a brute-force joint oracle that only
//! touches the public network accessors, and a random network generator.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskbn::decision::DecisionNetwork;
use riskbn::inference::{posterior_ve, Query};
use riskbn::{build_network, Cpt, Evidence, Network, NodeId, NodeSpec};

/// Full joint distribution, row-major over internal node indices (node 0 slowest).
pub struct Joint {
    pub cards: Vec<usize>,
    pub probs: Vec<f64>,
}

pub fn joint(net: &Network) -> Joint {
    let n = net.len();
    let cards: Vec<usize> = (0..n).map(|i| net.cardinality(i)).collect();
    let total: usize = cards.iter().product();
    let mut probs = Vec::with_capacity(total);
    let mut states = vec![0usize; n];
    let mut parent_states = Vec::new();
    for _ in 0..total {
        let mut p = 1.0;
        for i in 0..n {
            parent_states.clear();
            parent_states.extend(net.parents(i).iter().map(|&q| states[q]));
            p *= net
                .cpt(i)
                .get(states[i], net.column_index(i, &parent_states));
        }
        probs.push(p);
        for k in (0..n).rev() {
            states[k] += 1;
            if states[k] < cards[k] {
                break;
            }
            states[k] = 0;
        }
    }
    Joint { cards, probs }
}

impl Joint {
    fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.cards.len()];
        for k in (0..self.cards.len().saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.cards[k + 1];
        }
        s
    }

    /// Unnormalized marginal of `target` restricted to `evidence` (index pairs).
    pub fn marginal(&self, target: usize, evidence: &[(usize, usize)]) -> (Vec<f64>, f64) {
        let strides = self.strides();
        let mut out = vec![0.0; self.cards[target]];
        'outer: for (idx, &p) in self.probs.iter().enumerate() {
            for &(v, s) in evidence {
                if (idx / strides[v]) % self.cards[v] != s {
                    continue 'outer;
                }
            }
            out[(idx / strides[target]) % self.cards[target]] += p;
        }
        let z: f64 = out.iter().sum();
        (out.iter().map(|p| p / z).collect(), z)
    }
}

pub fn indices(net: &Network, evidence: &Evidence) -> Vec<(usize, usize)> {
    evidence
        .iter()
        .map(|(n, s)| {
            let i = net.index_of(n.as_str()).unwrap();
            (i, net.state_index(i, s).unwrap())
        })
        .collect()
}

/// Random DAG with up to `max_nodes` nodes of 2-3 states and up to 3 parents.
pub fn random_network(seed: u64, max_nodes: usize) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes);
    let mut specs = Vec::new();
    let mut cpts = Vec::new();
    let mut cards = Vec::new();
    for i in 0..n {
        let card = if rng.gen_bool(0.7) { 2 } else { 3 };
        let mut parents = Vec::new();
        for j in 0..i {
            if parents.len() < 3 && rng.gen_bool(0.4) {
                parents.push(j);
            }
        }
        let columns: usize = parents.iter().map(|&p| cards[p]).product();
        let mut values = vec![0.0; card * columns];
        for c in 0..columns {
            let raw: Vec<f64> = (0..card).map(|_| rng.gen_range(0.01..1.0)).collect();
            let sum: f64 = raw.iter().sum();
            for (s, r) in raw.iter().enumerate() {
                values[s * columns + c] = r / sum;
            }
        }
        let states: Vec<String> = (0..card).map(|s| format!("s{s}")).collect();
        specs.push(NodeSpec::new(
            format!("n{i}"),
            states,
            parents.iter().map(|p| format!("n{p}")).collect::<Vec<_>>(),
        ));
        cpts.push(Cpt::from_flat(card, values));
        cards.push(card);
    }
    build_network(specs, cpts).unwrap()
}

/// Random evidence on up to `max` distinct nodes other than `exclude`.
pub fn random_evidence(
    net: &Network,
    rng: &mut ChaCha8Rng,
    max: usize,
    exclude: usize,
) -> Evidence {
    let k = rng.gen_range(0..=max);
    let mut ev = Evidence::new();
    let mut used = vec![exclude];
    while ev.len() < k && used.len() < net.len() {
        let i = rng.gen_range(0..net.len());
        if used.contains(&i) {
            continue;
        }
        used.push(i);
        let s = rng.gen_range(0..net.cardinality(i));
        ev = ev.with(net.id(i).clone(), net.spec(i).states[s].clone());
    }
    ev
}

pub fn with_decisions(ev: &Evidence, assignment: &[(NodeId, String)]) -> Evidence {
    assignment
        .iter()
        .fold(ev.clone(), |e, (d, a)| e.with(d.clone(), a.clone()))
}

/// EU by the chain rule over utility parents, one exact posterior per factor.
pub fn oracle_eu(dn: &DecisionNetwork, assignment: &[(NodeId, String)], ev: &Evidence) -> f64 {
    let net = dn.network();
    let mut total = 0.0;
    for u in dn.utilities() {
        let cards: Vec<usize> = u
            .parents
            .iter()
            .map(|p| net.cardinality(net.index_of(p.as_str()).unwrap()))
            .collect();
        let cells: usize = cards.iter().product();
        for cell in 0..cells {
            let mut rem = cell;
            let mut states = vec![0; cards.len()];
            for k in (0..cards.len()).rev() {
                states[k] = rem % cards[k];
                rem /= cards[k];
            }
            let mut e = with_decisions(ev, assignment);
            let mut p = 1.0;
            for (parent, &s) in u.parents.iter().zip(&states) {
                let i = net.index_of(parent.as_str()).unwrap();
                let label = &net.spec(i).states[s];
                if let Some(fixed) = e.get(parent.as_str()) {
                    if fixed != label {
                        p = 0.0;
                    }
                    continue;
                }
                let post = posterior_ve(net, &Query::new([parent.clone()], e.clone())).unwrap();
                p *= post.probability(parent.as_str(), label).unwrap();
                if p == 0.0 {
                    break;
                }
                e = e.with(parent.clone(), label.clone());
            }
            total += p * u.table[cell];
        }
    }
    total
}
