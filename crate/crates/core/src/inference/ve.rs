use crate::factor::{eliminate, Factor};
use crate::network::{Evidence, Network, NodeId};

use super::{marginal_from, InferenceError, Posterior, Query};

/// CPT factors of the nodes relevant to `roots` (their ancestral set), with evidence
/// applied by restriction. Nodes outside the ancestral set are barren and sum to one.
fn evidence_factors(net: &Network, roots: &[usize], evidence: &[(usize, usize)]) -> Vec<Factor> {
    let relevant = net.ancestral_set(roots.iter().copied().chain(evidence.iter().map(|e| e.0)));
    relevant
        .into_iter()
        .map(|node| {
            let mut f = Factor::from_cpt(net, node, |i| i);
            for &(var, state) in evidence {
                f = f.reduce(var, state);
            }
            f
        })
        .collect()
}

/// Exact posterior marginals by variable elimination.
///
/// Each target is computed with its own elimination (min-degree, ties broken by
/// declaration index), after pruning nodes outside the ancestral set of the
/// targets and evidence.
pub fn posterior_ve(net: &Network, query: &Query) -> Result<Posterior, InferenceError> {
    let (targets, evidence) = query.resolve(net)?;
    let priority = |v: usize| net.declaration_index(v);
    let mut marginals = Vec::with_capacity(targets.len());
    let mut log_evidence = None;
    for &t in &targets {
        let factors = evidence_factors(net, &[t], &evidence);
        let table = eliminate(factors, &[t], priority).into_values();
        let z: f64 = table.iter().sum();
        if z.is_nan() || z <= 0.0 {
            return Err(InferenceError::InconsistentEvidence);
        }
        log_evidence.get_or_insert(z.ln());
        marginals.push(marginal_from(net, t, table.iter().map(|p| p / z).collect()));
    }
    Ok(Posterior {
        marginals,
        log_evidence: log_evidence.unwrap_or(0.0),
    })
}

/// Normalized joint posterior over `vars` (row-major, first variable slowest) and
/// P(evidence).
///
/// Variables that are also observed stay in the scope with all mass on the
/// observed state.
pub fn joint_ve(
    net: &Network,
    vars: &[NodeId],
    evidence: &Evidence,
) -> Result<(Vec<f64>, f64), InferenceError> {
    let idx = vars
        .iter()
        .map(|v| net.require(v.as_str()))
        .collect::<Result<Vec<_>, _>>()?;
    let ev = evidence.resolve(net)?;
    let observed: Vec<(usize, usize)> = ev.iter().copied().filter(|e| idx.contains(&e.0)).collect();
    let hidden: Vec<(usize, usize)> = ev.iter().copied().filter(|e| !idx.contains(&e.0)).collect();

    let mut factors = evidence_factors(net, &idx, &hidden);
    // Observed query variables are clamped with indicator factors so they stay in scope.
    for &(var, state) in &observed {
        let card = net.cardinality(var);
        let mut ind = vec![0.0; card];
        ind[state] = 1.0;
        factors.push(Factor::new(vec![var], vec![card], ind));
    }
    let table = eliminate(factors, &idx, |v| net.declaration_index(v)).into_values();
    let z: f64 = table.iter().sum();
    if z.is_nan() || z <= 0.0 {
        return Err(InferenceError::InconsistentEvidence);
    }
    Ok((table.iter().map(|p| p / z).collect(), z))
}
