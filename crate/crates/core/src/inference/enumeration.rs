//! Brute-force summation over the full joint distribution. Used as an oracle.

use crate::network::{Evidence, Network, NodeId};

use super::{marginal_from, InferenceError, Posterior, Query};

/// Largest joint state space (product of all node cardinalities) enumerated.
pub const ENUMERATION_LIMIT: f64 = (1u64 << 26) as f64;

fn check_size(net: &Network) -> Result<(), InferenceError> {
    let size: f64 = (0..net.len()).map(|i| net.cardinality(i) as f64).product();
    if size > ENUMERATION_LIMIT {
        return Err(InferenceError::StateSpaceTooLarge {
            size,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(())
}

/// Depth-first walk over every joint state consistent with `clamp`, calling
/// `visit(states, probability)` at each leaf. Branches with zero partial product
/// are skipped since they contribute nothing.
fn walk(net: &Network, clamp: &[Option<usize>], visit: &mut dyn FnMut(&[usize], f64)) {
    let n = net.len();
    let mut states = vec![0usize; n];
    let mut parent_buf = Vec::new();
    fn rec(
        net: &Network,
        depth: usize,
        acc: f64,
        clamp: &[Option<usize>],
        states: &mut Vec<usize>,
        parent_buf: &mut Vec<usize>,
        visit: &mut dyn FnMut(&[usize], f64),
    ) {
        if depth == net.len() {
            visit(states, acc);
            return;
        }
        parent_buf.clear();
        parent_buf.extend(net.parents(depth).iter().map(|&p| states[p]));
        let column = net.column_index(depth, parent_buf);
        let cpt = net.cpt(depth);
        let range = match clamp[depth] {
            Some(s) => s..s + 1,
            None => 0..net.cardinality(depth),
        };
        for s in range {
            let p = acc * cpt.get(s, column);
            if p == 0.0 {
                continue;
            }
            states[depth] = s;
            rec(net, depth + 1, p, clamp, states, parent_buf, visit);
        }
    }
    rec(net, 0, 1.0, clamp, &mut states, &mut parent_buf, visit);
}

fn clamp_vector(net: &Network, evidence: &[(usize, usize)]) -> Vec<Option<usize>> {
    let mut clamp = vec![None; net.len()];
    for &(node, state) in evidence {
        clamp[node] = Some(state);
    }
    clamp
}

/// Exact posterior by summing the full joint. Refuses networks whose joint space
/// exceeds [`ENUMERATION_LIMIT`].
pub fn posterior_enumeration(net: &Network, query: &Query) -> Result<Posterior, InferenceError> {
    check_size(net)?;
    let (targets, evidence) = query.resolve(net)?;
    let clamp = clamp_vector(net, &evidence);
    let mut acc: Vec<Vec<f64>> = targets
        .iter()
        .map(|&t| vec![0.0; net.cardinality(t)])
        .collect();
    let mut z = 0.0;
    walk(net, &clamp, &mut |states, p| {
        z += p;
        for (slot, &t) in targets.iter().enumerate() {
            acc[slot][states[t]] += p;
        }
    });
    if z.is_nan() || z <= 0.0 {
        return Err(InferenceError::InconsistentEvidence);
    }
    let marginals = targets
        .iter()
        .zip(acc)
        .map(|(&t, a)| marginal_from(net, t, a.into_iter().map(|p| p / z).collect()))
        .collect();
    Ok(Posterior {
        marginals,
        log_evidence: z.ln(),
    })
}

/// Normalized joint over `vars` (row-major, first slowest) together with P(evidence).
pub fn joint_enumeration(
    net: &Network,
    vars: &[NodeId],
    evidence: &Evidence,
) -> Result<(Vec<f64>, f64), InferenceError> {
    check_size(net)?;
    let idx = vars
        .iter()
        .map(|v| net.require(v.as_str()))
        .collect::<Result<Vec<_>, _>>()?;
    let clamp = clamp_vector(net, &evidence.resolve(net)?);
    let size: usize = idx.iter().map(|&i| net.cardinality(i)).product();
    let mut table = vec![0.0; size];
    let mut z = 0.0;
    walk(net, &clamp, &mut |states, p| {
        z += p;
        let mut cell = 0;
        for &i in &idx {
            cell = cell * net.cardinality(i) + states[i];
        }
        table[cell] += p;
    });
    if z.is_nan() || z <= 0.0 {
        return Err(InferenceError::InconsistentEvidence);
    }
    Ok((table.into_iter().map(|p| p / z).collect(), z))
}
