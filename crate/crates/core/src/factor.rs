//! Dense factors over discrete variables and the elimination routine shared by
//! static, dynamic and decision inference.
//!
//! Variables are plain `usize` ids with a cardinality; a factor's table is
//! row-major over its scope with the first variable varying slowest.

use std::collections::BTreeSet;

use crate::network::Network;

#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    scope: Vec<usize>,
    cards: Vec<usize>,
    values: Vec<f64>,
}

impl Factor {
    pub fn new(scope: Vec<usize>, cards: Vec<usize>, values: Vec<f64>) -> Self {
        debug_assert_eq!(scope.len(), cards.len());
        debug_assert_eq!(cards.iter().product::<usize>(), values.len());
        Factor {
            scope,
            cards,
            values,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Factor {
            scope: Vec::new(),
            cards: Vec::new(),
            values: vec![value],
        }
    }

    /// CPT of `node` as a factor over `[node, parents...]`, with variable ids taken
    /// from `var_of` (usually the identity on topological indices).
    pub fn from_cpt(net: &Network, node: usize, var_of: impl Fn(usize) -> usize) -> Self {
        let mut scope = vec![var_of(node)];
        let mut cards = vec![net.cardinality(node)];
        for &p in net.parents(node) {
            scope.push(var_of(p));
            cards.push(net.cardinality(p));
        }
        // The CPT's row-major layout is exactly this scope ordering.
        Factor::new(scope, cards, net.cpt(node).values().to_vec())
    }

    pub fn scope(&self) -> &[usize] {
        &self.scope
    }

    pub fn cards(&self) -> &[usize] {
        &self.cards
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    fn position(&self, var: usize) -> Option<usize> {
        self.scope.iter().position(|&v| v == var)
    }

    fn strides(cards: &[usize]) -> Vec<usize> {
        let mut strides = vec![1; cards.len()];
        for i in (0..cards.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * cards[i + 1];
        }
        strides
    }

    pub fn product(&self, other: &Factor) -> Factor {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        for (&v, &c) in other.scope.iter().zip(&other.cards) {
            if !scope.contains(&v) {
                scope.push(v);
                cards.push(c);
            }
        }
        let sa = Self::strides(&self.cards);
        let sb = Self::strides(&other.cards);
        let stride_a: Vec<usize> = scope
            .iter()
            .map(|&v| self.position(v).map_or(0, |p| sa[p]))
            .collect();
        let stride_b: Vec<usize> = scope
            .iter()
            .map(|&v| other.position(v).map_or(0, |p| sb[p]))
            .collect();
        let total: usize = cards.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut counter = vec![0usize; scope.len()];
        let (mut ia, mut ib) = (0usize, 0usize);
        for _ in 0..total {
            values.push(self.values[ia] * other.values[ib]);
            for k in (0..scope.len()).rev() {
                counter[k] += 1;
                ia += stride_a[k];
                ib += stride_b[k];
                if counter[k] < cards[k] {
                    break;
                }
                ia -= stride_a[k] * cards[k];
                ib -= stride_b[k] * cards[k];
                counter[k] = 0;
            }
        }
        Factor::new(scope, cards, values)
    }

    fn split(&self, pos: usize) -> (usize, usize, usize) {
        let outer: usize = self.cards[..pos].iter().product();
        let inner: usize = self.cards[pos + 1..].iter().product();
        (outer, self.cards[pos], inner)
    }

    fn without(&self, pos: usize, values: Vec<f64>) -> Factor {
        let mut scope = self.scope.clone();
        let mut cards = self.cards.clone();
        scope.remove(pos);
        cards.remove(pos);
        Factor::new(scope, cards, values)
    }

    /// Sum a variable out. Absent variables leave the factor unchanged.
    pub fn sum_out(&self, var: usize) -> Factor {
        let Some(pos) = self.position(var) else {
            return self.clone();
        };
        let (outer, card, inner) = self.split(pos);
        let mut values = vec![0.0; outer * inner];
        for o in 0..outer {
            for s in 0..card {
                let base = (o * card + s) * inner;
                for i in 0..inner {
                    values[o * inner + i] += self.values[base + i];
                }
            }
        }
        self.without(pos, values)
    }

    /// Restrict a variable to one state and drop it from the scope.
    pub fn reduce(&self, var: usize, state: usize) -> Factor {
        let Some(pos) = self.position(var) else {
            return self.clone();
        };
        let (outer, card, inner) = self.split(pos);
        let mut values = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * card + state) * inner;
            values.extend_from_slice(&self.values[base..base + inner]);
        }
        self.without(pos, values)
    }

    /// Permute the table so the scope equals `order` (which must be a permutation).
    pub fn reorder(&self, order: &[usize]) -> Factor {
        if order == self.scope.as_slice() {
            return self.clone();
        }
        debug_assert_eq!(order.len(), self.scope.len());
        let src = Self::strides(&self.cards);
        let cards: Vec<usize> = order
            .iter()
            .map(|&v| self.cards[self.position(v).expect("variable in scope")])
            .collect();
        let stride: Vec<usize> = order
            .iter()
            .map(|&v| src[self.position(v).expect("variable in scope")])
            .collect();
        let total = self.values.len();
        let mut values = Vec::with_capacity(total);
        let mut counter = vec![0usize; order.len()];
        let mut idx = 0usize;
        for _ in 0..total {
            values.push(self.values[idx]);
            for k in (0..order.len()).rev() {
                counter[k] += 1;
                idx += stride[k];
                if counter[k] < cards[k] {
                    break;
                }
                idx -= stride[k] * cards[k];
                counter[k] = 0;
            }
        }
        Factor::new(order.to_vec(), cards, values)
    }
}

/// Multiply all factors and sum out every variable not in `keep`.
///
/// Elimination order is greedy min-degree on the interaction graph; ties go to the
/// smallest `priority(var)`. The result's scope is exactly `keep` (in that order);
/// every kept variable must occur in at least one factor.
pub fn eliminate(
    mut factors: Vec<Factor>,
    keep: &[usize],
    priority: impl Fn(usize) -> usize,
) -> Factor {
    let keep_set: BTreeSet<usize> = keep.iter().copied().collect();
    let mut neighbours: std::collections::BTreeMap<usize, BTreeSet<usize>> = Default::default();
    for f in &factors {
        for &v in f.scope() {
            let entry = neighbours.entry(v).or_default();
            entry.extend(f.scope().iter().copied().filter(|&u| u != v));
        }
    }
    let mut pending: BTreeSet<usize> = neighbours
        .keys()
        .copied()
        .filter(|v| !keep_set.contains(v))
        .collect();

    while !pending.is_empty() {
        let var = *pending
            .iter()
            .min_by_key(|&&v| (neighbours[&v].len(), priority(v), v))
            .expect("pending is non-empty");
        pending.remove(&var);

        let (touching, rest): (Vec<Factor>, Vec<Factor>) =
            factors.into_iter().partition(|f| f.scope().contains(&var));
        factors = rest;
        let mut iter = touching.into_iter();
        if let Some(first) = iter.next() {
            let joined = iter.fold(first, |acc, f| acc.product(&f));
            factors.push(joined.sum_out(var));
        }

        let adj = neighbours.remove(&var).unwrap_or_default();
        for &u in &adj {
            let set = neighbours.get_mut(&u).expect("symmetric adjacency");
            set.remove(&var);
            set.extend(adj.iter().copied().filter(|&w| w != u));
        }
    }

    let mut iter = factors.into_iter();
    let joined = match iter.next() {
        Some(first) => iter.fold(first, |acc, f| acc.product(&f)),
        None => Factor::scalar(1.0),
    };
    joined.reorder(keep)
}
