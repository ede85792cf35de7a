//! Discrete Bayesian networks: nodes, states, arcs and conditional probability tables.
//!
//! A [`Network`] is built once from a list of [`NodeSpec`]s and their [`Cpt`]s and is
//! immutable afterwards. Nodes are stored in a deterministic topological order
//! (Kahn's algorithm, ready nodes taken by declaration index), so every node's index
//! exceeds the indices of its parents.
//!
//! CPT layout: one row per child state, one column per joint parent configuration.
//! Parent configurations are enumerated with the first declared parent varying
//! slowest. Flat storage is row-major, so `values[state * columns + column]`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance on CPT column sums.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Label of the first state of every bundled binary node.
pub const TRUE: &str = "TRUE";
/// Label of the second state of every bundled binary node.
pub const FALSE: &str = "FALSE";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("network has no nodes")]
    Empty,
    #[error("{specs} node specs but {cpts} CPTs")]
    LengthMismatch { specs: usize, cpts: usize },
    #[error("empty node id at position {0}")]
    EmptyNodeId(usize),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}` needs at least two states, got {got}")]
    TooFewStates { node: String, got: usize },
    #[error("node `{node}` has duplicate state `{state}`")]
    DuplicateState { node: String, state: String },
    #[error("node `{node}` lists parent `{parent}` more than once")]
    DuplicateParent { node: String, parent: String },
    #[error("node `{node}` references unknown parent `{parent}`")]
    UnknownParent { node: String, parent: String },
    #[error("cycle detected: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("CPT of `{node}` has {got} entries, expected {expected}")]
    CptShapeMismatch {
        node: String,
        expected: usize,
        got: usize,
    },
    #[error("CPT of `{node}` has entry {value} outside [0, 1] in column {column}")]
    ProbabilityOutOfRange {
        node: String,
        column: usize,
        value: f64,
    },
    #[error("CPT column {column} of `{node}` sums to {sum} (residual {residual:e})")]
    ColumnNotNormalized {
        node: String,
        column: usize,
        sum: f64,
        residual: f64,
    },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` has no state `{state}`")]
    UnknownState { node: String, state: String },
    #[error("assignment for `{node}` is missing parent `{parent}`")]
    MissingParentAssignment { node: String, parent: String },
    #[error("assignment for `{node}` names `{name}`, which is not one of its parents")]
    UnexpectedAssignment { node: String, name: String },
    #[error("node `{0}` appears more than once in the evidence")]
    DuplicateEvidence(String),
    #[error("malformed evidence item `{0}` (expected node=STATE)")]
    MalformedEvidence(String),
    #[error("model file: {0}")]
    Format(String),
}

/// Name of a node, unique within its network.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(name: impl Into<String>) -> Self {
        NodeId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_owned())
    }
}

impl From<String> for NodeId {
    fn from(s: String) -> Self {
        NodeId(s)
    }
}

impl std::borrow::Borrow<str> for NodeId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// Declaration of a single categorical node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub states: Vec<String>,
    pub parents: Vec<NodeId>,
}

impl NodeSpec {
    pub fn new<I, S, P, Q>(id: impl Into<NodeId>, states: I, parents: P) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
        P: IntoIterator<Item = Q>,
        Q: Into<NodeId>,
    {
        NodeSpec {
            id: id.into(),
            states: states.into_iter().map(Into::into).collect(),
            parents: parents.into_iter().map(Into::into).collect(),
        }
    }

    /// A `TRUE`/`FALSE` node.
    pub fn binary<P, Q>(id: impl Into<NodeId>, parents: P) -> Self
    where
        P: IntoIterator<Item = Q>,
        Q: Into<NodeId>,
    {
        Self::new(id, [TRUE, FALSE], parents)
    }
}

/// Conditional probability table.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    states: usize,
    values: Vec<f64>,
}

impl Cpt {
    /// Build from a flat row-major array with `states` rows.
    pub fn from_flat(states: usize, values: Vec<f64>) -> Self {
        Cpt { states, values }
    }

    /// Build from one row per child state.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let values = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Cpt {
            states: rows.len(),
            values,
        }
    }

    /// Binary table from the TRUE row; the FALSE row is `1 - p` per column.
    pub fn binary(p_true: &[f64]) -> Self {
        let mut values = p_true.to_vec();
        values.extend(p_true.iter().map(|p| 1.0 - p));
        Cpt { states: 2, values }
    }

    /// Uniform table over `states` child states and `columns` parent configurations.
    pub fn uniform(states: usize, columns: usize) -> Self {
        Cpt {
            states,
            values: vec![1.0 / states as f64; states * columns],
        }
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn columns(&self) -> usize {
        self.values.len().checked_div(self.states).unwrap_or(0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, state: usize, column: usize) -> f64 {
        self.values[state * self.columns() + column]
    }

    pub fn column(&self, column: usize) -> Vec<f64> {
        let cols = self.columns();
        (0..self.states)
            .map(|s| self.values[s * cols + column])
            .collect()
    }

    pub(crate) fn set_column(&mut self, column: usize, entries: &[f64]) {
        let cols = self.columns();
        for (s, &v) in entries.iter().enumerate() {
            self.values[s * cols + column] = v;
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Node {
    pub(crate) spec: NodeSpec,
    pub(crate) cpt: Cpt,
    pub(crate) parents: Vec<usize>,
    pub(crate) declaration: usize,
}

/// A validated, immutable discrete Bayesian network.
#[derive(Debug, Clone)]
pub struct Network {
    name: String,
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    metadata: BTreeMap<String, serde_json::Value>,
}

/// Validate and build a network from aligned spec and CPT lists.
pub fn build_network(specs: Vec<NodeSpec>, cpts: Vec<Cpt>) -> Result<Network, ModelError> {
    Network::from_parts("", specs, cpts, BTreeMap::new())
}

/// Check every structural and numeric invariant of unbuilt parts.
///
/// The report is empty iff [`build_network`] would succeed on the same input.
pub fn validate(specs: &[NodeSpec], cpts: &[Cpt]) -> Vec<ModelError> {
    let mut report = Vec::new();
    if specs.is_empty() {
        report.push(ModelError::Empty);
        return report;
    }
    if specs.len() != cpts.len() {
        report.push(ModelError::LengthMismatch {
            specs: specs.len(),
            cpts: cpts.len(),
        });
        return report;
    }

    let mut by_name: HashMap<&str, usize> = HashMap::new();
    for (i, spec) in specs.iter().enumerate() {
        if spec.id.as_str().is_empty() {
            report.push(ModelError::EmptyNodeId(i));
        }
        if by_name.insert(spec.id.as_str(), i).is_some() {
            report.push(ModelError::DuplicateNode(spec.id.to_string()));
        }
    }

    let mut parents_ok = vec![true; specs.len()];
    for (i, spec) in specs.iter().enumerate() {
        let node = spec.id.to_string();
        if spec.states.len() < 2 {
            report.push(ModelError::TooFewStates {
                node: node.clone(),
                got: spec.states.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for s in &spec.states {
            if !seen.insert(s.as_str()) {
                report.push(ModelError::DuplicateState {
                    node: node.clone(),
                    state: s.clone(),
                });
            }
        }
        let mut seen = BTreeSet::new();
        for p in &spec.parents {
            if !seen.insert(p.as_str()) {
                report.push(ModelError::DuplicateParent {
                    node: node.clone(),
                    parent: p.to_string(),
                });
                parents_ok[i] = false;
            }
            if !by_name.contains_key(p.as_str()) {
                report.push(ModelError::UnknownParent {
                    node: node.clone(),
                    parent: p.to_string(),
                });
                parents_ok[i] = false;
            }
        }
    }

    for (i, (spec, cpt)) in specs.iter().zip(cpts).enumerate() {
        if !parents_ok[i] {
            continue;
        }
        let node = spec.id.to_string();
        let columns: usize = spec
            .parents
            .iter()
            .map(|p| specs[by_name[p.as_str()]].states.len())
            .product();
        let expected = columns * spec.states.len();
        if cpt.values.len() != expected || cpt.states != spec.states.len() {
            report.push(ModelError::CptShapeMismatch {
                node,
                expected,
                got: cpt.values.len(),
            });
            continue;
        }
        for c in 0..columns {
            let column = cpt.column(c);
            if let Some(&bad) = column.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                report.push(ModelError::ProbabilityOutOfRange {
                    node: node.clone(),
                    column: c,
                    value: bad,
                });
                continue;
            }
            let sum: f64 = column.iter().sum();
            let residual = (sum - 1.0).abs();
            if residual > NORMALIZATION_TOLERANCE {
                report.push(ModelError::ColumnNotNormalized {
                    node: node.clone(),
                    column: c,
                    sum,
                    residual,
                });
            }
        }
    }

    if report.is_empty() {
        if let Err(cycle) = topological_order(specs, &by_name) {
            report.push(ModelError::CycleDetected(cycle));
        }
    }
    report
}

/// Kahn's algorithm; ready nodes are taken smallest declaration index first.
fn topological_order(
    specs: &[NodeSpec],
    by_name: &HashMap<&str, usize>,
) -> Result<Vec<usize>, Vec<String>> {
    let n = specs.len();
    let mut indegree = vec![0usize; n];
    let mut children = vec![Vec::new(); n];
    for (i, spec) in specs.iter().enumerate() {
        for p in &spec.parents {
            let pi = by_name[p.as_str()];
            indegree[i] += 1;
            children[pi].push(i);
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }

    // Walk parent links inside the unresolved set until a node repeats.
    let stuck: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] > 0).collect();
    let start = *stuck.iter().next().expect("unresolved node");
    let mut path = vec![start];
    let mut pos: HashMap<usize, usize> = HashMap::from([(start, 0)]);
    let mut current = start;
    loop {
        let next = specs[current]
            .parents
            .iter()
            .map(|p| by_name[p.as_str()])
            .find(|p| stuck.contains(p))
            .expect("unresolved node has an unresolved parent");
        if let Some(&at) = pos.get(&next) {
            let mut cycle: Vec<String> = path[at..]
                .iter()
                .rev()
                .map(|&i| specs[i].id.to_string())
                .collect();
            cycle.push(cycle[0].clone());
            return Err(cycle);
        }
        pos.insert(next, path.len());
        path.push(next);
        current = next;
    }
}

impl Network {
    /// Validate and build a named network with metadata.
    pub fn from_parts(
        name: impl Into<String>,
        specs: Vec<NodeSpec>,
        cpts: Vec<Cpt>,
        metadata: BTreeMap<String, serde_json::Value>,
    ) -> Result<Self, ModelError> {
        if let Some(first) = validate(&specs, &cpts).into_iter().next() {
            return Err(first);
        }
        let by_name: HashMap<&str, usize> = specs
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let order = topological_order(&specs, &by_name).map_err(ModelError::CycleDetected)?;
        let mut slots: Vec<Option<(NodeSpec, Cpt)>> =
            specs.into_iter().zip(cpts).map(Some).collect();
        let mut nodes = Vec::with_capacity(order.len());
        let mut index = HashMap::with_capacity(order.len());
        for &decl in &order {
            let (spec, cpt) = slots[decl].take().expect("each node placed once");
            // Parents precede children in topological order, so they are already indexed.
            let parents = spec.parents.iter().map(|p| index[p]).collect::<Vec<_>>();
            index.insert(spec.id.clone(), nodes.len());
            nodes.push(Node {
                spec,
                cpt,
                parents,
                declaration: decl,
            });
        }
        Ok(Network {
            name: name.into(),
            nodes,
            index,
            metadata,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn metadata(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.metadata
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of a node in topological order.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub(crate) fn require(&self, name: &str) -> Result<usize, ModelError> {
        self.index_of(name)
            .ok_or_else(|| ModelError::UnknownNode(name.to_owned()))
    }

    pub fn spec(&self, node: usize) -> &NodeSpec {
        &self.nodes[node].spec
    }

    pub fn id(&self, node: usize) -> &NodeId {
        &self.nodes[node].spec.id
    }

    pub fn cpt(&self, node: usize) -> &Cpt {
        &self.nodes[node].cpt
    }

    /// Parent indices (topological positions) in declared parent order.
    pub fn parents(&self, node: usize) -> &[usize] {
        &self.nodes[node].parents
    }

    pub fn cardinality(&self, node: usize) -> usize {
        self.nodes[node].spec.states.len()
    }

    /// Position of the node in the original input list.
    pub fn declaration_index(&self, node: usize) -> usize {
        self.nodes[node].declaration
    }

    pub fn state_index(&self, node: usize, label: &str) -> Result<usize, ModelError> {
        let spec = &self.nodes[node].spec;
        spec.states
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| ModelError::UnknownState {
                node: spec.id.to_string(),
                state: label.to_owned(),
            })
    }

    /// All node specs in topological order.
    pub fn specs(&self) -> impl Iterator<Item = &NodeSpec> {
        self.nodes.iter().map(|n| &n.spec)
    }

    /// Node ids in topological order.
    pub fn topological_order(&self) -> Vec<&NodeId> {
        self.nodes.iter().map(|n| &n.spec.id).collect()
    }

    /// Specs and CPTs in declaration order, suitable for rebuilding.
    pub fn to_parts(&self) -> (Vec<NodeSpec>, Vec<Cpt>) {
        let mut by_decl: Vec<&Node> = self.nodes.iter().collect();
        by_decl.sort_by_key(|n| n.declaration);
        by_decl
            .into_iter()
            .map(|n| (n.spec.clone(), n.cpt.clone()))
            .unzip()
    }

    /// Column of `node`'s CPT for the given parent state indices (declared parent order).
    pub fn column_index(&self, node: usize, parent_states: &[usize]) -> usize {
        let mut col = 0;
        for (&p, &s) in self.nodes[node].parents.iter().zip(parent_states) {
            col = col * self.cardinality(p) + s;
        }
        col
    }

    /// Parent state indices for a CPT column; inverse of [`Network::column_index`].
    pub fn parent_states(&self, node: usize, column: usize) -> Vec<usize> {
        let parents = &self.nodes[node].parents;
        let mut states = vec![0; parents.len()];
        let mut rest = column;
        for (slot, &p) in parents.iter().enumerate().rev() {
            let card = self.cardinality(p);
            states[slot] = rest % card;
            rest /= card;
        }
        states
    }

    /// Stored CPT entry for `child = child_state` given a full parent assignment.
    pub fn cpt_lookup(
        &self,
        child: &str,
        child_state: &str,
        parent_assignment: &[(&str, &str)],
    ) -> Result<f64, ModelError> {
        let node = self.require(child)?;
        let state = self.state_index(node, child_state)?;
        for (name, _) in parent_assignment {
            if !self.nodes[node]
                .spec
                .parents
                .iter()
                .any(|p| p.as_str() == *name)
            {
                return Err(ModelError::UnexpectedAssignment {
                    node: child.to_owned(),
                    name: (*name).to_owned(),
                });
            }
        }
        let mut states = Vec::with_capacity(self.nodes[node].parents.len());
        for &p in &self.nodes[node].parents {
            let pname = self.id(p).as_str();
            let (_, label) = parent_assignment
                .iter()
                .find(|(n, _)| *n == pname)
                .ok_or_else(|| ModelError::MissingParentAssignment {
                    node: child.to_owned(),
                    parent: pname.to_owned(),
                })?;
            states.push(self.state_index(p, label)?);
        }
        let column = self.column_index(node, &states);
        Ok(self.nodes[node].cpt.get(state, column))
    }

    /// Re-run the validator over this network's parts.
    pub fn validate(&self) -> Vec<ModelError> {
        let (specs, cpts) = self.to_parts();
        validate(&specs, &cpts)
    }

    /// Indices of `roots` and all their ancestors, ascending.
    pub fn ancestral_set(&self, roots: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut keep = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = roots.into_iter().collect();
        while let Some(n) = stack.pop() {
            if !keep[n] {
                keep[n] = true;
                stack.extend(self.nodes[n].parents.iter().copied());
            }
        }
        (0..self.nodes.len()).filter(|&i| keep[i]).collect()
    }

    /// Indices of nodes that have `node` as an ancestor (excluding itself).
    pub fn descendants(&self, node: usize) -> Vec<usize> {
        let mut mark = vec![false; self.nodes.len()];
        mark[node] = true;
        let mut out = Vec::new();
        for i in node + 1..self.nodes.len() {
            if self.nodes[i].parents.iter().any(|&p| mark[p]) {
                mark[i] = true;
                out.push(i);
            }
        }
        out
    }

    /// Nodes whose CPT can change P(`targets` | `observed`), by Bayes-ball.
    pub fn requisite_cpts(&self, targets: &[usize], observed: &[usize]) -> Vec<bool> {
        let n = self.nodes.len();
        let mut children = vec![Vec::new(); n];
        for (i, node) in self.nodes.iter().enumerate() {
            for &p in &node.parents {
                children[p].push(i);
            }
        }
        let mut is_observed = vec![false; n];
        for &o in observed {
            is_observed[o] = true;
        }
        let mut top = vec![false; n];
        let mut bottom = vec![false; n];
        // (node, arrived from a child)
        let mut queue: Vec<(usize, bool)> = targets.iter().map(|&t| (t, true)).collect();
        while let Some((j, from_child)) = queue.pop() {
            let pass_up = if from_child {
                !is_observed[j]
            } else {
                is_observed[j]
            };
            let pass_down = !is_observed[j];
            if pass_up && !top[j] {
                top[j] = true;
                queue.extend(self.nodes[j].parents.iter().map(|&p| (p, true)));
            }
            if pass_down && !bottom[j] {
                bottom[j] = true;
                queue.extend(children[j].iter().map(|&c| (c, false)));
            }
        }
        top
    }

    /// Rebuild with one CPT replaced; used by parameter sweeps.
    pub(crate) fn with_cpt(&self, node: usize, cpt: Cpt) -> Network {
        let mut net = self.clone();
        net.nodes[node].cpt = cpt;
        net
    }

    /// Human-readable label of a CPT column, e.g. `a=TRUE;b=FALSE`.
    pub fn column_label(&self, node: usize, column: usize) -> String {
        let states = self.parent_states(node, column);
        self.nodes[node]
            .parents
            .iter()
            .zip(states)
            .map(|(&p, s)| format!("{}={}", self.id(p), self.spec(p).states[s]))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Observed states keyed by node.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Evidence(BTreeMap<NodeId, String>);

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builder-style insert; replaces an existing observation of the same node.
    pub fn with(mut self, node: impl Into<NodeId>, state: impl Into<String>) -> Self {
        self.0.insert(node.into(), state.into());
        self
    }

    /// Insert, rejecting a second observation of the same node.
    pub fn insert(
        &mut self,
        node: impl Into<NodeId>,
        state: impl Into<String>,
    ) -> Result<(), ModelError> {
        let node = node.into();
        if self.0.contains_key(&node) {
            return Err(ModelError::DuplicateEvidence(node.to_string()));
        }
        self.0.insert(node, state.into());
        Ok(())
    }

    /// Parse `node=STATE,node=STATE`. Whitespace around items is ignored.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut ev = Evidence::new();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (node, state) = item
                .split_once('=')
                .map(|(n, s)| (n.trim(), s.trim()))
                .filter(|(n, s)| !n.is_empty() && !s.is_empty())
                .ok_or_else(|| ModelError::MalformedEvidence(item.to_owned()))?;
            ev.insert(node, state)?;
        }
        Ok(ev)
    }

    pub fn get(&self, node: &str) -> Option<&str> {
        self.0.get(node).map(String::as_str)
    }

    pub fn contains(&self, node: &str) -> bool {
        self.0.contains_key(node)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &str)> {
        self.0.iter().map(|(k, v)| (k, v.as_str()))
    }

    /// Merge another evidence set; entries of `other` win.
    pub fn merged(&self, other: &Evidence) -> Evidence {
        let mut out = self.clone();
        for (k, v) in &other.0 {
            out.0.insert(k.clone(), v.clone());
        }
        out
    }

    /// Resolve against a network into `(node index, state index)` pairs.
    pub fn resolve(&self, net: &Network) -> Result<Vec<(usize, usize)>, ModelError> {
        self.0
            .iter()
            .map(|(node, state)| {
                let i = net.require(node.as_str())?;
                Ok((i, net.state_index(i, state)?))
            })
            .collect()
    }
}

impl fmt::Display for Evidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.0.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&items.join(","))
    }
}
