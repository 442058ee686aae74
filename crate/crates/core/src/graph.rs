// SPDX-License-Identifier: MIT
//! Node and edge storage for DAGs and mixed graphs, plus the mark algebra
//! and structural predicates the discovery algorithms query.
//!
//! Two graph kinds live here:
//!
//! - [`Dag`]: a directed acyclic graph over observed and hidden nodes.
//! - [`MixedGraph`]: a graph over observed nodes whose edge ends carry one
//!   of three marks (tail, arrow, circle), together with recorded
//!   non-collider constraints on node triples.
//!
//! Both are immutable from the caller's perspective: mutating operations
//! return a logically new graph, and all reads are safe to run concurrently.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

/// Dense node identifier. Indices are unique and contiguous within a graph;
/// the graph owns the label table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Mark carried by one end of a mixed-graph edge.
///
/// An edge `A -> B` is (tail at A, arrow at B); `A <-> B` is arrow/arrow;
/// `A o-> B` is circle/arrow; `A o-o B` is circle/circle. The `*` wildcard
/// used when stating orientation rules is a query over stored marks, never
/// a stored value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EndMark {
    Tail,
    Arrow,
    Circle,
}

impl fmt::Display for EndMark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EndMark::Tail => write!(f, "tail"),
            EndMark::Arrow => write!(f, "arrow"),
            EndMark::Circle => write!(f, "circle"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown node index {0}")]
    UnknownNode(u32),
    #[error("unknown node label {0:?}")]
    UnknownLabel(String),
    #[error("duplicate node label {0:?}")]
    DuplicateLabel(String),
    #[error("self loop on node {0}")]
    SelfLoop(String),
    #[error("duplicate edge {0} - {1}")]
    DuplicateEdge(String, String),
    #[error("edge relation contains a directed cycle")]
    Cycle,
    #[error("no edge between {0} and {1}")]
    MissingEdge(String, String),
    #[error("non-collider constraint ({0}, {1}, {2}) names a missing edge")]
    ConstraintWithoutEdge(String, String, String),
    #[error("query endpoints must be distinct")]
    IdenticalEndpoints,
}

/// Directed acyclic graph over observed and hidden nodes.
///
/// The observed/hidden split partitions the node set. Edges are stored as
/// sorted parent and child lists per node; all iteration is in ascending
/// `NodeId` order so runs are reproducible.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dag {
    labels: Vec<String>,
    hidden: Vec<bool>,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
}

impl Dag {
    /// Builds a DAG from labels, a hidden-node set, and parent→child pairs.
    ///
    /// Rejects duplicate labels, self loops, duplicate edges, and cycles.
    pub fn new(
        labels: Vec<String>,
        hidden: &BTreeSet<NodeId>,
        edges: &[(NodeId, NodeId)],
    ) -> Result<Self, GraphError> {
        let n = labels.len();
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(GraphError::DuplicateLabel(l.clone()));
            }
        }
        for h in hidden {
            if h.index() >= n {
                return Err(GraphError::UnknownNode(h.0));
            }
        }
        let mut g = Dag {
            hidden: (0..n).map(|i| hidden.contains(&NodeId(i as u32))).collect(),
            labels,
            parents: vec![Vec::new(); n],
            children: vec![Vec::new(); n],
        };
        let mut edge_set = BTreeSet::new();
        for &(a, b) in edges {
            if a.index() >= n {
                return Err(GraphError::UnknownNode(a.0));
            }
            if b.index() >= n {
                return Err(GraphError::UnknownNode(b.0));
            }
            if a == b {
                return Err(GraphError::SelfLoop(g.labels[a.index()].clone()));
            }
            if !edge_set.insert((a, b)) {
                return Err(GraphError::DuplicateEdge(
                    g.labels[a.index()].clone(),
                    g.labels[b.index()].clone(),
                ));
            }
            g.children[a.index()].push(b);
            g.parents[b.index()].push(a);
        }
        for list in g.parents.iter_mut().chain(g.children.iter_mut()) {
            list.sort_unstable();
        }
        if g.topological_order().is_none() {
            return Err(GraphError::Cycle);
        }
        Ok(g)
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.labels.len() as u32).map(NodeId)
    }

    #[inline]
    pub fn label(&self, v: NodeId) -> &str {
        &self.labels[v.index()]
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| NodeId(i as u32))
    }

    #[inline]
    pub fn is_hidden(&self, v: NodeId) -> bool {
        self.hidden[v.index()]
    }

    /// Observed nodes in ascending index order.
    pub fn observed(&self) -> Vec<NodeId> {
        self.nodes().filter(|&v| !self.is_hidden(v)).collect()
    }

    /// Hidden nodes in ascending index order.
    pub fn hidden_nodes(&self) -> Vec<NodeId> {
        self.nodes().filter(|&v| self.is_hidden(v)).collect()
    }

    #[inline]
    pub fn parents(&self, v: NodeId) -> &[NodeId] {
        &self.parents[v.index()]
    }

    #[inline]
    pub fn children(&self, v: NodeId) -> &[NodeId] {
        &self.children[v.index()]
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.children[a.index()].binary_search(&b).is_ok()
    }

    pub fn adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.has_edge(a, b) || self.has_edge(b, a)
    }

    /// All parent→child pairs in ascending order.
    pub fn edges(&self) -> Vec<(NodeId, NodeId)> {
        let mut out = Vec::new();
        for v in self.nodes() {
            for &c in self.children(v) {
                out.push((v, c));
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(|c| c.len()).sum()
    }

    /// Kahn topological order, or `None` when the edge relation is cyclic.
    /// Ties resolve in ascending index order.
    pub fn topological_order(&self) -> Option<Vec<NodeId>> {
        let n = self.node_count();
        let mut indegree: Vec<usize> = (0..n).map(|i| self.parents[i].len()).collect();
        let mut ready: BTreeSet<NodeId> = (0..n as u32)
            .map(NodeId)
            .filter(|v| indegree[v.index()] == 0)
            .collect();
        let mut order = Vec::with_capacity(n);
        while let Some(&v) = ready.iter().next() {
            ready.remove(&v);
            order.push(v);
            for &c in self.children(v) {
                indegree[c.index()] -= 1;
                if indegree[c.index()] == 0 {
                    ready.insert(c);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Strict descendants of `v` (excludes `v` itself), ascending.
    pub fn descendants(&self, v: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<NodeId> = self.children(v).to_vec();
        while let Some(u) = stack.pop() {
            if seen.insert(u) {
                stack.extend_from_slice(self.children(u));
            }
        }
        seen
    }

    /// Strict ancestors of `v` (excludes `v` itself), ascending.
    pub fn ancestors(&self, v: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<NodeId> = self.parents(v).to_vec();
        while let Some(u) = stack.pop() {
            if seen.insert(u) {
                stack.extend_from_slice(self.parents(u));
            }
        }
        seen
    }
}

/// One edge of a [`MixedGraph`]: an unordered node pair with a mark at each
/// endpoint. Stored canonically with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MixedEdge {
    pub a: NodeId,
    pub b: NodeId,
    pub mark_a: EndMark,
    pub mark_b: EndMark,
}

/// Graph over observed nodes whose edges carry end marks, plus recorded
/// non-collider constraints: a triple (A, B, C) forbids the A–B and B–C
/// edges from both having arrowheads at B.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixedGraph {
    labels: Vec<String>,
    /// Keyed by (min, max); values are (mark at min end, mark at max end).
    edges: BTreeMap<(NodeId, NodeId), (EndMark, EndMark)>,
    /// Canonicalized as (A, B, C) with A < C.
    noncolliders: BTreeSet<(NodeId, NodeId, NodeId)>,
}

impl MixedGraph {
    pub fn new(labels: Vec<String>) -> Result<Self, GraphError> {
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.clone()) {
                return Err(GraphError::DuplicateLabel(l.clone()));
            }
        }
        Ok(MixedGraph {
            labels,
            edges: BTreeMap::new(),
            noncolliders: BTreeSet::new(),
        })
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.labels.len() as u32).map(NodeId)
    }

    #[inline]
    pub fn label(&self, v: NodeId) -> &str {
        &self.labels[v.index()]
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| NodeId(i as u32))
    }

    fn check_node(&self, v: NodeId) -> Result<(), GraphError> {
        if v.index() >= self.labels.len() {
            Err(GraphError::UnknownNode(v.0))
        } else {
            Ok(())
        }
    }

    /// Adds an `a`–`b` edge with the given marks at each end. Returns the
    /// updated graph; the receiver is unchanged.
    pub fn add_edge(
        &self,
        a: NodeId,
        b: NodeId,
        mark_a: EndMark,
        mark_b: EndMark,
    ) -> Result<MixedGraph, GraphError> {
        self.check_node(a)?;
        self.check_node(b)?;
        if a == b {
            return Err(GraphError::SelfLoop(self.label(a).to_string()));
        }
        let key = Self::key(a, b);
        if self.edges.contains_key(&key) {
            return Err(GraphError::DuplicateEdge(
                self.label(a).to_string(),
                self.label(b).to_string(),
            ));
        }
        let mut g = self.clone();
        let value = if a < b {
            (mark_a, mark_b)
        } else {
            (mark_b, mark_a)
        };
        g.edges.insert(key, value);
        Ok(g)
    }

    #[inline]
    fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
        if a < b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.edges.contains_key(&Self::key(a, b))
    }

    /// Marks of the `a`–`b` edge as (mark at `a`, mark at `b`). The result
    /// is independent of which endpoint is passed first.
    pub fn marks(&self, a: NodeId, b: NodeId) -> Result<(EndMark, EndMark), GraphError> {
        self.check_node(a)?;
        self.check_node(b)?;
        let (ma, mb) = self.edges.get(&Self::key(a, b)).copied().ok_or_else(|| {
            GraphError::MissingEdge(self.label(a).to_string(), self.label(b).to_string())
        })?;
        Ok(if a < b { (ma, mb) } else { (mb, ma) })
    }

    /// Mark at the `at` end of the `at`–`other` edge.
    pub fn mark_at(&self, at: NodeId, other: NodeId) -> Result<EndMark, GraphError> {
        Ok(self.marks(at, other)?.0)
    }

    /// Rewrites the mark at the `at` end of an existing edge in place.
    pub(crate) fn set_mark_at(
        &mut self,
        at: NodeId,
        other: NodeId,
        mark: EndMark,
    ) -> Result<(), GraphError> {
        self.check_node(at)?;
        self.check_node(other)?;
        let key = Self::key(at, other);
        if !self.edges.contains_key(&key) {
            return Err(GraphError::MissingEdge(
                self.label(at).to_string(),
                self.label(other).to_string(),
            ));
        }
        let slot = self.edges.get_mut(&key).unwrap();
        if at < other {
            slot.0 = mark;
        } else {
            slot.1 = mark;
        }
        Ok(())
    }

    pub(crate) fn remove_edge(&mut self, a: NodeId, b: NodeId) {
        self.edges.remove(&Self::key(a, b));
    }

    /// Neighbors of `v` in ascending order.
    pub fn adjacent_nodes(&self, v: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = Vec::new();
        for &(a, b) in self.edges.keys() {
            if a == v {
                out.push(b);
            } else if b == v {
                out.push(a);
            }
        }
        out.sort_unstable();
        out
    }

    /// Edges in ascending (min, max) order.
    pub fn edges(&self) -> Vec<MixedEdge> {
        self.edges
            .iter()
            .map(|(&(a, b), &(mark_a, mark_b))| MixedEdge {
                a,
                b,
                mark_a,
                mark_b,
            })
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Unordered adjacency pairs, ascending.
    pub fn adjacency_pairs(&self) -> Vec<(NodeId, NodeId)> {
        self.edges.keys().copied().collect()
    }

    /// Records the constraint that the A–B and B–C edges may not both have
    /// arrowheads at B. Both edges must exist. Idempotent; symmetric under
    /// (A, B, C) ↔ (C, B, A).
    pub fn add_noncollider(&mut self, a: NodeId, b: NodeId, c: NodeId) -> Result<bool, GraphError> {
        if !self.has_edge(a, b) || !self.has_edge(b, c) {
            return Err(GraphError::ConstraintWithoutEdge(
                self.label(a).to_string(),
                self.label(b).to_string(),
                self.label(c).to_string(),
            ));
        }
        let t = if a < c { (a, b, c) } else { (c, b, a) };
        Ok(self.noncolliders.insert(t))
    }

    pub fn is_noncollider(&self, a: NodeId, b: NodeId, c: NodeId) -> bool {
        let t = if a < c { (a, b, c) } else { (c, b, a) };
        self.noncolliders.contains(&t)
    }

    /// Constraint triples in canonical (A, B, C) form with A < C, ascending.
    pub fn noncolliders(&self) -> Vec<(NodeId, NodeId, NodeId)> {
        self.noncolliders.iter().copied().collect()
    }

    /// True iff both the a–b and b–c edges carry an arrowhead at `b`
    /// (the pattern `A*->B<-*C`).
    pub fn is_collider(&self, a: NodeId, b: NodeId, c: NodeId) -> Result<bool, GraphError> {
        let at_b_from_a = self.mark_at(b, a)?;
        let at_b_from_c = self.mark_at(b, c)?;
        Ok(at_b_from_a == EndMark::Arrow && at_b_from_c == EndMark::Arrow)
    }

    /// True iff the edge points from `a` into `b` (tail at `a`, arrow at `b`).
    pub fn is_directed_edge(&self, a: NodeId, b: NodeId) -> bool {
        matches!(self.marks(a, b), Ok((EndMark::Tail, EndMark::Arrow)))
    }

    /// True iff a directed path of one or more tail→arrow edges leads from
    /// `x` to `y`. Circle ends do not count as tails.
    pub fn directed_path_exists(&self, x: NodeId, y: NodeId) -> Result<bool, GraphError> {
        self.check_node(x)?;
        self.check_node(y)?;
        let mut seen = vec![false; self.node_count()];
        let mut stack = vec![x];
        while let Some(v) = stack.pop() {
            for w in self.adjacent_nodes(v) {
                if self.is_directed_edge(v, w) {
                    if w == y {
                        return Ok(true);
                    }
                    if !seen[w.index()] {
                        seen[w.index()] = true;
                        stack.push(w);
                    }
                }
            }
        }
        Ok(false)
    }

    /// True iff the subgraph of fully directed (tail/arrow) edges has no
    /// directed cycle. Bidirected and circle-marked edges are ignored.
    pub fn is_acyclic_directed_part(&self) -> bool {
        let n = self.node_count();
        let mut indegree = vec![0usize; n];
        let mut children: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for e in self.edges() {
            match (e.mark_a, e.mark_b) {
                (EndMark::Tail, EndMark::Arrow) => {
                    children[e.a.index()].push(e.b);
                    indegree[e.b.index()] += 1;
                }
                (EndMark::Arrow, EndMark::Tail) => {
                    children[e.b.index()].push(e.a);
                    indegree[e.a.index()] += 1;
                }
                _ => {}
            }
        }
        let mut ready: Vec<NodeId> = (0..n as u32)
            .map(NodeId)
            .filter(|v| indegree[v.index()] == 0)
            .collect();
        let mut emitted = 0;
        while let Some(v) = ready.pop() {
            emitted += 1;
            for &c in &children[v.index()] {
                indegree[c.index()] -= 1;
                if indegree[c.index()] == 0 {
                    ready.push(c);
                }
            }
        }
        emitted == n
    }

    /// True iff any edge has tails at both ends. The discovery pipeline
    /// never produces such an edge; this is the corresponding sanity probe.
    pub fn has_tail_tail_edge(&self) -> bool {
        self.edges
            .values()
            .any(|&(ma, mb)| ma == EndMark::Tail && mb == EndMark::Tail)
    }
}

/// DAG over observed nodes plus auxiliary parentless latent nodes that each
/// replace one bidirected edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BeliefNetwork {
    pub dag: Dag,
    /// Auxiliary hidden nodes created by bidirected-edge expansion.
    pub auxiliary: BTreeSet<NodeId>,
    /// Auxiliary node → the observed pair whose bidirected edge it replaced.
    pub origin: BTreeMap<NodeId, (NodeId, NodeId)>,
}

impl BeliefNetwork {
    /// Checks the structural shape: every auxiliary node is parentless,
    /// hidden, and has exactly two observed children.
    pub fn check_shape(&self) -> bool {
        self.auxiliary.iter().all(|&l| {
            self.dag.is_hidden(l)
                && self.dag.parents(l).is_empty()
                && self.dag.children(l).len() == 2
                && self.dag.children(l).iter().all(|&c| !self.dag.is_hidden(c))
        }) && self.origin.keys().all(|k| self.auxiliary.contains(k))
    }
}
