// SPDX-License-Identifier: MIT
//! Completion of a partially oriented including path graph into a belief
//! network: keep directed and bidirected edges, promote circle/arrow edges
//! to directed ones, direct the remaining circle/circle edges without
//! violating any non-collider constraint or creating a directed cycle,
//! then replace each bidirected edge with a fresh parentless common cause.
//!
//! Orientation search is deterministic backtracking: circle/circle edges
//! in ascending order, the low-to-high direction tried first, with forced
//! assignments propagated through the non-collider constraints and an
//! incremental cycle check. A valid completion always exists for genuine
//! recovery outputs; reaching the failure path signals a corrupted input.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::ci::PartialIpg;
use crate::graph::{BeliefNetwork, Dag, EndMark, GraphError, MixedGraph, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrientationError {
    #[error("no orientation of the undecided edges satisfies the constraints: {detail}")]
    NoValidOrientation { detail: String },
    #[error("edge {0} - {1} still carries a circle mark")]
    CircleMarkRemains(String, String),
    #[error("edge {0} - {1} has an invalid mark pattern for completion")]
    InvalidEdgeShape(String, String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// A completed orientation plus search diagnostics.
#[derive(Debug, Clone)]
pub struct Completion {
    /// Graph with only directed and bidirected edges.
    pub graph: MixedGraph,
    /// How often the incremental cycle check rejected a candidate; stays 0
    /// when the constraints alone already steer the search.
    pub acyclicity_rejections: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EdgeShape {
    Directed(NodeId, NodeId),
    Bidirected,
    Undecided,
}

fn classify(e: &crate::graph::MixedEdge) -> Result<EdgeShape, OrientationError> {
    match (e.mark_a, e.mark_b) {
        (EndMark::Tail, EndMark::Arrow) => Ok(EdgeShape::Directed(e.a, e.b)),
        (EndMark::Arrow, EndMark::Tail) => Ok(EdgeShape::Directed(e.b, e.a)),
        (EndMark::Arrow, EndMark::Arrow) => Ok(EdgeShape::Bidirected),
        (EndMark::Circle, EndMark::Arrow) => Ok(EdgeShape::Directed(e.a, e.b)),
        (EndMark::Arrow, EndMark::Circle) => Ok(EdgeShape::Directed(e.b, e.a)),
        (EndMark::Circle, EndMark::Circle) => Ok(EdgeShape::Undecided),
        _ => Err(OrientationError::InvalidEdgeShape(
            String::new(),
            String::new(),
        )),
    }
}

struct Solver {
    /// Undecided edges, ascending (a, b) with a < b.
    undecided: Vec<(NodeId, NodeId)>,
    /// Edge pair -> index into `undecided`.
    index: BTreeMap<(NodeId, NodeId), usize>,
    /// Some(true) = oriented a -> b (low to high).
    state: Vec<Option<bool>>,
    /// Current directed adjacency: fixed directed edges plus assignments.
    children: Vec<BTreeSet<NodeId>>,
    /// Non-collider triples indexed by center: center -> (left, right).
    constraints: BTreeMap<NodeId, Vec<(NodeId, NodeId)>>,
    /// Arrow-at-center facts from fixed (non-undecided) edges.
    fixed_arrow_at: BTreeSet<(NodeId, NodeId)>, // (center, other end)
    trail: Vec<usize>,
    acyclicity_rejections: u64,
}

impl Solver {
    fn reaches(&self, from: NodeId, to: NodeId) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.children.len()];
        let mut stack = vec![from];
        seen[from.index()] = true;
        while let Some(v) = stack.pop() {
            for &c in &self.children[v.index()] {
                if c == to {
                    return true;
                }
                if !seen[c.index()] {
                    seen[c.index()] = true;
                    stack.push(c);
                }
            }
        }
        false
    }

    /// Mark at `center` on the center–other edge under the current state,
    /// or None when that edge is undecided and unassigned.
    fn arrow_at(&self, center: NodeId, other: NodeId) -> Option<bool> {
        if self.fixed_arrow_at.contains(&(center, other)) {
            return Some(true);
        }
        let key = if center < other {
            (center, other)
        } else {
            (other, center)
        };
        if let Some(&idx) = self.index.get(&key) {
            return self.state[idx].map(|low_to_high| {
                // arrow at center iff the edge points into center
                if center < other {
                    !low_to_high
                } else {
                    low_to_high
                }
            });
        }
        Some(false) // fixed edge without an arrow at center
    }

    /// Assigns edge `idx`, checks the cycle and non-collider constraints,
    /// and queues forced assignments. Returns false on conflict.
    fn assign(&mut self, idx: usize, low_to_high: bool, queue: &mut Vec<(usize, bool)>) -> bool {
        if let Some(existing) = self.state[idx] {
            return existing == low_to_high;
        }
        let (a, b) = self.undecided[idx];
        let (from, to) = if low_to_high { (a, b) } else { (b, a) };
        if self.reaches(to, from) {
            self.acyclicity_rejections += 1;
            return false;
        }
        self.state[idx] = Some(low_to_high);
        self.children[from.index()].insert(to);
        self.trail.push(idx);

        // The new arrowhead at `to` interacts with every constraint
        // centered there that involves this edge.
        if let Some(triples) = self.constraints.get(&to) {
            for &(left, right) in triples.clone().iter() {
                if left != from && right != from {
                    continue;
                }
                let other = if left == from { right } else { left };
                match self.arrow_at(to, other) {
                    Some(true) => return false, // both arrowheads at center
                    Some(false) => {}
                    None => {
                        // Force the other edge out of the center.
                        let key = if to < other { (to, other) } else { (other, to) };
                        let forced_idx = self.index[&key];
                        let forced_dir = to < other; // direction: to -> other
                        queue.push((forced_idx, forced_dir));
                    }
                }
            }
        }
        true
    }

    fn undo_to(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let idx = self.trail.pop().unwrap();
            let (a, b) = self.undecided[idx];
            let low_to_high = self.state[idx].take().unwrap();
            let (from, to) = if low_to_high { (a, b) } else { (b, a) };
            self.children[from.index()].remove(&to);
        }
    }

    fn assign_and_propagate(&mut self, idx: usize, low_to_high: bool) -> bool {
        let mut queue = vec![(idx, low_to_high)];
        while let Some((i, dir)) = queue.pop() {
            if !self.assign(i, dir, &mut queue) {
                return false;
            }
        }
        true
    }

    fn solve(&mut self, idx: usize) -> bool {
        if idx == self.undecided.len() {
            return true;
        }
        if self.state[idx].is_some() {
            return self.solve(idx + 1);
        }
        for low_to_high in [true, false] {
            let mark = self.trail.len();
            if self.assign_and_propagate(idx, low_to_high) && self.solve(idx + 1) {
                return true;
            }
            self.undo_to(mark);
        }
        false
    }
}

/// Completes the orientation of `p.graph`: directed and bidirected edges
/// are kept, circle/arrow edges become directed, and every circle/circle
/// edge receives a direction such that no non-collider constraint gains
/// both arrowheads and the directed part stays acyclic. The low-to-high
/// direction is preferred, so an unconstrained graph orients every edge
/// from the smaller node index to the larger.
pub fn complete_orientation(p: &PartialIpg) -> Result<Completion, OrientationError> {
    let g = &p.graph;
    let n = g.node_count();
    let mut undecided = Vec::new();
    let mut children: Vec<BTreeSet<NodeId>> = vec![BTreeSet::new(); n];
    let mut fixed_arrow_at = BTreeSet::new();

    for e in g.edges() {
        match classify(&e)
            .map_err(|_| OrientationError::InvalidEdgeShape(e.a.to_string(), e.b.to_string()))?
        {
            EdgeShape::Directed(from, to) => {
                children[from.index()].insert(to);
                fixed_arrow_at.insert((to, from));
            }
            EdgeShape::Bidirected => {
                fixed_arrow_at.insert((e.a, e.b));
                fixed_arrow_at.insert((e.b, e.a));
            }
            EdgeShape::Undecided => undecided.push((e.a, e.b)),
        }
    }

    let mut constraints: BTreeMap<NodeId, Vec<(NodeId, NodeId)>> = BTreeMap::new();
    for (a, b, c) in g.noncolliders() {
        constraints.entry(b).or_default().push((a, c));
    }

    // Fixed marks may already violate a constraint or contain a directed
    // cycle; report before searching.
    for (&center, triples) in &constraints {
        for &(left, right) in triples {
            if fixed_arrow_at.contains(&(center, left)) && fixed_arrow_at.contains(&(center, right))
            {
                return Err(OrientationError::NoValidOrientation {
                    detail: format!(
                        "non-collider constraint ({}, {}, {}) already has both arrowheads",
                        g.label(left),
                        g.label(center),
                        g.label(right)
                    ),
                });
            }
        }
    }

    let index: BTreeMap<(NodeId, NodeId), usize> =
        undecided.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let state = vec![None; undecided.len()];
    let mut solver = Solver {
        undecided,
        index,
        state,
        children,
        constraints,
        fixed_arrow_at,
        trail: Vec::new(),
        acyclicity_rejections: 0,
    };

    // A cyclic fixed part can never be completed.
    if !g.is_acyclic_directed_part() {
        return Err(OrientationError::NoValidOrientation {
            detail: "the already-directed edges contain a cycle".into(),
        });
    }

    if !solver.solve(0) {
        let triples: Vec<String> = g
            .noncolliders()
            .iter()
            .map(|&(a, b, c)| format!("({}, {}, {})", g.label(a), g.label(b), g.label(c)))
            .collect();
        return Err(OrientationError::NoValidOrientation {
            detail: format!(
                "backtracking exhausted {} undecided edges under constraints [{}]",
                solver.undecided.len(),
                triples.join(", ")
            ),
        });
    }

    let mut out = g.clone();
    for (i, &(a, b)) in solver.undecided.iter().enumerate() {
        let low_to_high = solver.state[i].unwrap();
        let (from, to) = if low_to_high { (a, b) } else { (b, a) };
        out.set_mark_at(from, to, EndMark::Tail)?;
        out.set_mark_at(to, from, EndMark::Arrow)?;
    }
    // Promote circle/arrow edges to fully directed.
    for e in out.edges() {
        if e.mark_a == EndMark::Circle {
            out.set_mark_at(e.a, e.b, EndMark::Tail)?;
        } else if e.mark_b == EndMark::Circle {
            out.set_mark_at(e.b, e.a, EndMark::Tail)?;
        }
    }
    debug_assert!(out.is_acyclic_directed_part());
    Ok(Completion {
        graph: out,
        acyclicity_rejections: solver.acyclicity_rejections,
    })
}

/// Replaces every bidirected edge with a fresh parentless hidden node that
/// points at both former endpoints. The input may contain only directed
/// and bidirected edges. Auxiliary labels are `L#1`, `L#2`, … in edge
/// order, skipping any label already taken.
pub fn expand_bidirected(g: &MixedGraph) -> Result<BeliefNetwork, OrientationError> {
    let mut labels: Vec<String> = g.nodes().map(|v| g.label(v).to_string()).collect();
    let observed_count = labels.len();
    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    let mut auxiliary = BTreeSet::new();
    let mut origin = BTreeMap::new();
    let mut counter = 1usize;

    for e in g.edges() {
        match (e.mark_a, e.mark_b) {
            (EndMark::Tail, EndMark::Arrow) => edges.push((e.a, e.b)),
            (EndMark::Arrow, EndMark::Tail) => edges.push((e.b, e.a)),
            (EndMark::Arrow, EndMark::Arrow) => {
                let mut label = format!("L#{counter}");
                while labels.contains(&label) {
                    counter += 1;
                    label = format!("L#{counter}");
                }
                counter += 1;
                let latent = NodeId(labels.len() as u32);
                labels.push(label);
                edges.push((latent, e.a));
                edges.push((latent, e.b));
                auxiliary.insert(latent);
                origin.insert(latent, (e.a, e.b));
            }
            (ma, mb) => {
                if ma == EndMark::Circle || mb == EndMark::Circle {
                    return Err(OrientationError::CircleMarkRemains(
                        g.label(e.a).to_string(),
                        g.label(e.b).to_string(),
                    ));
                }
                return Err(OrientationError::InvalidEdgeShape(
                    g.label(e.a).to_string(),
                    g.label(e.b).to_string(),
                ));
            }
        }
    }

    let hidden: BTreeSet<NodeId> = (observed_count..labels.len())
        .map(|i| NodeId(i as u32))
        .collect();
    let dag = Dag::new(labels, &hidden, &edges)?;
    Ok(BeliefNetwork {
        dag,
        auxiliary,
        origin,
    })
}

/// Completion followed by bidirected-edge expansion.
pub fn run_ci_to_bn(p: &PartialIpg) -> Result<BeliefNetwork, OrientationError> {
    let completion = complete_orientation(p)?;
    expand_bidirected(&completion.graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ci::SepsetTable;

    fn n(i: u32) -> NodeId {
        NodeId(i)
    }

    fn mixed(labels: &[&str]) -> MixedGraph {
        MixedGraph::new(labels.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    fn pipg(g: MixedGraph) -> PartialIpg {
        PartialIpg::new(g, SepsetTable::new())
    }

    #[test]
    fn chain_constraint_forbids_collider() {
        let mut g = mixed(&["A", "B", "C"])
            .add_edge(n(0), n(1), EndMark::Circle, EndMark::Circle)
            .unwrap()
            .add_edge(n(1), n(2), EndMark::Circle, EndMark::Circle)
            .unwrap();
        g.add_noncollider(n(0), n(1), n(2)).unwrap();
        let done = complete_orientation(&pipg(g)).unwrap();
        assert!(done.graph.is_directed_edge(n(0), n(1)));
        assert!(done.graph.is_directed_edge(n(1), n(2)));
        assert_eq!(done.acyclicity_rejections, 0);
    }

    #[test]
    fn circle_arrow_promotes_to_directed() {
        let g = mixed(&["A", "B"])
            .add_edge(n(0), n(1), EndMark::Circle, EndMark::Arrow)
            .unwrap();
        let done = complete_orientation(&pipg(g)).unwrap();
        assert!(done.graph.is_directed_edge(n(0), n(1)));
    }

    #[test]
    fn unconstrained_edges_follow_node_order() {
        // Seven undecided edges over five nodes: everything points from
        // the smaller label to the larger one.
        let mut g = mixed(&["A", "B", "C", "D", "E"]);
        for (a, b) in [(0u32, 1u32), (1, 2), (2, 3), (3, 4), (0, 4), (0, 3), (0, 2)] {
            g = g
                .add_edge(n(a), n(b), EndMark::Circle, EndMark::Circle)
                .unwrap();
        }
        let p = pipg(g);
        let done = complete_orientation(&p).unwrap();
        for (a, b) in [(0u32, 1u32), (1, 2), (2, 3), (3, 4), (0, 4), (0, 3), (0, 2)] {
            assert!(done.graph.is_directed_edge(n(a), n(b)), "{a}->{b}");
        }
        let bn = run_ci_to_bn(&p).unwrap();
        assert!(bn.auxiliary.is_empty());
        assert_eq!(bn.dag.edge_count(), 7);
    }

    #[test]
    fn fixed_marks_survive_completion() {
        let g = mixed(&["A", "B", "C", "D"])
            .add_edge(n(0), n(1), EndMark::Tail, EndMark::Arrow)
            .unwrap()
            .add_edge(n(1), n(2), EndMark::Arrow, EndMark::Arrow)
            .unwrap()
            .add_edge(n(2), n(3), EndMark::Circle, EndMark::Arrow)
            .unwrap()
            .add_edge(n(0), n(3), EndMark::Circle, EndMark::Circle)
            .unwrap();
        let done = complete_orientation(&pipg(g)).unwrap();
        assert!(done.graph.is_directed_edge(n(0), n(1)));
        assert_eq!(
            done.graph.marks(n(1), n(2)).unwrap(),
            (EndMark::Arrow, EndMark::Arrow)
        );
        assert!(done.graph.is_directed_edge(n(2), n(3)));
        assert!(done.graph.is_directed_edge(n(0), n(3)));
    }

    #[test]
    fn constraint_steers_against_seed_order() {
        // Constraint (A, B, C) with the B–C edge fixed as C -> B: the
        // arrowhead at B forces the undecided A–B edge to point B -> A,
        // against the low-to-high seed preference.
        let mut g = mixed(&["A", "B", "C"])
            .add_edge(n(0), n(1), EndMark::Circle, EndMark::Circle)
            .unwrap()
            .add_edge(n(1), n(2), EndMark::Arrow, EndMark::Tail)
            .unwrap();
        g.add_noncollider(n(0), n(1), n(2)).unwrap();
        let done = complete_orientation(&pipg(g)).unwrap();
        assert!(done.graph.is_directed_edge(n(1), n(0)));
    }

    #[test]
    fn acyclicity_check_rejects_cycle_closing_direction() {
        // C -> B -> A fixed with A o-o C undecided: the preferred
        // low-to-high direction A -> C would close a cycle, so the search
        // must take the flip after one rejection.
        let g = mixed(&["A", "B", "C"])
            .add_edge(n(2), n(1), EndMark::Tail, EndMark::Arrow)
            .unwrap()
            .add_edge(n(1), n(0), EndMark::Tail, EndMark::Arrow)
            .unwrap()
            .add_edge(n(0), n(2), EndMark::Circle, EndMark::Circle)
            .unwrap();
        let done = complete_orientation(&pipg(g)).unwrap();
        assert!(done.graph.is_directed_edge(n(2), n(0)));
        assert_eq!(done.acyclicity_rejections, 1);
    }

    #[test]
    fn fully_constrained_triangle_has_no_orientation() {
        let mut g = mixed(&["A", "B", "C"]);
        for (a, b) in [(0u32, 1u32), (1, 2), (0, 2)] {
            g = g
                .add_edge(n(a), n(b), EndMark::Circle, EndMark::Circle)
                .unwrap();
        }
        g.add_noncollider(n(0), n(1), n(2)).unwrap();
        g.add_noncollider(n(1), n(2), n(0)).unwrap();
        g.add_noncollider(n(1), n(0), n(2)).unwrap();
        let err = complete_orientation(&pipg(g)).unwrap_err();
        assert!(matches!(err, OrientationError::NoValidOrientation { .. }));
    }

    #[test]
    fn violated_fixed_constraint_reported() {
        let mut g = mixed(&["A", "B", "C"])
            .add_edge(n(0), n(1), EndMark::Tail, EndMark::Arrow)
            .unwrap()
            .add_edge(n(2), n(1), EndMark::Tail, EndMark::Arrow)
            .unwrap();
        g.add_noncollider(n(0), n(1), n(2)).unwrap();
        let err = complete_orientation(&pipg(g)).unwrap_err();
        assert!(matches!(err, OrientationError::NoValidOrientation { .. }));
    }

    #[test]
    fn expansion_replaces_bidirected_edges() {
        let g = mixed(&["A", "B"])
            .add_edge(n(0), n(1), EndMark::Arrow, EndMark::Arrow)
            .unwrap();
        let bn = expand_bidirected(&g).unwrap();
        assert_eq!(bn.dag.node_count(), 3);
        let latent = n(2);
        assert_eq!(bn.dag.label(latent), "L#1");
        assert!(bn.dag.is_hidden(latent));
        assert!(bn.dag.has_edge(latent, n(0)));
        assert!(bn.dag.has_edge(latent, n(1)));
        assert_eq!(bn.origin.get(&latent), Some(&(n(0), n(1))));
        assert!(bn.check_shape());
    }

    #[test]
    fn expansion_keeps_directed_edges_and_counts_latents() {
        let g = mixed(&["A", "B", "C"])
            .add_edge(n(0), n(1), EndMark::Tail, EndMark::Arrow)
            .unwrap()
            .add_edge(n(1), n(2), EndMark::Arrow, EndMark::Arrow)
            .unwrap();
        let bn = expand_bidirected(&g).unwrap();
        assert!(bn.dag.has_edge(n(0), n(1)));
        assert_eq!(bn.auxiliary.len(), 1);
        assert!(bn.check_shape());

        // Three bidirected edges give three parentless latents.
        let g3 = mixed(&["A", "B", "C"])
            .add_edge(n(0), n(1), EndMark::Arrow, EndMark::Arrow)
            .unwrap()
            .add_edge(n(1), n(2), EndMark::Arrow, EndMark::Arrow)
            .unwrap()
            .add_edge(n(0), n(2), EndMark::Arrow, EndMark::Arrow)
            .unwrap();
        let bn3 = expand_bidirected(&g3).unwrap();
        assert_eq!(bn3.auxiliary.len(), 3);
        assert!(bn3.check_shape());
        // Removing the latents recovers the (empty) directed part.
        for &l in &bn3.auxiliary {
            assert!(bn3.dag.parents(l).is_empty());
            assert_eq!(bn3.dag.children(l).len(), 2);
        }
    }

    #[test]
    fn expansion_rejects_circles() {
        let g = mixed(&["A", "B"])
            .add_edge(n(0), n(1), EndMark::Circle, EndMark::Circle)
            .unwrap();
        assert!(matches!(
            expand_bidirected(&g),
            Err(OrientationError::CircleMarkRemains(_, _))
        ));
    }

    #[test]
    fn latent_label_collision_is_skipped() {
        let g = mixed(&["L#1", "B"])
            .add_edge(n(0), n(1), EndMark::Arrow, EndMark::Arrow)
            .unwrap();
        let bn = expand_bidirected(&g).unwrap();
        assert_eq!(bn.dag.label(n(2)), "L#2");
    }

    #[test]
    fn empty_graph_round_trips() {
        let p = pipg(mixed(&["A", "B"]));
        let bn = run_ci_to_bn(&p).unwrap();
        assert_eq!(bn.dag.edge_count(), 0);
        assert!(bn.auxiliary.is_empty());
    }
}
