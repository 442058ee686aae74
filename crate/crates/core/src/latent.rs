// SPDX-License-Identifier: MIT
//! Projection of a DAG with hidden nodes onto its including path graph:
//! the mixed graph over observed nodes whose edges record exactly the
//! pairs that no conditioning set of observed nodes can separate.
//!
//! An including path (also called an inducing path) between observed nodes
//! A and B is a path in the full DAG on which every intermediate observed
//! node is a collider, and every collider — observed or hidden — has a
//! directed path to A or to B. A pair joined by an including path into
//! both endpoints gets a bidirected edge; a path out of A and into B gets
//! a directed edge A → B.
//!
//! Path enumeration is exhaustive, so construction refuses graphs larger
//! than a configurable node budget.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::graph::{Dag, EndMark, MixedGraph, NodeId};

/// Default ceiling on total (observed + hidden) nodes for exhaustive
/// path enumeration.
pub const DEFAULT_NODE_BUDGET: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatentError {
    #[error("unknown node index {0}")]
    UnknownNode(u32),
    #[error("endpoint {0} is hidden; including paths are classified between observed nodes")]
    HiddenEndpoint(String),
    #[error("graph has {nodes} nodes, over the enumeration budget of {budget}")]
    BudgetExceeded { nodes: usize, budget: usize },
    #[error("query endpoints must be distinct")]
    IdenticalEndpoints,
}

/// Classification of the including paths between an ordered node pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncludingPathKind {
    /// No including path at all.
    None,
    /// Some path leaves the first node through a tail and enters the
    /// second through an arrowhead; directional, so `kind(a, b)` may
    /// differ from `kind(b, a)`.
    OutInto,
    /// Some path enters both endpoints through arrowheads.
    IntoInto,
}

fn check_budget(g: &Dag, budget: usize) -> Result<(), LatentError> {
    if g.node_count() > budget {
        return Err(LatentError::BudgetExceeded {
            nodes: g.node_count(),
            budget,
        });
    }
    Ok(())
}

/// Classifies the including paths between observed nodes `a` and `b`,
/// with [`IntoInto`](IncludingPathKind::IntoInto) taking precedence when
/// paths of both shapes exist.
pub fn including_path_kind(
    g: &Dag,
    a: NodeId,
    b: NodeId,
) -> Result<IncludingPathKind, LatentError> {
    including_path_kind_with(g, a, b, DEFAULT_NODE_BUDGET)
}

pub fn including_path_kind_with(
    g: &Dag,
    a: NodeId,
    b: NodeId,
    budget: usize,
) -> Result<IncludingPathKind, LatentError> {
    check_budget(g, budget)?;
    let n = g.node_count() as u32;
    if a.0 >= n {
        return Err(LatentError::UnknownNode(a.0));
    }
    if b.0 >= n {
        return Err(LatentError::UnknownNode(b.0));
    }
    if a == b {
        return Err(LatentError::IdenticalEndpoints);
    }
    for v in [a, b] {
        if g.is_hidden(v) {
            return Err(LatentError::HiddenEndpoint(g.label(v).to_string()));
        }
    }

    // descends_to_endpoint[v] = v has a directed path of length >= 1 to a or b.
    let mut descends_to_endpoint = vec![false; g.node_count()];
    for v in g.nodes() {
        if v == a || v == b {
            continue;
        }
        let d = g.descendants(v);
        descends_to_endpoint[v.index()] = d.contains(&a) || d.contains(&b);
    }

    let mut found_out_into = false;

    // DFS over simple paths from a to b, rejecting a prefix as soon as an
    // interior node fails the including-path conditions. A node's status
    // becomes checkable once both its path edges are fixed.
    fn interior_ok(g: &Dag, descends: &[bool], prev: NodeId, v: NodeId, next: NodeId) -> bool {
        let collider = g.has_edge(prev, v) && g.has_edge(next, v);
        if g.is_hidden(v) {
            // Hidden non-colliders are unconstrained; hidden colliders must
            // still lead back to an endpoint.
            !collider || descends[v.index()]
        } else {
            collider && descends[v.index()]
        }
    }

    fn search(
        g: &Dag,
        descends: &[bool],
        a: NodeId,
        b: NodeId,
        path: &mut Vec<NodeId>,
        on_path: &mut Vec<bool>,
        found_out_into: &mut bool,
    ) -> bool {
        let v = *path.last().unwrap();
        if v == b {
            let into_a = g.has_edge(path[1], a);
            let into_b = g.has_edge(path[path.len() - 2], b);
            if into_a && into_b {
                return true;
            }
            if !into_a && into_b {
                *found_out_into = true;
            }
            return false;
        }
        let mut neighbors: Vec<NodeId> = g.parents(v).to_vec();
        neighbors.extend_from_slice(g.children(v));
        neighbors.sort_unstable();
        for w in neighbors {
            if on_path[w.index()] {
                continue;
            }
            // v's interior status is decided once its successor is known.
            if path.len() >= 2 {
                let prev = path[path.len() - 2];
                if !interior_ok(g, descends, prev, v, w) {
                    continue;
                }
            }
            path.push(w);
            on_path[w.index()] = true;
            if search(g, descends, a, b, path, on_path, found_out_into) {
                return true;
            }
            on_path[w.index()] = false;
            path.pop();
        }
        false
    }

    let mut path = vec![a];
    let mut on_path = vec![false; g.node_count()];
    on_path[a.index()] = true;
    let into_into = search(
        g,
        &descends_to_endpoint,
        a,
        b,
        &mut path,
        &mut on_path,
        &mut found_out_into,
    );
    if into_into {
        Ok(IncludingPathKind::IntoInto)
    } else if found_out_into {
        Ok(IncludingPathKind::OutInto)
    } else {
        Ok(IncludingPathKind::None)
    }
}

/// Builds the including path graph of `g` over its observed nodes:
/// bidirected edges for pairs joined into both endpoints, directed edges
/// for pairs joined out of one endpoint and into the other, no edge
/// otherwise. Circle marks never appear.
///
/// Node `i` of the result is the i-th observed node of `g` in ascending
/// index order, keeping its label.
pub fn including_path_graph(g: &Dag) -> Result<MixedGraph, LatentError> {
    including_path_graph_with(g, DEFAULT_NODE_BUDGET)
}

pub fn including_path_graph_with(g: &Dag, budget: usize) -> Result<MixedGraph, LatentError> {
    check_budget(g, budget)?;
    let observed = g.observed();
    let labels: Vec<String> = observed.iter().map(|&v| g.label(v).to_string()).collect();
    let mut out = MixedGraph::new(labels).expect("observed labels are unique");
    for i in 0..observed.len() {
        for j in (i + 1)..observed.len() {
            let (a, b) = (observed[i], observed[j]);
            let ab = including_path_kind_with(g, a, b, budget)?;
            let edge = match ab {
                IncludingPathKind::IntoInto => Some((EndMark::Arrow, EndMark::Arrow)),
                IncludingPathKind::OutInto => Some((EndMark::Tail, EndMark::Arrow)),
                IncludingPathKind::None => {
                    match including_path_kind_with(g, b, a, budget)? {
                        IncludingPathKind::OutInto => Some((EndMark::Arrow, EndMark::Tail)),
                        // Into-into is symmetric, so it cannot appear only
                        // in the reversed direction.
                        _ => None,
                    }
                }
            };
            if let Some((ma, mb)) = edge {
                out = out
                    .add_edge(NodeId(i as u32), NodeId(j as u32), ma, mb)
                    .expect("pairs are visited once");
            }
        }
    }
    Ok(out)
}

/// Searches for a structurally inadmissible collider chain: a path
/// A, B1, …, Bn, C whose edges all point into the interior nodes, where
/// every interior node not adjacent to A on the path has a directed edge
/// back to A, and some interior node not adjacent to C on the path has a
/// directed edge to C. Such a configuration can never occur in an
/// including path graph; returns the witness path if one exists.
pub fn find_forbidden_collider_chain(g: &MixedGraph) -> Option<Vec<NodeId>> {
    let nodes: Vec<NodeId> = g.nodes().collect();
    for &a in &nodes {
        for &c in &nodes {
            if a == c {
                continue;
            }
            // DFS over simple paths a, b1, ..., bn, c with n >= 2.
            let mut path = vec![a];
            let mut on_path = BTreeSet::from([a]);
            if chain_search(g, a, c, &mut path, &mut on_path) {
                return Some(path);
            }
        }
    }
    None
}

fn chain_search(
    g: &MixedGraph,
    a: NodeId,
    c: NodeId,
    path: &mut Vec<NodeId>,
    on_path: &mut BTreeSet<NodeId>,
) -> bool {
    let v = *path.last().unwrap();
    let interior_len = path.len() - 1; // number of B nodes so far

    // Try to close the chain at c.
    if interior_len >= 2 && g.has_edge(v, c) && !on_path.contains(&c) {
        let closes = g.mark_at(v, c).unwrap() == EndMark::Arrow // into Bn
            && path[1..].iter().skip(1).all(|&b| g.is_directed_edge(b, a))
            && path[1..interior_len].iter().any(|&b| g.is_directed_edge(b, c));
        if closes {
            path.push(c);
            return true;
        }
    }

    for w in g.adjacent_nodes(v) {
        if w == c || on_path.contains(&w) {
            continue;
        }
        // Each path edge must point into the interior node being added,
        // and, from the second interior node on, also into its predecessor.
        if g.mark_at(w, v).unwrap() != EndMark::Arrow {
            continue;
        }
        if interior_len >= 1 && g.mark_at(v, w).unwrap() != EndMark::Arrow {
            continue;
        }
        path.push(w);
        on_path.insert(w);
        if chain_search(g, a, c, path, on_path) {
            return true;
        }
        on_path.remove(&w);
        path.pop();
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dag(labels: &[&str], hidden: &[u32], edges: &[(u32, u32)]) -> Dag {
        Dag::new(
            labels.iter().map(|s| s.to_string()).collect(),
            &hidden.iter().map(|&i| NodeId(i)).collect(),
            &edges
                .iter()
                .map(|&(a, b)| (NodeId(a), NodeId(b)))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn hidden_common_cause_is_into_into() {
        let g = dag(&["A", "B", "H"], &[2], &[(2, 0), (2, 1)]);
        assert_eq!(
            including_path_kind(&g, NodeId(0), NodeId(1)).unwrap(),
            IncludingPathKind::IntoInto
        );
    }

    #[test]
    fn direct_edge_is_out_into() {
        let g = dag(&["A", "B"], &[], &[(0, 1)]);
        assert_eq!(
            including_path_kind(&g, NodeId(0), NodeId(1)).unwrap(),
            IncludingPathKind::OutInto
        );
        assert_eq!(
            including_path_kind(&g, NodeId(1), NodeId(0)).unwrap(),
            IncludingPathKind::None
        );
    }

    #[test]
    fn observed_non_collider_disqualifies_path() {
        // A -> V -> B with V observed: V is a chain node, not a collider,
        // so the path does not qualify and the (A, B) kind is none.
        let g = dag(&["A", "B", "V"], &[], &[(0, 2), (2, 1)]);
        assert_eq!(
            including_path_kind(&g, NodeId(0), NodeId(1)).unwrap(),
            IncludingPathKind::None
        );
    }

    #[test]
    fn observed_collider_needs_directed_path_to_endpoint() {
        // A -> V <- B with childless observed V: collider without a route
        // back to an endpoint, so no including path.
        let g = dag(&["A", "B", "V"], &[], &[(0, 2), (1, 2)]);
        assert_eq!(
            including_path_kind(&g, NodeId(0), NodeId(1)).unwrap(),
            IncludingPathKind::None
        );
    }

    #[test]
    fn observed_collider_with_route_to_endpoint_qualifies() {
        // A -> V, H -> V, H -> B, V -> B (H hidden). The path A -> V <- H -> B
        // has observed collider V with V -> B, so it qualifies: out of A,
        // into B. The V-B pair picks up a bidirected edge through V <- H -> B
        // even though V -> B is an edge, since the into-into reading wins.
        let g = dag(
            &["A", "B", "V", "H"],
            &[3],
            &[(0, 2), (3, 2), (3, 1), (2, 1)],
        );
        assert_eq!(
            including_path_kind(&g, NodeId(0), NodeId(1)).unwrap(),
            IncludingPathKind::OutInto
        );
        let ipg = including_path_graph(&g).unwrap();
        assert_eq!(
            ipg.marks(NodeId(0), NodeId(1)).unwrap(),
            (EndMark::Tail, EndMark::Arrow)
        );
        assert_eq!(
            ipg.marks(NodeId(0), NodeId(2)).unwrap(),
            (EndMark::Tail, EndMark::Arrow)
        );
        assert_eq!(
            ipg.marks(NodeId(2), NodeId(1)).unwrap(),
            (EndMark::Arrow, EndMark::Arrow)
        );
    }

    #[test]
    fn hidden_collider_needs_directed_path_to_endpoint() {
        // A -> H1 <- H2 -> B with childless hidden H1: the lone path has a
        // hidden collider that reaches neither endpoint, so no edge.
        let g = dag(&["A", "B", "H1", "H2"], &[2, 3], &[(0, 2), (3, 2), (3, 1)]);
        assert_eq!(
            including_path_kind(&g, NodeId(0), NodeId(1)).unwrap(),
            IncludingPathKind::None
        );
        let ipg = including_path_graph(&g).unwrap();
        assert!(!ipg.has_edge(NodeId(0), NodeId(1)));
    }

    #[test]
    fn graph_of_hidden_free_dag_is_the_dag() {
        let g = dag(
            &["A", "B", "C", "D"],
            &[],
            &[(0, 1), (1, 2), (0, 3), (3, 2)],
        );
        let ipg = including_path_graph(&g).unwrap();
        assert_eq!(ipg.edge_count(), 4);
        for (a, b) in [(0u32, 1u32), (1, 2), (0, 3), (3, 2)] {
            assert_eq!(
                ipg.marks(NodeId(a), NodeId(b)).unwrap(),
                (EndMark::Tail, EndMark::Arrow)
            );
        }
    }

    #[test]
    fn common_cause_plus_child() {
        // H -> A, H -> B, A -> C (H hidden): A <-> B and A -> C.
        let g = dag(&["A", "B", "C", "H"], &[3], &[(3, 0), (3, 1), (0, 2)]);
        let ipg = including_path_graph(&g).unwrap();
        assert_eq!(ipg.edge_count(), 2);
        assert_eq!(
            ipg.marks(NodeId(0), NodeId(1)).unwrap(),
            (EndMark::Arrow, EndMark::Arrow)
        );
        assert_eq!(
            ipg.marks(NodeId(0), NodeId(2)).unwrap(),
            (EndMark::Tail, EndMark::Arrow)
        );
    }

    #[test]
    fn shielded_common_cause_pair() {
        // H -> A, H -> B, B -> C, A -> C: pairwise classification gives
        // A <-> B plus the two directed edges; no extra marks appear.
        let g = dag(
            &["A", "B", "C", "H"],
            &[3],
            &[(3, 0), (3, 1), (1, 2), (0, 2)],
        );
        let ipg = including_path_graph(&g).unwrap();
        assert_eq!(ipg.edge_count(), 3);
        assert_eq!(
            ipg.marks(NodeId(0), NodeId(1)).unwrap(),
            (EndMark::Arrow, EndMark::Arrow)
        );
        assert_eq!(
            ipg.marks(NodeId(0), NodeId(2)).unwrap(),
            (EndMark::Tail, EndMark::Arrow)
        );
        assert_eq!(
            ipg.marks(NodeId(1), NodeId(2)).unwrap(),
            (EndMark::Tail, EndMark::Arrow)
        );
    }

    #[test]
    fn direct_edge_shadowed_by_common_cause() {
        // A -> B plus hidden H -> A, H -> B: the bidirected reading wins.
        let g = dag(&["A", "B", "H"], &[2], &[(0, 1), (2, 0), (2, 1)]);
        let ipg = including_path_graph(&g).unwrap();
        assert_eq!(
            ipg.marks(NodeId(0), NodeId(1)).unwrap(),
            (EndMark::Arrow, EndMark::Arrow)
        );
    }

    #[test]
    fn budget_is_enforced() {
        let labels: Vec<String> = (0..17).map(|i| format!("N{i}")).collect();
        let g = Dag::new(labels, &BTreeSet::new(), &[]).unwrap();
        assert!(matches!(
            including_path_graph(&g),
            Err(LatentError::BudgetExceeded {
                nodes: 17,
                budget: 16
            })
        ));
        assert!(including_path_graph_with(&g, 17).is_ok());
    }

    #[test]
    fn hidden_endpoint_is_rejected() {
        let g = dag(&["A", "H"], &[1], &[(1, 0)]);
        assert!(matches!(
            including_path_kind(&g, NodeId(0), NodeId(1)),
            Err(LatentError::HiddenEndpoint(_))
        ));
    }

    #[test]
    fn forbidden_chain_detector_finds_planted_instance() {
        // Hand-built mixed graph: path A -> B1 <-> B2 <- C with back
        // edges B2 -> A and B1 -> C. Never produced by projection; the
        // detector must still recognize it.
        let g = MixedGraph::new(
            ["A", "B1", "B2", "C"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
        .unwrap()
        .add_edge(NodeId(0), NodeId(1), EndMark::Tail, EndMark::Arrow)
        .unwrap()
        .add_edge(NodeId(1), NodeId(2), EndMark::Arrow, EndMark::Arrow)
        .unwrap()
        .add_edge(NodeId(3), NodeId(2), EndMark::Tail, EndMark::Arrow)
        .unwrap()
        .add_edge(NodeId(2), NodeId(0), EndMark::Tail, EndMark::Arrow)
        .unwrap()
        .add_edge(NodeId(1), NodeId(3), EndMark::Tail, EndMark::Arrow)
        .unwrap();
        let witness = find_forbidden_collider_chain(&g).expect("planted chain");
        assert_eq!(witness, vec![NodeId(0), NodeId(1), NodeId(2), NodeId(3)]);
    }

    #[test]
    fn forbidden_chain_absent_from_simple_projections() {
        let g = dag(
            &["A", "B", "C", "H"],
            &[3],
            &[(3, 0), (3, 1), (1, 2), (0, 2)],
        );
        let ipg = including_path_graph(&g).unwrap();
        assert_eq!(find_forbidden_collider_chain(&ipg), None);
    }
}
