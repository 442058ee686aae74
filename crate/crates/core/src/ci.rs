// SPDX-License-Identifier: MIT
//! Constraint-based recovery of a partially oriented including path graph
//! from conditional-independence information.
//!
//! The pipeline is: build the complete graph and delete separable pairs
//! while recording their separating sets ([`skeleton`]), orient unshielded
//! colliders from those sets ([`orient_colliders`]), then repeatedly apply
//! four orientation rules to a fixpoint ([`orient_loop`]):
//!
//! - `Dp`: an edge alongside a directed path picks up an arrowhead;
//! - `Ds`: an edge at an established collider picks up an arrowhead when
//!   some conditioning set through the fourth node separates the collider's
//!   shoulders;
//! - `Dd`: a definite discriminating path decides the collider status of a
//!   triangle's middle node from the recorded separating set;
//! - `Dc`: a non-collider constraint with one arrowhead forces the other
//!   edge to point away.
//!
//! Independence facts come from an [`IndependenceSource`]: either an exact
//! d-separation oracle over a ground-truth DAG or a statistical test on
//! categorical data. Mark changes are monotone (circle to arrow or tail,
//! never back); a rule demanding the overwrite of a fixed mark is reported
//! as a contradiction, which signals an unfaithful source.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Mutex;

use thiserror::Error;

use crate::dsep::{self, SeparationQuery};
use crate::graph::{Dag, EndMark, GraphError, MixedGraph, NodeId};
use crate::indep::{self, Dataset, IndepError};

/// Default cap on conditioning-set size in statistical mode.
pub const DEFAULT_MAX_COND: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CiError {
    #[error("need at least two variables")]
    TooFewNodes,
    #[error("oracle mode supports at most 64 observed variables")]
    TooManyNodes,
    #[error(
        "rule {rule} demands {demanded} at {at} on edge {a} - {b}, but {existing} is already fixed"
    )]
    Contradiction {
        rule: RuleTag,
        a: String,
        b: String,
        at: String,
        existing: EndMark,
        demanded: EndMark,
    },
    #[error("no separating set recorded for non-adjacent pair {0} - {1}")]
    MissingSepset(String, String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dsep(#[from] dsep::DsepError),
    #[error(transparent)]
    Data(#[from] IndepError),
}

/// Which rule set a mark.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleTag {
    C,
    Dp,
    Ds,
    Dd,
    Dc,
}

impl fmt::Display for RuleTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuleTag::C => write!(f, "C"),
            RuleTag::Dp => write!(f, "Dp"),
            RuleTag::Ds => write!(f, "Ds"),
            RuleTag::Dd => write!(f, "Dd"),
            RuleTag::Dc => write!(f, "Dc"),
        }
    }
}

/// One logged orientation step: the marks actually set on one edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrientationEvent {
    pub rule: RuleTag,
    /// Edge as an unordered pair, stored (min, max).
    pub edge: (NodeId, NodeId),
    /// (end node, new mark) entries that changed from circle.
    pub marks_set: Vec<(NodeId, EndMark)>,
}

/// Symmetric table of recorded separating sets.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SepsetTable {
    map: BTreeMap<(NodeId, NodeId), BTreeSet<NodeId>>,
}

impl SepsetTable {
    pub fn new() -> Self {
        Self::default()
    }

    fn key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
        if a < b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn insert(&mut self, a: NodeId, b: NodeId, s: BTreeSet<NodeId>) {
        self.map.insert(Self::key(a, b), s);
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Option<&BTreeSet<NodeId>> {
        self.map.get(&Self::key(a, b))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &BTreeSet<NodeId>)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Partially oriented including path graph under construction: the mark
/// state, the separating sets that produced it, and the orientation log.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialIpg {
    pub graph: MixedGraph,
    pub sepsets: SepsetTable,
    pub log: Vec<OrientationEvent>,
}

impl PartialIpg {
    pub fn new(graph: MixedGraph, sepsets: SepsetTable) -> Self {
        PartialIpg {
            graph,
            sepsets,
            log: Vec::new(),
        }
    }

    /// Sets `mark` at the `at` end of the `at`–`other` edge, reporting
    /// whether anything changed. Overwriting a fixed mark with a different
    /// one is a contradiction.
    fn demand_mark(
        &mut self,
        rule: RuleTag,
        at: NodeId,
        other: NodeId,
        mark: EndMark,
    ) -> Result<bool, CiError> {
        let existing = self.graph.mark_at(at, other)?;
        if existing == mark {
            return Ok(false);
        }
        if existing != EndMark::Circle {
            return Err(CiError::Contradiction {
                rule,
                a: self.graph.label(at).to_string(),
                b: self.graph.label(other).to_string(),
                at: self.graph.label(at).to_string(),
                existing,
                demanded: mark,
            });
        }
        self.graph.set_mark_at(at, other, mark)?;
        Ok(true)
    }

    /// Applies one rule instance touching a single edge and logs the marks
    /// that actually changed. Returns true when something changed.
    fn fire(
        &mut self,
        rule: RuleTag,
        a: NodeId,
        b: NodeId,
        demands: &[(NodeId, NodeId, EndMark)],
    ) -> Result<bool, CiError> {
        let mut set = Vec::new();
        for &(at, other, mark) in demands {
            if self.demand_mark(rule, at, other, mark)? {
                set.push((at, mark));
            }
        }
        if set.is_empty() {
            return Ok(false);
        }
        let edge = if a < b { (a, b) } else { (b, a) };
        self.log.push(OrientationEvent {
            rule,
            edge,
            marks_set: set,
        });
        Ok(true)
    }
}

/// Where conditional-independence answers come from.
pub enum IndependenceSource {
    Oracle(OracleSource),
    Statistical(StatisticalSource),
}

/// Exact d-separation oracle over a ground-truth DAG; queries are phrased
/// over the observed nodes, in ascending index order.
pub struct OracleSource {
    dag: Dag,
    /// Query node i corresponds to `observed[i]` in the DAG.
    observed: Vec<NodeId>,
    /// Memo for the "some separating set through d" quantifier.
    connected_cache: Mutex<HashMap<(u32, u32, u32), bool>>,
}

/// G-squared testing over a categorical dataset. Conditioning sets are
/// drawn from current adjacency neighborhoods, capped at `max_cond`.
pub struct StatisticalSource {
    data: Dataset,
    alpha: f64,
    max_cond: usize,
    audit: Option<Mutex<Vec<String>>>,
    connected_cache: Mutex<HashMap<(u32, u32, u32), bool>>,
}

impl IndependenceSource {
    pub fn oracle(dag: Dag) -> Result<Self, CiError> {
        let observed = dag.observed();
        if observed.len() > 64 {
            return Err(CiError::TooManyNodes);
        }
        Ok(IndependenceSource::Oracle(OracleSource {
            dag,
            observed,
            connected_cache: Mutex::new(HashMap::new()),
        }))
    }

    pub fn statistical(data: Dataset, alpha: f64, max_cond: Option<usize>) -> Self {
        IndependenceSource::Statistical(StatisticalSource {
            data,
            alpha,
            max_cond: max_cond.unwrap_or(DEFAULT_MAX_COND),
            audit: None,
            connected_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Enables collection of one audit line per statistical test.
    pub fn with_audit_log(self) -> Self {
        match self {
            IndependenceSource::Statistical(mut s) => {
                s.audit = Some(Mutex::new(Vec::new()));
                IndependenceSource::Statistical(s)
            }
            other => other,
        }
    }

    pub fn audit_log(&self) -> Vec<String> {
        match self {
            IndependenceSource::Statistical(s) => s
                .audit
                .as_ref()
                .map(|m| m.lock().unwrap().clone())
                .unwrap_or_default(),
            IndependenceSource::Oracle(_) => Vec::new(),
        }
    }

    /// Variable labels, defining the query node indexing.
    pub fn variables(&self) -> Vec<String> {
        match self {
            IndependenceSource::Oracle(o) => o
                .observed
                .iter()
                .map(|&v| o.dag.label(v).to_string())
                .collect(),
            IndependenceSource::Statistical(s) => s.data.variable_names(),
        }
    }

    pub fn is_independent(
        &self,
        x: NodeId,
        y: NodeId,
        s: &BTreeSet<NodeId>,
    ) -> Result<bool, CiError> {
        match self {
            IndependenceSource::Oracle(o) => {
                let q = SeparationQuery::new(
                    o.observed[x.index()],
                    o.observed[y.index()],
                    s.iter().map(|&v| o.observed[v.index()]).collect(),
                );
                Ok(dsep::d_separated(&o.dag, &q)?)
            }
            IndependenceSource::Statistical(t) => {
                let cols: BTreeSet<usize> = s.iter().map(|v| v.index()).collect();
                let out = indep::ci_test(&t.data, x.index(), y.index(), &cols, t.alpha)?;
                if let Some(audit) = &t.audit {
                    audit.lock().unwrap().push(indep::audit_line(
                        &t.data,
                        x.index(),
                        y.index(),
                        &cols,
                        out.p_value,
                    ));
                }
                Ok(out.independent)
            }
        }
    }

    /// First separating set for (x, y) under this source's search policy:
    /// subsets in increasing cardinality, lexicographic within each size.
    /// The oracle searches all other variables without a size bound; the
    /// statistical source searches the current neighborhood pool of x and
    /// y up to `max_cond`.
    fn find_separating_set(
        &self,
        x: NodeId,
        y: NodeId,
        graph: &MixedGraph,
    ) -> Result<Option<BTreeSet<NodeId>>, CiError> {
        let (pool, cap) = self.search_pool(x, y, graph);
        for size in 0..=pool.len().min(cap) {
            let mut sized = Vec::new();
            dsep::combinations_into(&pool, size, &mut sized);
            for s in sized {
                if self.is_independent(x, y, &s)? {
                    return Ok(Some(s));
                }
            }
        }
        Ok(None)
    }

    fn search_pool(&self, x: NodeId, y: NodeId, graph: &MixedGraph) -> (Vec<NodeId>, usize) {
        match self {
            IndependenceSource::Oracle(o) => {
                let pool = (0..o.observed.len() as u32)
                    .map(NodeId)
                    .filter(|&v| v != x && v != y)
                    .collect();
                (pool, usize::MAX)
            }
            IndependenceSource::Statistical(s) => {
                let mut pool: BTreeSet<NodeId> = graph.adjacent_nodes(x).into_iter().collect();
                pool.extend(graph.adjacent_nodes(y));
                pool.remove(&x);
                pool.remove(&y);
                (pool.into_iter().collect(), s.max_cond)
            }
        }
    }

    /// True iff some conditioning set containing `d` separates `a` and `c`
    /// (the negation of "a and c are d-connected given d"). The oracle
    /// enumerates every subset; the statistical source enumerates
    /// neighborhood subsets of a and c forced to contain d.
    fn separator_exists_containing(
        &self,
        a: NodeId,
        c: NodeId,
        d: NodeId,
        graph: &MixedGraph,
    ) -> Result<bool, CiError> {
        let cache = match self {
            IndependenceSource::Oracle(o) => &o.connected_cache,
            IndependenceSource::Statistical(s) => &s.connected_cache,
        };
        let key = (a.0, c.0, d.0);
        if let Some(&hit) = cache.lock().unwrap().get(&key) {
            return Ok(hit);
        }
        let answer = match self {
            IndependenceSource::Oracle(o) => !dsep::d_connected_given_node(
                &o.dag,
                o.observed[a.index()],
                o.observed[c.index()],
                o.observed[d.index()],
            )?,
            IndependenceSource::Statistical(s) => {
                let mut pool: BTreeSet<NodeId> = graph.adjacent_nodes(a).into_iter().collect();
                pool.extend(graph.adjacent_nodes(c));
                pool.remove(&a);
                pool.remove(&c);
                pool.remove(&d);
                let pool: Vec<NodeId> = pool.into_iter().collect();
                let cap = s.max_cond.saturating_sub(1);
                let mut found = false;
                'outer: for size in 0..=pool.len().min(cap) {
                    let mut sized = Vec::new();
                    dsep::combinations_into(&pool, size, &mut sized);
                    for t in sized {
                        let mut set = t;
                        set.insert(d);
                        if self.is_independent(a, c, &set)? {
                            found = true;
                            break 'outer;
                        }
                    }
                }
                found
            }
        };
        cache.lock().unwrap().insert(key, answer);
        Ok(answer)
    }
}

/// Builds the skeleton: the complete circle/circle graph minus every pair
/// the source can separate, with each removal's set recorded on both
/// orderings of the pair. Pairs are scanned in ascending order and subset
/// search follows the source's policy.
pub fn skeleton(src: &IndependenceSource) -> Result<(MixedGraph, SepsetTable), CiError> {
    let labels = src.variables();
    if labels.len() < 2 {
        return Err(CiError::TooFewNodes);
    }
    let n = labels.len() as u32;
    let mut graph = MixedGraph::new(labels)?;
    for i in 0..n {
        for j in (i + 1)..n {
            graph = graph.add_edge(NodeId(i), NodeId(j), EndMark::Circle, EndMark::Circle)?;
        }
    }
    let mut sepsets = SepsetTable::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (x, y) = (NodeId(i), NodeId(j));
            if let Some(s) = src.find_separating_set(x, y, &graph)? {
                graph.remove_edge(x, y);
                sepsets.insert(x, y, s);
            }
        }
    }
    Ok((graph, sepsets))
}

/// Orients every unshielded triple: arrowheads at the middle node when it
/// is absent from the recorded separating set of the endpoints, a
/// non-collider constraint when it is present.
pub fn orient_colliders(mut p: PartialIpg) -> Result<PartialIpg, CiError> {
    let nodes: Vec<NodeId> = p.graph.nodes().collect();
    for &b in &nodes {
        let adj = p.graph.adjacent_nodes(b);
        for (i, &a) in adj.iter().enumerate() {
            for &c in &adj[i + 1..] {
                if p.graph.has_edge(a, c) {
                    continue;
                }
                let sepset = p.sepsets.get(a, c).ok_or_else(|| {
                    CiError::MissingSepset(
                        p.graph.label(a).to_string(),
                        p.graph.label(c).to_string(),
                    )
                })?;
                if sepset.contains(&b) {
                    p.graph.add_noncollider(a, b, c)?;
                } else {
                    p.fire(RuleTag::C, a, b, &[(b, a, EndMark::Arrow)])?;
                    p.fire(RuleTag::C, c, b, &[(b, c, EndMark::Arrow)])?;
                }
            }
        }
    }
    Ok(p)
}

/// Searches for a definite discriminating path for `b` between `x` and
/// `y`: an undirected path from `x` to `y` through `b` on which every
/// other interior vertex is a collider or definite non-collider, every
/// edge not incident to `b` points toward `b`, interior colliders on the
/// x side are parents of `y` (and symmetrically), interior non-colliders
/// have an arrowhead from the far endpoint, and `x`, `y` are non-adjacent.
/// Depth-first with ascending-index tie-breaking; returns the first hit.
pub fn find_definite_discriminating_path(
    p: &PartialIpg,
    x: NodeId,
    y: NodeId,
    b: NodeId,
) -> Option<Vec<NodeId>> {
    find_ddp(&p.graph, x, y, b, false)
}

fn find_ddp(
    g: &MixedGraph,
    x: NodeId,
    y: NodeId,
    b: NodeId,
    require_triangle: bool,
) -> Option<Vec<NodeId>> {
    if x == y || b == x || b == y {
        return None;
    }
    if g.has_edge(x, y) {
        return None;
    }
    let mut path = vec![x];
    let mut on_path = vec![false; g.node_count()];
    on_path[x.index()] = true;
    if ddp_search(g, y, b, require_triangle, &mut path, &mut on_path) {
        Some(path)
    } else {
        None
    }
}

fn ddp_search(
    g: &MixedGraph,
    y: NodeId,
    b: NodeId,
    require_triangle: bool,
    path: &mut Vec<NodeId>,
    on_path: &mut Vec<bool>,
) -> bool {
    let v = *path.last().unwrap();
    let b_placed = path.contains(&b);
    for w in g.adjacent_nodes(v) {
        if on_path[w.index()] {
            continue;
        }
        // Every edge not incident to b carries an arrowhead at its end
        // nearer to b.
        if !b_placed && w != b && g.mark_at(w, v).unwrap() != EndMark::Arrow {
            continue;
        }
        if b_placed && v != b && g.mark_at(v, w).unwrap() != EndMark::Arrow {
            continue;
        }
        // With v's second path edge fixed, v's interior status is decided.
        if path.len() >= 2 && v != b {
            let prev = path[path.len() - 2];
            let into_prev = g.mark_at(v, prev).unwrap();
            let into_next = g.mark_at(v, w).unwrap();
            let collider = into_prev == EndMark::Arrow && into_next == EndMark::Arrow;
            let definite_noncollider = into_prev == EndMark::Tail
                || into_next == EndMark::Tail
                || g.is_noncollider(prev, v, w);
            if !collider && !definite_noncollider {
                continue;
            }
            let far = if b_placed { path[0] } else { y };
            let side_ok = if collider {
                g.is_directed_edge(v, far)
            } else {
                g.has_edge(v, far) && g.mark_at(v, far).unwrap() == EndMark::Arrow
            };
            if !side_ok {
                continue;
            }
        }
        if w == y {
            if !b_placed {
                continue;
            }
            if require_triangle {
                let m = path.iter().position(|&u| u == b).unwrap();
                let p_node = path[m - 1];
                let r_node = if m + 1 < path.len() { path[m + 1] } else { y };
                if !g.has_edge(p_node, r_node) {
                    continue;
                }
            }
            path.push(y);
            return true;
        }
        path.push(w);
        on_path[w.index()] = true;
        if ddp_search(g, y, b, require_triangle, path, on_path) {
            return true;
        }
        on_path[w.index()] = false;
        path.pop();
    }
    false
}

/// Runs the orientation rules to a fixpoint. Each pass scans the rules in
/// priority order and fires the first instance that changes the state;
/// passes repeat until no rule applies.
pub fn orient_loop(mut p: PartialIpg, src: &IndependenceSource) -> Result<PartialIpg, CiError> {
    loop {
        let fired = try_directed_path_rule(&mut p)?
            || try_separating_collider_rule(&mut p, src)?
            || try_discriminating_path_rule(&mut p)?
            || try_noncollider_propagation_rule(&mut p)?;
        if !fired {
            return Ok(p);
        }
    }
}

/// Dp: a directed path from a to b plus an a–b edge puts an arrowhead at b.
fn try_directed_path_rule(p: &mut PartialIpg) -> Result<bool, CiError> {
    let nodes: Vec<NodeId> = p.graph.nodes().collect();
    for &a in &nodes {
        for &b in &nodes {
            if a == b || !p.graph.has_edge(a, b) {
                continue;
            }
            if p.graph.mark_at(b, a)? == EndMark::Arrow {
                continue; // nothing to change
            }
            if p.graph.directed_path_exists(a, b)?
                && p.fire(RuleTag::Dp, a, b, &[(b, a, EndMark::Arrow)])?
            {
                return Ok(true);
            }
        }
    }
    Ok(false)
}

/// Ds: b is a collider along a–b–c, d is another neighbor of b, and some
/// conditioning set through d separates a and c: the b–d edge points into b.
fn try_separating_collider_rule(
    p: &mut PartialIpg,
    src: &IndependenceSource,
) -> Result<bool, CiError> {
    let nodes: Vec<NodeId> = p.graph.nodes().collect();
    for &b in &nodes {
        let adj = p.graph.adjacent_nodes(b);
        for &d in &adj {
            if p.graph.mark_at(b, d)? == EndMark::Arrow {
                continue; // nothing to change
            }
            for (i, &a) in adj.iter().enumerate() {
                if a == d {
                    continue;
                }
                for &c in &adj[i + 1..] {
                    if c == d || !p.graph.is_collider(a, b, c)? {
                        continue;
                    }
                    if src.separator_exists_containing(a, c, d, &p.graph)?
                        && p.fire(RuleTag::Ds, b, d, &[(b, d, EndMark::Arrow)])?
                    {
                        return Ok(true);
                    }
                }
            }
        }
    }
    Ok(false)
}

/// Dd: a definite discriminating path between x and y for m, with m's path
/// neighbors forming a triangle with m, decides m's collider status from
/// the recorded separating set of (x, y).
fn try_discriminating_path_rule(p: &mut PartialIpg) -> Result<bool, CiError> {
    let nodes: Vec<NodeId> = p.graph.nodes().collect();
    for &m in &nodes {
        if p.graph.adjacent_nodes(m).len() < 2 {
            continue;
        }
        for &x in &nodes {
            for &y in &nodes {
                if x >= y || x == m || y == m || p.graph.has_edge(x, y) {
                    continue;
                }
                let Some(path) = find_ddp(&p.graph, x, y, m, true) else {
                    continue;
                };
                let mid = path.iter().position(|&u| u == m).unwrap();
                let p_node = path[mid - 1];
                let r_node = path[mid + 1];
                let sepset = p.sepsets.get(x, y).ok_or_else(|| {
                    CiError::MissingSepset(
                        p.graph.label(x).to_string(),
                        p.graph.label(y).to_string(),
                    )
                })?;
                if sepset.contains(&m) {
                    if p.graph.add_noncollider(p_node, m, r_node)? {
                        return Ok(true);
                    }
                } else {
                    let first = p.fire(RuleTag::Dd, p_node, m, &[(m, p_node, EndMark::Arrow)])?;
                    let second = p.fire(RuleTag::Dd, r_node, m, &[(m, r_node, EndMark::Arrow)])?;
                    if first || second {
                        return Ok(true);
                    }
                }
            }
        }
    }
    Ok(false)
}

/// Dc: an arrowhead into the middle of a non-collider constraint forces
/// the other constrained edge to point out of the middle.
fn try_noncollider_propagation_rule(p: &mut PartialIpg) -> Result<bool, CiError> {
    for (a, b, c) in p.graph.noncolliders() {
        if p.graph.mark_at(b, a)? == EndMark::Arrow
            && p.fire(
                RuleTag::Dc,
                b,
                c,
                &[(b, c, EndMark::Tail), (c, b, EndMark::Arrow)],
            )?
        {
            return Ok(true);
        }
        if p.graph.mark_at(b, c)? == EndMark::Arrow
            && p.fire(
                RuleTag::Dc,
                b,
                a,
                &[(b, a, EndMark::Tail), (a, b, EndMark::Arrow)],
            )?
        {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Full recovery: skeleton, collider orientation, then the rule loop.
/// Deterministic given the source and its variable order.
pub fn run_ci(src: &IndependenceSource) -> Result<PartialIpg, CiError> {
    let (graph, sepsets) = skeleton(src)?;
    let p = PartialIpg::new(graph, sepsets);
    let p = orient_colliders(p)?;
    orient_loop(p, src)
}
