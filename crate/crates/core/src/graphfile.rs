// SPDX-License-Identifier: MIT
//! Plain-text graph files.
//!
//! ```text
//! # comment
//! node A
//! node H hidden
//! A -> B
//! A <-> B
//! A o-> B
//! A o-o B
//! noncollider A B C
//! ```
//!
//! Directed edges are written tail end first, partially oriented edges
//! circle end first, and symmetric edges smaller node first, so rendering
//! then parsing reproduces the graph exactly.

use std::collections::BTreeSet;

use thiserror::Error;

use crate::graph::{Dag, EndMark, GraphError, MixedGraph, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Shape(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Neutral parsed form of a graph file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphDoc {
    /// (label, hidden) in declaration order.
    pub nodes: Vec<(String, bool)>,
    /// (from-label, to-label, mark at from, mark at to).
    pub edges: Vec<(String, String, EndMark, EndMark)>,
    pub noncolliders: Vec<(String, String, String)>,
}

impl GraphDoc {
    pub fn parse(text: &str) -> Result<GraphDoc, GraphFileError> {
        let mut doc = GraphDoc {
            nodes: Vec::new(),
            edges: Vec::new(),
            noncolliders: Vec::new(),
        };
        let mut declared = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tokens: Vec<&str> = line.split_whitespace().collect();
            let parse_err = |message: String| GraphFileError::Parse {
                line: line_no,
                message,
            };
            match tokens.as_slice() {
                ["node", label] => {
                    if !declared.insert(label.to_string()) {
                        return Err(parse_err(format!("node {label:?} declared twice")));
                    }
                    doc.nodes.push((label.to_string(), false));
                }
                ["node", label, "hidden"] => {
                    if !declared.insert(label.to_string()) {
                        return Err(parse_err(format!("node {label:?} declared twice")));
                    }
                    doc.nodes.push((label.to_string(), true));
                }
                ["noncollider", a, b, c] => {
                    doc.noncolliders
                        .push((a.to_string(), b.to_string(), c.to_string()));
                }
                [a, op, b] => {
                    let (ma, mb) = match *op {
                        "->" => (EndMark::Tail, EndMark::Arrow),
                        "<->" => (EndMark::Arrow, EndMark::Arrow),
                        "o->" => (EndMark::Circle, EndMark::Arrow),
                        "o-o" => (EndMark::Circle, EndMark::Circle),
                        other => {
                            return Err(parse_err(format!(
                                "unknown edge operator {other:?} (expected ->, <->, o->, o-o)"
                            )))
                        }
                    };
                    for label in [a, b] {
                        if declared.insert(label.to_string()) {
                            doc.nodes.push((label.to_string(), false));
                        }
                    }
                    doc.edges.push((a.to_string(), b.to_string(), ma, mb));
                }
                _ => {
                    return Err(parse_err(format!("cannot parse {line:?}")));
                }
            }
        }
        Ok(doc)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (label, hidden) in &self.nodes {
            if *hidden {
                out.push_str(&format!("node {label} hidden\n"));
            } else {
                out.push_str(&format!("node {label}\n"));
            }
        }
        for (a, b, ma, mb) in &self.edges {
            let op = match (ma, mb) {
                (EndMark::Tail, EndMark::Arrow) => "->",
                (EndMark::Arrow, EndMark::Arrow) => "<->",
                (EndMark::Circle, EndMark::Arrow) => "o->",
                (EndMark::Circle, EndMark::Circle) => "o-o",
                _ => unreachable!("documents only hold canonical edge forms"),
            };
            out.push_str(&format!("{a} {op} {b}\n"));
        }
        for (a, b, c) in &self.noncolliders {
            out.push_str(&format!("noncollider {a} {b} {c}\n"));
        }
        out
    }

    pub fn from_dag(g: &Dag) -> GraphDoc {
        let nodes = g
            .nodes()
            .map(|v| (g.label(v).to_string(), g.is_hidden(v)))
            .collect();
        let edges = g
            .edges()
            .into_iter()
            .map(|(a, b)| {
                (
                    g.label(a).to_string(),
                    g.label(b).to_string(),
                    EndMark::Tail,
                    EndMark::Arrow,
                )
            })
            .collect();
        GraphDoc {
            nodes,
            edges,
            noncolliders: Vec::new(),
        }
    }

    pub fn from_mixed(g: &MixedGraph) -> GraphDoc {
        let nodes = g.nodes().map(|v| (g.label(v).to_string(), false)).collect();
        let mut edges = Vec::new();
        for e in g.edges() {
            let (first, second, ma, mb) = match (e.mark_a, e.mark_b) {
                // Tail or circle end first, so the operator reads forward.
                (EndMark::Arrow, EndMark::Tail) => (e.b, e.a, EndMark::Tail, EndMark::Arrow),
                (EndMark::Arrow, EndMark::Circle) => (e.b, e.a, EndMark::Circle, EndMark::Arrow),
                (ma, mb) => (e.a, e.b, ma, mb),
            };
            edges.push((
                g.label(first).to_string(),
                g.label(second).to_string(),
                ma,
                mb,
            ));
        }
        let noncolliders = g
            .noncolliders()
            .into_iter()
            .map(|(a, b, c)| {
                (
                    g.label(a).to_string(),
                    g.label(b).to_string(),
                    g.label(c).to_string(),
                )
            })
            .collect();
        GraphDoc {
            nodes,
            edges,
            noncolliders,
        }
    }

    fn label_index(&self, label: &str) -> Result<NodeId, GraphFileError> {
        self.nodes
            .iter()
            .position(|(l, _)| l == label)
            .map(|i| NodeId(i as u32))
            .ok_or_else(|| GraphFileError::Shape(format!("unknown node {label:?}")))
    }

    /// Interprets the document as a DAG: every edge must be `->`, and no
    /// non-collider constraints may be present.
    pub fn to_dag(&self) -> Result<Dag, GraphFileError> {
        if !self.noncolliders.is_empty() {
            return Err(GraphFileError::Shape(
                "a DAG file cannot carry noncollider lines".into(),
            ));
        }
        let mut edges = Vec::new();
        for (a, b, ma, mb) in &self.edges {
            if (*ma, *mb) != (EndMark::Tail, EndMark::Arrow) {
                return Err(GraphFileError::Shape(format!(
                    "edge {a} - {b} is not a directed -> edge"
                )));
            }
            edges.push((self.label_index(a)?, self.label_index(b)?));
        }
        let labels = self.nodes.iter().map(|(l, _)| l.clone()).collect();
        let hidden = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, (_, h))| *h)
            .map(|(i, _)| NodeId(i as u32))
            .collect();
        Ok(Dag::new(labels, &hidden, &edges)?)
    }

    /// Interprets the document as a mixed graph over observed nodes;
    /// hidden declarations are rejected.
    pub fn to_mixed(&self) -> Result<MixedGraph, GraphFileError> {
        if let Some((label, _)) = self.nodes.iter().find(|(_, h)| *h) {
            return Err(GraphFileError::Shape(format!(
                "mixed graphs hold observed nodes only, but {label:?} is hidden"
            )));
        }
        let labels = self.nodes.iter().map(|(l, _)| l.clone()).collect();
        let mut g = MixedGraph::new(labels)?;
        for (a, b, ma, mb) in &self.edges {
            g = g.add_edge(self.label_index(a)?, self.label_index(b)?, *ma, *mb)?;
        }
        for (a, b, c) in &self.noncolliders {
            g.add_noncollider(
                self.label_index(a)?,
                self.label_index(b)?,
                self.label_index(c)?,
            )?;
        }
        Ok(g)
    }
}

/// FNV-1a 64 digest of a graph's canonical text rendering.
pub fn digest(text: &str) -> u64 {
    let mut hash = 0xCBF2_9CE4_8422_2325u64;
    for byte in text.as_bytes() {
        hash ^= *byte as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01B3);
    }
    hash
}
