// SPDX-License-Identifier: MIT
//! Graphviz DOT rendering. End-mark convention: tail = plain line end,
//! arrow = normal head, circle = open dot. Every edge is drawn once with
//! both of its decorations.

use cibn_core::graph::{EndMark, MixedGraph};

fn decoration(mark: EndMark) -> &'static str {
    match mark {
        EndMark::Tail => "none",
        EndMark::Arrow => "normal",
        EndMark::Circle => "odot",
    }
}

pub fn render_mixed(g: &MixedGraph, name: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("digraph {name} {{\n"));
    out.push_str("  edge [dir=both];\n");
    for v in g.nodes() {
        out.push_str(&format!("  \"{}\";\n", g.label(v)));
    }
    for e in g.edges() {
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [arrowtail={}, arrowhead={}];\n",
            g.label(e.a),
            g.label(e.b),
            decoration(e.mark_a),
            decoration(e.mark_b),
        ));
    }
    out.push_str("}\n");
    out
}
