use std::fmt::Write;

use super::{check_len, Graph, PathPoint, WeightVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Renders the network in Graphviz DOT.
///
/// Arcs are labelled with their weight; arcs of `highlight` are drawn solid
/// and every other arc dashed.
pub fn export_dot<T: Scalar>(g: &Graph, w: &WeightVector<T>, highlight: &PathPoint<T>) -> Result<String> {
    check_len(g.arc_count(), w.len())?;
    check_len(g.arc_count(), highlight.len())?;
    if !highlight.is_binary() {
        return Err(Error::InvalidArgument(
            "highlighted path must be a binary indicator".into(),
        ));
    }
    let mut out = String::new();
    writeln!(out, "digraph network {{").unwrap();
    writeln!(out, "  rankdir=LR;").unwrap();
    for n in 0..g.node_count() {
        let shape = if n == g.source() || n == g.sink() {
            "doublecircle"
        } else {
            "circle"
        };
        writeln!(out, "  n{n} [label=\"{n}\", shape={shape}];").unwrap();
    }
    for (a, &(tail, head)) in g.arcs().iter().enumerate() {
        let style = if highlight.mass()[a] == T::one() {
            "solid, penwidth=2"
        } else {
            "dashed"
        };
        writeln!(
            out,
            "  n{tail} -> n{head} [label=\"{:.3}\", style={style}];",
            w.values()[a].as_f64()
        )
        .unwrap();
    }
    out.push_str("}\n");
    Ok(out)
}
