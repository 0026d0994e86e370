//! Linear minimization over the flow polytope via shortest paths.
//!
//! Both oracles share the same contract: negative cost entries are clamped
//! to zero, path cost is the left-to-right sum of arc costs starting from
//! the source, and among minimum-cost paths the one with the
//! lexicographically smallest node sequence wins.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{check_len, CostVector, Graph, PathPoint};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Largest graph accepted by [`brute_force_oracle`].
pub const BRUTE_FORCE_NODE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutput<T> {
    /// Binary indicator of the selected path.
    pub point: PathPoint<T>,
    /// Node sequence from source to sink.
    pub nodes: Vec<usize>,
    /// Arc indices along the path, in travel order.
    pub arcs: Vec<usize>,
    /// Path cost under the clamped cost vector.
    pub cost: T,
    /// Number of cost entries that were negative and clamped to zero.
    pub clamped: usize,
}

fn clamp_costs<T: Scalar>(c: &CostVector<T>) -> (Vec<T>, usize) {
    let mut clamped = 0;
    let costs = c
        .values()
        .iter()
        .map(|&v| {
            if v < T::zero() {
                clamped += 1;
                T::zero()
            } else {
                v
            }
        })
        .collect();
    (costs, clamped)
}

struct Entry<T> {
    dist: T,
    node: usize,
}

impl<T: Scalar> PartialEq for Entry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for Entry<T> {}

impl<T: Scalar> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Entry<T> {
    // min-heap on distance; distances are finite and nonnegative
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .unwrap_or(Ordering::Equal)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Node sequence from the source to `node` following parent arcs.
fn trace_back(g: &Graph, parent: &[Option<usize>], node: usize) -> Vec<usize> {
    let mut seq = vec![node];
    let mut cur = node;
    while let Some(a) = parent[cur] {
        cur = g.arcs()[a].0;
        seq.push(cur);
    }
    seq.reverse();
    seq
}

fn finish<T: Scalar>(g: &Graph, nodes: Vec<usize>, cost: T, clamped: usize) -> OracleOutput<T> {
    let arcs = g.path_from_nodes(&nodes).expect("node sequence follows existing arcs");
    OracleOutput {
        point: PathPoint::indicator(g.arc_count(), &arcs),
        nodes,
        arcs,
        cost,
        clamped,
    }
}

/// Dijkstra search on the clamped costs with lexicographic tie-breaking.
///
/// Among heap entries at equal distance the node with the smallest source
/// sequence is settled first, and equal-distance relaxations replace the
/// parent whenever they yield a smaller sequence. Ties are rare with
/// continuous costs, so sequences are only materialized when one occurs.
pub fn shortest_path_oracle<T: Scalar>(g: &Graph, c: &CostVector<T>) -> Result<OracleOutput<T>> {
    check_len(g.arc_count(), c.len())?;
    let (cost, clamped) = clamp_costs(c);
    let n = g.node_count();
    let mut dist = vec![T::infinity(); n];
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();

    dist[g.source()] = T::zero();
    heap.push(Entry {
        dist: T::zero(),
        node: g.source(),
    });

    while let Some(top) = heap.pop() {
        if settled[top.node] || top.dist > dist[top.node] {
            continue;
        }
        let d = top.dist;
        let mut node = top.node;

        // Equal-distance candidates: settle the lexicographically smallest.
        let mut ties = Vec::new();
        while heap.peek().is_some_and(|e| e.dist == d) {
            let e = heap.pop().expect("peeked");
            if !settled[e.node] && e.dist == dist[e.node] && e.node != node && !ties.contains(&e.node) {
                ties.push(e.node);
            }
        }
        if !ties.is_empty() {
            let mut best_seq = trace_back(g, &parent, node);
            for &other in &ties {
                let seq = trace_back(g, &parent, other);
                if seq < best_seq {
                    best_seq = seq;
                    node = other;
                }
            }
            ties.push(top.node);
            for other in ties.into_iter().filter(|&o| o != node) {
                heap.push(Entry { dist: d, node: other });
            }
        }

        settled[node] = true;
        if node == g.sink() {
            break;
        }
        for &a in g.out_arcs(node) {
            let head = g.arcs()[a].1;
            if settled[head] {
                continue;
            }
            let nd = d + cost[a];
            if nd < dist[head] {
                dist[head] = nd;
                parent[head] = Some(a);
                heap.push(Entry { dist: nd, node: head });
            } else if nd == dist[head] {
                let mut candidate = trace_back(g, &parent, node);
                candidate.push(head);
                if candidate < trace_back(g, &parent, head) {
                    parent[head] = Some(a);
                }
            }
        }
    }

    if !settled[g.sink()] {
        return Err(Error::NoPath {
            source_node: g.source(),
            sink: g.sink(),
        });
    }
    let nodes = trace_back(g, &parent, g.sink());
    Ok(finish(g, nodes, dist[g.sink()], clamped))
}

/// Exhaustive minimization over every simple source-sink path.
///
/// Paths are enumerated depth-first with heads in increasing order, which
/// visits node sequences in lexicographic order, so keeping the first
/// strict improvement implements the shared tie-break.
pub fn brute_force_oracle<T: Scalar>(g: &Graph, c: &CostVector<T>) -> Result<OracleOutput<T>> {
    check_len(g.arc_count(), c.len())?;
    if g.node_count() > BRUTE_FORCE_NODE_LIMIT {
        return Err(Error::EnumerationGuard {
            nodes: g.node_count(),
            limit: BRUTE_FORCE_NODE_LIMIT,
        });
    }
    let (cost, clamped) = clamp_costs(c);

    struct Search<'a, T> {
        g: &'a Graph,
        cost: &'a [T],
        on_path: Vec<bool>,
        stack: Vec<usize>,
        best: Option<(T, Vec<usize>)>,
    }

    impl<T: Scalar> Search<'_, T> {
        fn visit(&mut self, node: usize, acc: T) {
            if node == self.g.sink() {
                if self.best.as_ref().is_none_or(|(b, _)| acc < *b) {
                    self.best = Some((acc, self.stack.clone()));
                }
                return;
            }
            for &a in self.g.out_arcs(node) {
                let head = self.g.arcs()[a].1;
                if self.on_path[head] {
                    continue;
                }
                self.on_path[head] = true;
                self.stack.push(head);
                self.visit(head, acc + self.cost[a]);
                self.stack.pop();
                self.on_path[head] = false;
            }
        }
    }

    let mut search = Search {
        g,
        cost: &cost,
        on_path: vec![false; g.node_count()],
        stack: vec![g.source()],
        best: None,
    };
    search.on_path[g.source()] = true;
    search.visit(g.source(), T::zero());

    let (best_cost, nodes) = search.best.ok_or(Error::NoPath {
        source_node: g.source(),
        sink: g.sink(),
    })?;
    Ok(finish(g, nodes, best_cost, clamped))
}
