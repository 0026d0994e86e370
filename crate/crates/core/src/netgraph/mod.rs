//! Directed arc-indexed networks, the shortest-path linear minimization
//! oracle, and feasibility checks for the source-sink flow polytope.

mod dot;
mod generate;
mod oracle;

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{dot as inner, Scalar};

pub use dot::export_dot;
pub use generate::{generate_counted, generate_random_network, DEFAULT_RETRY_BUDGET};
pub use oracle::{brute_force_oracle, shortest_path_oracle, OracleOutput, BRUTE_FORCE_NODE_LIMIT};

/// Immutable directed graph with a designated source and sink.
///
/// Arcs keep their insertion order; that order defines the coordinates of
/// every arc-indexed vector ([`WeightVector`], [`PathPoint`], [`CostVector`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    node_count: usize,
    arcs: Vec<(usize, usize)>,
    source: usize,
    sink: usize,
    // CSR adjacency: out-arcs of node n are out_arcs[out_start[n]..out_start[n + 1]],
    // sorted by head id.
    out_start: Vec<usize>,
    out_arcs: Vec<usize>,
}

impl Graph {
    pub fn new(node_count: usize, arcs: Vec<(usize, usize)>, source: usize, sink: usize) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidGraph("graph has no nodes".into()));
        }
        if source >= node_count || sink >= node_count {
            return Err(Error::InvalidGraph(format!(
                "terminals ({source}, {sink}) out of range for {node_count} nodes"
            )));
        }
        if source == sink {
            return Err(Error::InvalidGraph("source equals sink".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(arcs.len());
        for &(tail, head) in &arcs {
            if tail >= node_count || head >= node_count {
                return Err(Error::InvalidGraph(format!(
                    "arc ({tail}, {head}) references a missing node"
                )));
            }
            if tail == head {
                return Err(Error::InvalidGraph(format!("self-loop at node {tail}")));
            }
            if !seen.insert((tail, head)) {
                return Err(Error::InvalidGraph(format!("duplicate arc ({tail}, {head})")));
            }
        }

        let mut degree = vec![0usize; node_count];
        for &(tail, _) in &arcs {
            degree[tail] += 1;
        }
        let mut out_start = vec![0usize; node_count + 1];
        for n in 0..node_count {
            out_start[n + 1] = out_start[n] + degree[n];
        }
        let mut fill = out_start.clone();
        let mut out_arcs = vec![0usize; arcs.len()];
        for (idx, &(tail, _)) in arcs.iter().enumerate() {
            out_arcs[fill[tail]] = idx;
            fill[tail] += 1;
        }
        for n in 0..node_count {
            out_arcs[out_start[n]..out_start[n + 1]].sort_by_key(|&a| arcs[a].1);
        }

        if let Some(n) = (0..node_count).find(|&n| n != sink && degree[n] == 0) {
            return Err(Error::InvalidGraph(format!("node {n} has no outgoing arc")));
        }

        let graph = Graph {
            node_count,
            arcs,
            source,
            sink,
            out_start,
            out_arcs,
        };
        if !graph.reachable(source, sink) {
            return Err(Error::NoPath {
                source_node: source,
                sink,
            });
        }
        Ok(graph)
    }

    /// Builds the arc-pair expansion of an undirected edge list.
    ///
    /// Edge `{a, b}` becomes arcs `a -> b` then `b -> a`, in edge order.
    pub fn from_undirected(node_count: usize, edges: &[(usize, usize)], source: usize, sink: usize) -> Result<Self> {
        let arcs = edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
        Graph::new(node_count, arcs, source, sink)
    }

    /// Same topology with another source-sink pair.
    pub fn with_terminals(&self, source: usize, sink: usize) -> Result<Self> {
        Graph::new(self.node_count, self.arcs.clone(), source, sink)
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn arcs(&self) -> &[(usize, usize)] {
        &self.arcs
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Arc indices leaving `node`, ordered by head id.
    pub fn out_arcs(&self, node: usize) -> &[usize] {
        &self.out_arcs[self.out_start[node]..self.out_start[node + 1]]
    }

    pub fn reachable(&self, from: usize, to: usize) -> bool {
        self.reachable_from(from)[to]
    }

    /// Nodes reachable from `from` (including itself), by breadth-first search.
    pub fn reachable_from(&self, from: usize) -> Vec<bool> {
        let mut visited = vec![false; self.node_count];
        let mut queue = VecDeque::from([from]);
        visited[from] = true;
        while let Some(n) = queue.pop_front() {
            for &a in self.out_arcs(n) {
                let h = self.arcs[a].1;
                if !visited[h] {
                    visited[h] = true;
                    queue.push_back(h);
                }
            }
        }
        visited
    }

    /// Arc set of the path visiting `nodes` in order.
    pub fn path_from_nodes(&self, nodes: &[usize]) -> Option<Vec<usize>> {
        nodes
            .windows(2)
            .map(|w| self.out_arcs(w[0]).iter().copied().find(|&a| self.arcs[a].1 == w[1]))
            .collect()
    }

    pub fn to_document(&self) -> GraphDocument {
        GraphDocument {
            nodes: self.node_count,
            arcs: self.arcs.iter().map(|&(t, h)| [t, h]).collect(),
            source: self.source,
            sink: self.sink,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("graph document serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, GraphLoadError> {
        let doc: GraphDocument = serde_json::from_str(text).map_err(GraphLoadError::Parse)?;
        doc.into_graph().map_err(GraphLoadError::Graph)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Graph::from_json(&text).map_err(|e| match e {
            GraphLoadError::Parse(source) => Error::Json {
                path: path.to_path_buf(),
                source,
            },
            GraphLoadError::Graph(err) => err,
        })
    }
}

#[derive(Debug)]
pub enum GraphLoadError {
    Parse(serde_json::Error),
    Graph(Error),
}

impl std::fmt::Display for GraphLoadError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GraphLoadError::Parse(e) => write!(f, "malformed graph document: {e}"),
            GraphLoadError::Graph(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for GraphLoadError {}

/// JSON form of a [`Graph`]: `{nodes, arcs: [[tail, head], ...], source, sink}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDocument {
    pub nodes: usize,
    pub arcs: Vec<[usize; 2]>,
    pub source: usize,
    pub sink: usize,
}

impl GraphDocument {
    pub fn into_graph(self) -> Result<Graph> {
        let arcs = self.arcs.into_iter().map(|[t, h]| (t, h)).collect();
        Graph::new(self.nodes, arcs, self.source, self.sink)
    }
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}

/// Per-arc nonnegative traversal times observed at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector<T>(Vec<T>);

impl<T: Scalar> WeightVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidArgument(format!(
                "weight {i} is {}, expected a finite nonnegative value",
                values[i]
            )));
        }
        Ok(WeightVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        WeightVector(vec![T::zero(); len])
    }

    pub fn for_graph(g: &Graph, values: Vec<T>) -> Result<Self> {
        check_len(g.arc_count(), values.len())?;
        WeightVector::new(values)
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> T {
        inner(&self.0, &self.0).sqrt()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

/// Arc-indexed cost handed to the shortest-path oracle; entries may be negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostVector<T>(Vec<T>);

impl<T: Scalar> CostVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("cost {i} is not finite")));
        }
        Ok(CostVector(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<T: Scalar> From<&WeightVector<T>> for CostVector<T> {
    fn from(w: &WeightVector<T>) -> Self {
        CostVector(w.0.clone())
    }
}

/// A point of the flow polytope: arc-indexed mass in `[0, 1]`.
///
/// Binary points are path indicators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PathPoint<T>(Vec<T>);

impl<T: Scalar> PathPoint<T> {
    /// Wraps raw masses. Feasibility is checked separately by
    /// [`validate_path_point`].
    pub fn from_mass(mass: Vec<T>) -> Self {
        PathPoint(mass)
    }

    pub fn zeros(len: usize) -> Self {
        PathPoint(vec![T::zero(); len])
    }

    /// Indicator of the given arc set.
    pub fn indicator(arc_count: usize, arcs: &[usize]) -> Self {
        let mut mass = vec![T::zero(); arc_count];
        for &a in arcs {
            mass[a] = T::one();
        }
        PathPoint(mass)
    }

    pub fn mass(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.0.iter().all(|&m| m == T::zero() || m == T::one())
    }

    /// Indices of arcs carrying unit mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] == T::one()).collect()
    }

    /// `weight * self + (1 - weight) * other`.
    pub fn convex_combination(&self, weight: T, other: &PathPoint<T>) -> Result<Self> {
        check_len(self.len(), other.len())?;
        let rest = T::one() - weight;
        Ok(PathPoint(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(&a, &b)| weight * a + rest * b)
                .collect(),
        ))
    }

    /// Max-norm distance to `other`.
    pub fn max_abs_diff(&self, other: &PathPoint<T>) -> T {
        self.0
            .iter()
            .zip(&other.0)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

/// Maximum violation of each flow-polytope constraint family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeasibilityReport<T> {
    /// Unit out-flow at the source.
    pub source_outflow: T,
    /// Unit in-flow at the sink.
    pub sink_inflow: T,
    /// Conservation at every other node.
    pub conservation: T,
    /// Box bounds `0 <= x_e <= 1`.
    pub bounds: T,
}

impl<T: Scalar> FeasibilityReport<T> {
    pub fn max_violation(&self) -> T {
        self.source_outflow
            .max(self.sink_inflow)
            .max(self.conservation)
            .max(self.bounds)
    }

    pub fn is_feasible(&self) -> bool {
        self.max_violation() <= T::feasibility_tol()
    }
}

pub fn validate_path_point<T: Scalar>(g: &Graph, x: &PathPoint<T>) -> Result<FeasibilityReport<T>> {
    check_len(g.arc_count(), x.len())?;
    let mut inflow = vec![T::zero(); g.node_count()];
    let mut outflow = vec![T::zero(); g.node_count()];
    let mut bounds = T::zero();
    for (&(tail, head), &m) in g.arcs().iter().zip(x.mass()) {
        outflow[tail] = outflow[tail] + m;
        inflow[head] = inflow[head] + m;
        bounds = bounds.max(-m).max(m - T::one());
    }
    let conservation = (0..g.node_count())
        .filter(|&n| n != g.source() && n != g.sink())
        .fold(T::zero(), |acc, n| acc.max((inflow[n] - outflow[n]).abs()));
    Ok(FeasibilityReport {
        source_outflow: (outflow[g.source()] - T::one()).abs(),
        sink_inflow: (inflow[g.sink()] - T::one()).abs(),
        conservation,
        bounds,
    })
}

/// Loss `<x, w>` of a (possibly fractional) path point.
pub fn path_cost<T: Scalar>(x: &PathPoint<T>, w: &WeightVector<T>) -> Result<T> {
    check_len(x.len(), w.len())?;
    Ok(inner(x.mass(), w.values()))
}
