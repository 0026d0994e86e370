use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::error::{Error, Result};

/// Attempts made before giving up on a connected source-sink pair.
pub const DEFAULT_RETRY_BUDGET: usize = 100;

/// Random road-like network: every node is linked to between `degree_min`
/// and `degree_max` neighbours (where the draw allows it), each undirected
/// link becomes two opposite arcs, the source is node 0 and the sink is
/// node `n_nodes - 1`.
///
/// Draws that leave the terminals disconnected are discarded and redrawn
/// from a perturbed seed, at most [`DEFAULT_RETRY_BUDGET`] times.
pub fn generate_random_network(n_nodes: usize, degree_min: usize, degree_max: usize, seed: u64) -> Result<Graph> {
    generate_counted(n_nodes, degree_min, degree_max, seed).map(|(g, _)| g)
}

/// As [`generate_random_network`], also returning the number of discarded
/// draws.
pub fn generate_counted(n_nodes: usize, degree_min: usize, degree_max: usize, seed: u64) -> Result<(Graph, usize)> {
    if degree_min < 2 || degree_min > degree_max || degree_max >= n_nodes {
        return Err(Error::InfeasibleDegrees {
            nodes: n_nodes,
            min: degree_min,
            max: degree_max,
        });
    }
    for attempt in 0..DEFAULT_RETRY_BUDGET {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let edges = draw_topology(n_nodes, degree_min, degree_max, &mut rng);
        match Graph::from_undirected(n_nodes, &edges, 0, n_nodes - 1) {
            Ok(g) => {
                if attempt > 0 {
                    log::debug!("network connected after {} redraws", attempt);
                }
                return Ok((g, attempt));
            }
            Err(Error::NoPath { .. }) | Err(Error::InvalidGraph(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::ConnectivityNotAchieved {
        attempts: DEFAULT_RETRY_BUDGET,
    })
}

fn draw_topology<R: Rng>(n: usize, dmin: usize, dmax: usize, rng: &mut R) -> Vec<(usize, usize)> {
    let target: Vec<usize> = (0..n).map(|_| rng.random_range(dmin..=dmax)).collect();
    let mut topo = Topology {
        degree: vec![0; n],
        adjacent: vec![false; n * n],
        edges: Vec::new(),
    };

    // Pair up nodes that still want links, in random order.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for &a in &order {
        let mut partners: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        partners.shuffle(rng);
        for b in partners {
            if topo.degree[a] >= target[a] {
                break;
            }
            if topo.degree[b] < target[b] && !topo.linked(a, b) {
                topo.link(a, b);
            }
        }
    }

    // Top up nodes left below the minimum using any partner with room.
    for &a in &order {
        let mut partners: Vec<usize> = (0..n).filter(|&b| b != a).collect();
        partners.shuffle(rng);
        for b in partners {
            if topo.degree[a] >= dmin {
                break;
            }
            if topo.degree[b] < dmax && !topo.linked(a, b) {
                topo.link(a, b);
            }
        }
    }
    topo.edges
}

struct Topology {
    degree: Vec<usize>,
    adjacent: Vec<bool>,
    edges: Vec<(usize, usize)>,
}

impl Topology {
    fn linked(&self, a: usize, b: usize) -> bool {
        self.adjacent[a * self.degree.len() + b]
    }

    fn link(&mut self, a: usize, b: usize) {
        let n = self.degree.len();
        self.adjacent[a * n + b] = true;
        self.adjacent[b * n + a] = true;
        self.degree[a] += 1;
        self.degree[b] += 1;
        self.edges.push((a.min(b), a.max(b)));
    }
}
