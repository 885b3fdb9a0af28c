//! Off-line auxiliary graph over sources and the finite-round summation that
//! lets every source and link learn a global sum exactly.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Network;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuxEdge {
    pub a: usize,
    pub b: usize,
    pub label: usize,
}

/// Source graph with link-labeled edges and per-link membership sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryGraph {
    pub num_sources: usize,
    pub initial: usize,
    /// `Theta_l` in join order.
    pub theta: Vec<Vec<usize>>,
    pub edges: Vec<AuxEdge>,
    /// Links with `|Theta_l| > 1`.
    pub l_star: Vec<usize>,
    /// `L*(i)`: links of `L*` whose set contains `i`.
    pub l_star_of: Vec<Vec<usize>>,
    /// Construction rounds executed (always `S - 1`).
    pub rounds: usize,
}

/// Simulates the grey/white signaling construction.
///
/// Per round, white sources with a nonempty set somewhere on their route turn
/// grey, in ascending index. A new grey source's neighbor signal stops at the
/// first link on its route whose set was nonempty at the start of the round;
/// it connects to everyone there and joins. Its label signal walks the full
/// route and joins every link whose set was empty at the start of the round,
/// unless a smaller new grey source already did.
pub fn build_auxiliary_graph(network: &Network) -> Result<AuxiliaryGraph> {
    let ns = network.num_sources();
    let nl = network.num_links();
    let initial = 0;
    let mut grey = vec![false; ns];
    let mut theta: Vec<Vec<usize>> = vec![Vec::new(); nl];
    let mut edges = Vec::new();
    grey[initial] = true;
    for &l in network.route(initial) {
        theta[l].push(initial);
    }
    let rounds = ns.saturating_sub(1);
    for _ in 0..rounds {
        let nonempty: Vec<bool> = theta.iter().map(|t| !t.is_empty()).collect();
        let fresh: Vec<usize> = (0..ns)
            .filter(|&i| !grey[i] && network.route(i).iter().any(|&l| nonempty[l]))
            .collect();
        let mut labeled_this_round = vec![false; nl];
        for &i in &fresh {
            grey[i] = true;
            if let Some(&stop) = network.route(i).iter().find(|&&l| nonempty[l]) {
                for &j in &theta[stop] {
                    edges.push(AuxEdge {
                        a: j,
                        b: i,
                        label: stop,
                    });
                }
                theta[stop].push(i);
            }
            for &l in network.route(i) {
                if !nonempty[l] && !labeled_this_round[l] {
                    labeled_this_round[l] = true;
                    theta[l].push(i);
                }
            }
        }
    }
    if let Some(i) = grey.iter().position(|g| !g) {
        return Err(Error::Disconnected(i));
    }
    let l_star: Vec<usize> = (0..nl).filter(|&l| theta[l].len() > 1).collect();
    let mut l_star_of = vec![Vec::new(); ns];
    for &l in &l_star {
        for &i in &theta[l] {
            l_star_of[i].push(l);
        }
    }
    for v in &mut l_star_of {
        v.sort_unstable();
    }
    Ok(AuxiliaryGraph {
        num_sources: ns,
        initial,
        theta,
        edges,
        l_star,
        l_star_of,
        rounds,
    })
}

impl AuxiliaryGraph {
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_sources];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        for v in &mut adj {
            v.sort_unstable();
            v.dedup();
        }
        adj
    }

    /// Hop distances from `src`; `usize::MAX` when unreachable.
    pub fn distances_from(&self, src: usize) -> Vec<usize> {
        let adj = self.adjacency();
        bfs(&adj, src)
    }

    /// Longest shortest path; `None` when disconnected.
    pub fn diameter(&self) -> Option<usize> {
        let adj = self.adjacency();
        let mut best = 0;
        for s in 0..self.num_sources {
            for d in bfs(&adj, s) {
                if d == usize::MAX {
                    return None;
                }
                best = best.max(d);
            }
        }
        Some(best)
    }

    /// Checks the structural properties the summation relies on. Returns a
    /// description of each violation.
    pub fn validate(&self, network: &Network) -> Vec<String> {
        let mut out = Vec::new();
        let ns = self.num_sources;
        for (l, set) in self.theta.iter().enumerate() {
            if set.is_empty() {
                out.push(format!("set of link {l} is empty"));
            }
            for &i in set {
                if !network.users(l).contains(&i) {
                    out.push(format!("source {i} in set of link {l} does not use it"));
                }
            }
        }
        // adjacency iff co-membership
        let mut pair_labels = vec![vec![Vec::new(); ns]; ns];
        for e in &self.edges {
            let (a, b) = (e.a.min(e.b), e.a.max(e.b));
            if a == b {
                out.push(format!("self loop at {a}"));
                continue;
            }
            pair_labels[a][b].push(e.label);
        }
        for (a, row) in pair_labels.iter().enumerate() {
            for (b, labels) in row.iter().enumerate().skip(a + 1) {
                let shared = self.theta.iter().any(|t| t.contains(&a) && t.contains(&b));
                let n = labels.len();
                if n > 1 {
                    out.push(format!("multiple edges between {a} and {b}"));
                }
                if shared != (n > 0) {
                    out.push(format!(
                        "adjacency of {a},{b} disagrees with set membership"
                    ));
                }
                for &l in labels {
                    if !(self.theta[l].contains(&a) && self.theta[l].contains(&b)) {
                        out.push(format!("edge {a}-{b} labeled {l} outside its set"));
                    }
                }
            }
        }
        if self.diameter().is_none() {
            out.push("auxiliary graph is disconnected".into());
        }
        if !self.label_structure_is_forest() {
            out.push("a cycle mixes edge labels".into());
        }
        out
    }

    /// Cycles stay within one label iff the bipartite source/label incidence
    /// graph restricted to `L*` has no cycle.
    fn label_structure_is_forest(&self) -> bool {
        let ns = self.num_sources;
        let nodes = ns + self.l_star.len();
        let mut parent: Vec<usize> = (0..nodes).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for (k, &l) in self.l_star.iter().enumerate() {
            for &i in &self.theta[l] {
                let (a, b) = (find(&mut parent, i), find(&mut parent, ns + k));
                if a == b {
                    return false;
                }
                parent[a] = b;
            }
        }
        true
    }
}

fn bfs(adj: &[Vec<usize>], src: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[src] = 0;
    let mut q = VecDeque::from([src]);
    while let Some(u) = q.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                q.push_back(v);
            }
        }
    }
    dist
}

/// Round-by-round state of the summation.
#[derive(Clone, Debug, PartialEq)]
pub struct SummationState {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub t: usize,
}

/// Executes the summation rounds over an auxiliary graph.
pub struct Summation<'a> {
    aux: &'a AuxiliaryGraph,
    pub state: SummationState,
}

impl<'a> Summation<'a> {
    /// `y_i(0) = y*_i + sum_{l in L(i)} z*_l`, `z(0) = 0`.
    pub fn new(network: &Network, aux: &'a AuxiliaryGraph, y_star: &[f64], z_star: &[f64]) -> Self {
        let y = (0..network.num_sources())
            .map(|i| y_star[i] + network.route(i).iter().map(|&l| z_star[l]).sum::<f64>())
            .collect();
        Summation {
            aux,
            state: SummationState {
                y,
                z: vec![0.0; network.num_links()],
                t: 0,
            },
        }
    }

    pub fn round(&mut self) {
        let st = &mut self.state;
        let z: Vec<f64> = self
            .aux
            .theta
            .iter()
            .zip(&st.z)
            .map(|(set, &zl)| {
                set.iter().map(|&i| st.y[i]).sum::<f64>() - (set.len() as f64 - 1.0) * zl
            })
            .collect();
        let y: Vec<f64> = self
            .aux
            .l_star_of
            .iter()
            .zip(&st.y)
            .map(|(ls, &yi)| ls.iter().map(|&l| z[l]).sum::<f64>() - (ls.len() as f64 - 1.0) * yi)
            .collect();
        st.y = y;
        st.z = z;
        st.t += 1;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummationOutcome {
    pub source_values: Vec<f64>,
    pub link_values: Vec<f64>,
    pub rounds: usize,
}

/// Runs the summation for `S` rounds, or `diameter + 1` rounds when
/// `early_stop` is set and the diameter is known.
pub fn distributed_sum_with(
    network: &Network,
    aux: &AuxiliaryGraph,
    y_star: &[f64],
    z_star: &[f64],
    early_stop: bool,
) -> SummationOutcome {
    let mut run = Summation::new(network, aux, y_star, z_star);
    let full = network.num_sources();
    let rounds = if early_stop {
        aux.diameter().map(|d| (d + 1).min(full)).unwrap_or(full)
    } else {
        full
    };
    for _ in 0..rounds {
        run.round();
    }
    SummationOutcome {
        source_values: run.state.y,
        link_values: run.state.z,
        rounds,
    }
}

pub fn distributed_sum(
    network: &Network,
    aux: &AuxiliaryGraph,
    y_star: &[f64],
    z_star: &[f64],
) -> SummationOutcome {
    distributed_sum_with(network, aux, y_star, z_star, false)
}

/// Per-source and per-link summands of `sum dx_j^2 H_jj`; slack terms are
/// split evenly over the sources crossing the link.
pub fn decrement_inputs(network: &Network, delta: &[f64], hess: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ns = network.num_sources();
    let y = (0..ns).map(|i| delta[i] * delta[i] * hess[i]).collect();
    let z = (0..network.num_links())
        .map(|l| {
            let j = ns + l;
            delta[j] * delta[j] * hess[j] / network.users(l).len() as f64
        })
        .collect();
    (y, z)
}

/// Decrement value as learned by source 0 through the summation protocol.
pub fn compute_theta(
    network: &Network,
    aux: &AuxiliaryGraph,
    delta: &[f64],
    hess: &[f64],
) -> Result<(f64, usize)> {
    let (y, z) = decrement_inputs(network, delta, hess);
    let out = distributed_sum(network, aux, &y, &z);
    let v = out.source_values[0];
    if v < 0.0 {
        // round-off on an essentially zero sum
        if v > -1e-12 * (1.0 + y.iter().sum::<f64>()) {
            return Ok((0.0, out.rounds));
        }
        return Err(Error::InvalidConfig(format!("negative decrement sum {v}")));
    }
    Ok((v.sqrt(), out.rounds))
}
