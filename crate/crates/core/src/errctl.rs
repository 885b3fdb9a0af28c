//! Distributed two-stage stopping test for the dual iteration and the
//! max-consensus primitive it aggregates with.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dual::{DistributedDual, DualState};
use crate::error::{Error, Result};
use crate::model::Network;

/// Default cap on dual steps per primal iteration.
pub const DUAL_ITERATION_CAP: usize = 1_000_000;

mod extended_real {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad number {t}"))),
        }
    }
}

/// Record of how a dual iterate was accepted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorCertificate {
    pub stage: u8,
    #[serde(with = "extended_real")]
    pub beta: f64,
    pub h_threshold: Option<f64>,
    /// Index `t` of the accepted iterate `w(t)`.
    pub accepted_t: usize,
    /// Dual steps executed, including the look-ahead step.
    pub dual_iters: usize,
    pub spectral_bound: f64,
    pub stage_one_iters: usize,
    pub consensus_rounds: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorControlConfig {
    pub stage_one_iters: usize,
    pub p: f64,
    pub epsilon: f64,
    pub spectral_bound: f64,
    pub iteration_cap: usize,
}

impl ErrorControlConfig {
    pub fn new(spectral_bound: f64, p: f64, epsilon: f64) -> Self {
        ErrorControlConfig {
            stage_one_iters: default_stage_one_iters(spectral_bound),
            p,
            epsilon,
            spectral_bound,
            iteration_cap: DUAL_ITERATION_CAP,
        }
    }

    fn validate(&self) -> Result<()> {
        let f = self.spectral_bound;
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "spectral bound must lie in (0, 1), got {f}"
            )));
        }
        if !(self.p > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "p must be positive, got {}",
                self.p
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.stage_one_iters == 0 {
            return Err(Error::InvalidConfig(
                "stage-one budget must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `1.05 lambda1` clamped below 0.999, kept strictly above `lambda1` and
/// away from zero.
pub fn spectral_bound_from(lambda1: f64) -> f64 {
    let f = (1.05 * lambda1).clamp(1e-3, 0.999);
    if f <= lambda1 {
        0.5 * (lambda1 + 1.0)
    } else {
        f
    }
}

/// Steps needed to shrink a geometric error by a factor of ten.
pub fn default_stage_one_iters(spectral_bound: f64) -> usize {
    ((0.1f64).ln() / spectral_bound.ln()).ceil().max(1.0) as usize
}

/// Stage-one scale `beta = (max rho / p)^-2`.
///
/// `pi0` and `pi_t` are the weighted route prices `Pi_i(0)` and `Pi_i(t)`.
#[allow(clippy::too_many_arguments)]
pub fn stage1_beta(
    network: &Network,
    w_t: &[f64],
    w_t1: &[f64],
    pi0: &[f64],
    pi_t: &[f64],
    spectral_bound: f64,
    p: f64,
) -> Result<f64> {
    if !(spectral_bound > 0.0 && spectral_bound < 1.0) || !(p > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "stage one needs F in (0,1) and p > 0, got F = {spectral_bound}, p = {p}"
        )));
    }
    let dw = sup_diff(w_t, w_t1);
    Ok(beta_from_rhos(
        &rhos(network, dw, pi0, pi_t, spectral_bound),
        p,
    ))
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Per-node ratios, sources first then links.
fn rhos(network: &Network, dw: f64, pi0: &[f64], pi_t: &[f64], f: f64) -> Vec<f64> {
    let scale = (network.num_links() as f64).sqrt() * dw / (1.0 - f);
    let ratio = |num: f64, den: f64| {
        if dw == 0.0 {
            0.0
        } else if den.abs() < 1e-14 {
            f64::INFINITY
        } else {
            (scale * num / den).abs()
        }
    };
    let mut out: Vec<f64> = pi0.iter().zip(pi_t).map(|(&a, &b)| ratio(a, b)).collect();
    for l in 0..network.num_links() {
        let users = network.users(l);
        let num: f64 = users.iter().map(|&i| pi0[i]).sum();
        let den: f64 = users.iter().map(|&i| pi_t[i]).sum();
        out.push(ratio(num, den));
    }
    out
}

fn beta_from_rhos(rhos: &[f64], p: f64) -> f64 {
    let m = rhos.iter().cloned().fold(0.0, f64::max) / p;
    if m == 0.0 {
        f64::INFINITY
    } else {
        m.powi(-2)
    }
}

/// Per-node stage-two thresholds, sources first then links.
fn thresholds(
    network: &Network,
    hess: &[f64],
    pi0: &[f64],
    beta: f64,
    epsilon: f64,
    f: f64,
) -> Vec<f64> {
    let (nl, ns) = (network.num_links(), network.num_sources());
    let root_k = (epsilon / ((1.0 - beta) * (nl + ns) as f64 * nl as f64)).sqrt();
    let mut out: Vec<f64> = (0..ns)
        .map(|i| root_k * (1.0 - f) / (network.route(i).len() as f64 / hess[i].sqrt()))
        .collect();
    for l in 0..nl {
        let sum: f64 = network.users(l).iter().map(|&i| pi0[i]).sum();
        out.push(root_k * (1.0 - f) / (hess[ns + l].sqrt() * sum));
    }
    out
}

/// Stage-two threshold `h`: the minimum over all per-node thresholds.
pub fn stage2_h(
    network: &Network,
    hess: &[f64],
    pi0: &[f64],
    beta: f64,
    epsilon: f64,
    spectral_bound: f64,
) -> Result<f64> {
    if beta >= 1.0 {
        return Err(Error::StageTwoNotNeeded(beta));
    }
    if !(epsilon > 0.0) || !(spectral_bound > 0.0 && spectral_bound < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "stage two needs epsilon > 0 and F in (0,1), got {epsilon}, {spectral_bound}"
        )));
    }
    Ok(
        thresholds(network, hess, pi0, beta, epsilon, spectral_bound)
            .into_iter()
            .fold(f64::INFINITY, f64::min),
    )
}

/// Undirected adjacency lists.
pub type Graph = Vec<Vec<usize>>;

/// Sources `0..S` and links `S..S+L`, with an edge wherever a link lies on a
/// route. This is the only channel the protocol uses.
pub fn communication_graph(network: &Network) -> Graph {
    let ns = network.num_sources();
    let mut adj = vec![Vec::new(); network.dim()];
    for (i, route) in network.routes().iter().enumerate() {
        for &l in route {
            adj[i].push(ns + l);
            adj[ns + l].push(i);
        }
    }
    adj
}

fn eccentricities(adj: &Graph) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let mut dist = vec![usize::MAX; n];
        dist[s] = 0;
        let mut q = std::collections::VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    q.push_back(v);
                }
            }
        }
        if dist.contains(&usize::MAX) {
            return None;
        }
        out.push(dist.into_iter().max().unwrap_or(0));
    }
    Some(out)
}

pub fn graph_diameter(adj: &Graph) -> Result<usize> {
    eccentricities(adj)
        .map(|e| e.into_iter().max().unwrap_or(0))
        .ok_or(Error::GraphDisconnected)
}

/// Runs `rounds` synchronous rounds in which every node keeps the largest
/// value among itself and its neighbors.
pub fn max_consensus(values: &[f64], adj: &Graph, rounds: usize) -> Result<Vec<f64>> {
    if values.len() != adj.len() {
        return Err(Error::DimensionMismatch {
            what: "consensus values",
            expected: adj.len(),
            got: values.len(),
        });
    }
    if eccentricities(adj).is_none() {
        return Err(Error::GraphDisconnected);
    }
    let mut cur = values.to_vec();
    for _ in 0..rounds {
        cur = (0..adj.len())
            .map(|i| adj[i].iter().fold(cur[i], |m, &j| m.max(cur[j])))
            .collect();
    }
    Ok(cur)
}

/// Rounds until every node holds the global maximum.
pub fn rounds_to_agreement(values: &[f64], adj: &Graph) -> Result<usize> {
    let target = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut cur = values.to_vec();
    let mut rounds = 0;
    while cur.iter().any(|&v| v != target) {
        cur = max_consensus(&cur, adj, 1)?;
        rounds += 1;
    }
    Ok(rounds)
}

/// Error control bound to one network: caches the communication graph and
/// its diameter, which fixes the length of every consensus run.
pub struct ErrorControl<'a> {
    network: &'a Network,
    graph: Graph,
    diameter: usize,
}

/// Certified price vector with its certificate.
#[derive(Clone, Debug)]
pub struct DualOutcome {
    pub state: DualState,
    pub certificate: ErrorCertificate,
}

impl<'a> ErrorControl<'a> {
    pub fn new(network: &'a Network) -> Result<Self> {
        let graph = communication_graph(network);
        let diameter = graph_diameter(&graph)?;
        Ok(ErrorControl {
            network,
            graph,
            diameter,
        })
    }

    pub fn diameter(&self) -> usize {
        self.diameter
    }

    /// Global max of per-node values, as every node learns it.
    fn consensus(&self, values: &[f64], rounds: &mut usize) -> Result<f64> {
        let out = max_consensus(values, &self.graph, self.diameter)?;
        *rounds += self.diameter;
        Ok(out[0])
    }

    /// `||w(t+1) - w(t)||_inf` via consensus on per-link changes.
    fn consensus_sup_diff(&self, a: &[f64], b: &[f64], rounds: &mut usize) -> Result<f64> {
        let ns = self.network.num_sources();
        let mut vals = vec![0.0; self.network.dim()];
        for (l, (x, y)) in a.iter().zip(b).enumerate() {
            vals[ns + l] = (x - y).abs();
        }
        self.consensus(&vals, rounds)
    }

    pub fn run(
        &self,
        hess: &[f64],
        grad: &[f64],
        cfg: &ErrorControlConfig,
        warm_start: Vec<f64>,
    ) -> Result<DualOutcome> {
        cfg.validate()?;
        let net = self.network;
        let dd = DistributedDual::new(net, hess, grad)?;
        let pi0 = dd.initial_weighted_prices().to_vec();
        let f = cfg.spectral_bound;
        let mut rounds = 0;
        let mut state = dd.start(warm_start);
        let mut next = dd.step(&state);
        let mut steps = 1;
        while state.t < cfg.stage_one_iters {
            state = next;
            next = dd.step(&state);
            steps += 1;
        }
        let dw = self.consensus_sup_diff(&state.w, &next.w, &mut rounds)?;
        let local = rhos(net, dw, &pi0, &state.weighted_price, f);
        let beta = beta_from_rhos(&[self.consensus(&local, &mut rounds)?], cfg.p);
        let mut cert = ErrorCertificate {
            stage: 1,
            beta,
            h_threshold: None,
            accepted_t: state.t,
            dual_iters: steps,
            spectral_bound: f,
            stage_one_iters: cfg.stage_one_iters,
            consensus_rounds: 0,
        };
        if beta >= 1.0 {
            cert.consensus_rounds = rounds;
            return Ok(DualOutcome {
                state,
                certificate: cert,
            });
        }
        // min over nodes, aggregated as a max of negatives
        let hs = thresholds(net, hess, &pi0, beta, cfg.epsilon, f);
        let neg: Vec<f64> = hs.iter().map(|v| -v).collect();
        let h = -self.consensus(&neg, &mut rounds)?;
        let mut dw = dw;
        while dw > h {
            if steps >= cfg.iteration_cap {
                return Err(Error::IterationCap {
                    what: "dual iteration",
                    limit: cfg.iteration_cap,
                });
            }
            state = next;
            next = dd.step(&state);
            steps += 1;
            dw = self.consensus_sup_diff(&state.w, &next.w, &mut rounds)?;
        }
        cert.stage = 2;
        cert.h_threshold = Some(h);
        cert.accepted_t = state.t;
        cert.dual_iters = steps;
        cert.consensus_rounds = rounds;
        Ok(DualOutcome {
            state,
            certificate: cert,
        })
    }
}

/// Runs the dual iteration from `warm_start` until one of the two stages
/// certifies `w(t)`.
pub fn run_dual_with_error_control(
    network: &Network,
    hess: &[f64],
    grad: &[f64],
    cfg: &ErrorControlConfig,
    warm_start: Vec<f64>,
) -> Result<(Vec<f64>, ErrorCertificate)> {
    let out = ErrorControl::new(network)?.run(hess, grad, cfg, warm_start)?;
    Ok((out.state.w, out.certificate))
}
