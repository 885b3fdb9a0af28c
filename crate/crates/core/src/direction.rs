//! Feasibility-preserving primal direction from a (possibly inexact) price
//! vector, and the Newton decrements.

use serde::{Deserialize, Serialize};

use crate::errctl::ErrorCertificate;
use crate::error::Result;
use crate::kkt::exact_newton_step;
use crate::model::Network;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonDirection {
    /// Rate part followed by slack part.
    pub delta: Vec<f64>,
    pub decrement: f64,
    /// Decrement estimate seen by the stepsize rule.
    pub theta: f64,
    pub dual_iters: usize,
    pub certificate: Option<ErrorCertificate>,
}

/// Rate step `-H_ii^-1 (grad_i + pi_i)` from route prices, then the slack step
/// `-R ds` so that `A dx = 0` for any `w`.
pub fn direction_delta(network: &Network, hess: &[f64], grad: &[f64], w: &[f64]) -> Vec<f64> {
    let ns = network.num_sources();
    let mut delta: Vec<f64> = network
        .routes()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let price: f64 = r.iter().map(|&l| w[l]).sum();
            -(grad[i] + price) / hess[i]
        })
        .collect();
    let loads = network.link_loads(&delta[..ns]);
    delta.extend(loads.into_iter().map(|v| -v));
    delta
}

pub fn primal_direction(
    network: &Network,
    hess: &[f64],
    grad: &[f64],
    w: &[f64],
) -> NewtonDirection {
    let delta = direction_delta(network, hess, grad, w);
    let decrement = inexact_decrement(&delta, hess);
    NewtonDirection {
        delta,
        decrement,
        theta: decrement,
        dual_iters: 0,
        certificate: None,
    }
}

/// `sqrt(sum dx_i^2 H_ii)`
pub fn inexact_decrement(delta: &[f64], hess: &[f64]) -> f64 {
    delta
        .iter()
        .zip(hess)
        .map(|(d, h)| d * d * h)
        .sum::<f64>()
        .sqrt()
}

/// Decrement of the exact Newton step from the dense oracle.
pub fn exact_decrement(network: &Network, hess: &[f64], grad: &[f64]) -> Result<f64> {
    let step = exact_newton_step(network, hess, grad)?;
    Ok(inexact_decrement(&step.delta, hess))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Utility;

    #[test]
    fn single_link_closed_form() {
        let n = Network::new(vec![vec![0]], vec![1.0], vec![Utility::log(1.0)]).unwrap();
        let d = primal_direction(&n, &[2.0, 5.0], &[-1.0, 3.0], &[0.4]);
        let ds = -(-1.0 + 0.4) / 2.0;
        assert!((d.delta[0] - ds).abs() < 1e-15);
        assert!((d.delta[1] + ds).abs() < 1e-15);
    }

    #[test]
    fn vanishes_at_stationarity() {
        let n = Network::new(
            vec![vec![0, 1], vec![1]],
            vec![1.0, 1.0],
            vec![Utility::log(1.0); 2],
        )
        .unwrap();
        let w = [0.7, -0.2];
        // grad = -A' w
        let grad = [-(0.7 - 0.2), 0.2, -0.7, 0.2];
        let d = primal_direction(&n, &[1.0, 2.0, 3.0, 4.0], &grad, &w);
        assert!(d.delta.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(d.decrement, 0.0);
    }

    #[test]
    fn decrement_trivia() {
        assert_eq!(inexact_decrement(&[0.0; 3], &[1.0; 3]), 0.0);
        assert_eq!(inexact_decrement(&[0.0, 1.0, 0.0], &[1.0; 3]), 1.0);
    }
}
