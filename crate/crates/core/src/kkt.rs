//! Dense exact Newton step by block elimination of the KKT system.

use crate::dual::solve_dual_exact;
use crate::error::Result;
use crate::model::Network;

/// Exact Newton direction and its dual vector.
#[derive(Clone, Debug)]
pub struct ExactStep {
    pub delta: Vec<f64>,
    pub w: Vec<f64>,
}

/// Eliminates the primal block: solve the dual system densely, then
/// `dx = -H^-1 (grad + A' w)`.
pub fn exact_newton_step(network: &Network, hess: &[f64], grad: &[f64]) -> Result<ExactStep> {
    let w = solve_dual_exact(network, hess, grad)?;
    let ns = network.num_sources();
    let mut delta = Vec::with_capacity(network.dim());
    for (i, route) in network.routes().iter().enumerate() {
        let price: f64 = route.iter().map(|&l| w[l]).sum();
        delta.push(-(grad[i] + price) / hess[i]);
    }
    for (l, &wl) in w.iter().enumerate() {
        delta.push(-(grad[ns + l] + wl) / hess[ns + l]);
    }
    Ok(ExactStep { delta, w })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Utility;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn matches_full_saddle_solve() {
        let n = Network::new(
            vec![vec![0, 2, 3], vec![1, 2, 4]],
            vec![1.0, 1.0, 2.0, 1.0, 1.0],
            vec![Utility::log(1.0); 2],
        )
        .unwrap();
        let hess = [2.0, 3.0, 1.5, 0.5, 4.0, 1.0, 2.5];
        let grad = [-1.0, -0.5, -0.2, -3.0, -0.1, -0.7, -2.0];
        let step = exact_newton_step(&n, &hess, &grad).unwrap();
        let a = n.constraint_matrix();
        let (m, k) = (7, 5);
        let mut kkt = DMatrix::zeros(m + k, m + k);
        for i in 0..m {
            kkt[(i, i)] = hess[i];
        }
        kkt.view_mut((0, m), (m, k)).copy_from(&a.transpose());
        kkt.view_mut((m, 0), (k, m)).copy_from(&a);
        let mut rhs = DVector::zeros(m + k);
        for i in 0..m {
            rhs[i] = -grad[i];
        }
        let sol = kkt.lu().solve(&rhs).unwrap();
        for i in 0..m {
            assert!((sol[i] - step.delta[i]).abs() < 1e-12);
        }
        for l in 0..k {
            assert!((sol[m + l] - step.w[l]).abs() < 1e-12);
        }
    }
}
