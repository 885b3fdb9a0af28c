//! Weighted dual graph of the splitting and bounds on the spectral radius of
//! its iteration matrix.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dual::{build_splitting, SplittingData};
use crate::error::Result;
use crate::model::Network;

/// Default cap on `L` for exact max-cut enumeration.
pub const MAX_CUT_LIMIT: usize = 20;

/// Directed link graph with `W_ij = B_ij / (D + B_bar)_ii` and the iteration
/// matrix `(D + B_bar)^-1 (B_bar - B)` as its Laplacian.
#[derive(Clone, Debug)]
pub struct DualGraph {
    pub weights: DMatrix<f64>,
    pub laplacian: DMatrix<f64>,
}

impl DualGraph {
    pub fn from_splitting(split: &SplittingData) -> Self {
        let p = split.preconditioner();
        let n = split.num_links();
        let weights = DMatrix::from_fn(
            n,
            n,
            |i, j| if i == j { 0.0 } else { split.b[(i, j)] / p[i] },
        );
        DualGraph {
            weights,
            laplacian: split.iteration_matrix(),
        }
    }

    pub fn max_out_degree(&self) -> f64 {
        (0..self.weights.nrows())
            .map(|i| self.weights.row(i).sum())
            .fold(0.0, f64::max)
    }

    /// Largest total weight `sum (W_ij + W_ji)` over edges crossing a cut.
    /// Exhaustive over all bipartitions, visited in Gray-code order.
    pub fn max_cut(&self) -> f64 {
        let n = self.weights.nrows();
        if n < 2 {
            return 0.0;
        }
        let c = &self.weights + self.weights.transpose();
        // node n-1 stays outside; enumerate the other n-1 memberships
        let mut inside = vec![false; n];
        let mut cut = 0.0f64;
        let mut best = 0.0f64;
        let total = 1u64 << (n - 1);
        for k in 1..total {
            let v = k.trailing_zeros() as usize;
            let mut delta = 0.0;
            for j in 0..n {
                if j != v {
                    if inside[j] == inside[v] {
                        delta += c[(v, j)];
                    } else {
                        delta -= c[(v, j)];
                    }
                }
            }
            inside[v] = !inside[v];
            cut += delta;
            best = best.max(cut);
        }
        best
    }
}

/// Spectral report of the dual iteration matrix at one Hessian.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub lambda1: f64,
    pub lower: Option<f64>,
    pub upper: f64,
    pub max_cut: Option<f64>,
    pub max_out_degree: f64,
    /// Set when the link count exceeded the enumeration limit.
    #[serde(default)]
    pub max_cut_skipped: bool,
}

/// Largest eigenvalue magnitude of the iteration matrix, computed on the
/// symmetric similar matrix `P^-1/2 (B_bar - B) P^-1/2`.
pub fn largest_eigenvalue(split: &SplittingData) -> f64 {
    let p = split.preconditioner();
    let n = split.num_links();
    let sym = DMatrix::from_fn(n, n, |i, j| {
        let v = if i == j {
            split.b_bar[i] - split.b[(i, i)]
        } else {
            -split.b[(i, j)]
        };
        v / (p[i] * p[j]).sqrt()
    });
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, e| m.max(e.abs()))
}

pub fn spectral_report(split: &SplittingData, limit: usize) -> SpectralReport {
    let graph = DualGraph::from_splitting(split);
    let n = split.num_links();
    let deg = graph.max_out_degree();
    let (max_cut, lower) = if n <= limit {
        let mc = graph.max_cut();
        (Some(mc), Some(4.0 * mc / n as f64))
    } else {
        (None, None)
    };
    SpectralReport {
        lambda1: largest_eigenvalue(split),
        lower,
        upper: (2.0 * deg).min(1.0),
        max_cut,
        max_out_degree: deg,
        max_cut_skipped: n > limit,
    }
}

/// Spectral radius and its bounds for the dual iteration at `hess`.
pub fn spectral_diagnostics(
    network: &Network,
    hess: &[f64],
    limit: usize,
) -> Result<SpectralReport> {
    let zero = vec![0.0; network.dim()];
    let split = build_splitting(network, hess, &zero)?;
    Ok(spectral_report(&split, limit))
}
