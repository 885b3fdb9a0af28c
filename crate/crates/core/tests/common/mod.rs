//! Shared oracles and instance helpers for the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use netnewton::gen::{random_network_with, GenSpec};
use netnewton::model::{BarrierProblem, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two sources over five links sharing link 2, from the fixture file.
pub fn fig1() -> Network {
    Network::load(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/fig1.toml")).unwrap()
}

/// Random network with `L <= max_links`, `S <= max_sources`. Size draws
/// that cannot yield a valid routing matrix are redrawn.
pub fn random_instance(r: &mut ChaCha8Rng, max_links: usize, max_sources: usize) -> Network {
    loop {
        let links = r.gen_range(1..=max_links);
        let sources = r.gen_range(1..=max_sources);
        let prob = r.gen_range(0.25..0.8);
        if let Ok(n) = random_network_with(&GenSpec::new(links, sources, prob), r.gen()) {
            return n;
        }
    }
}

/// Strictly feasible point with link utilization at most 90%.
pub fn interior_point(r: &mut ChaCha8Rng, n: &Network) -> Vec<f64> {
    let raw: Vec<f64> = (0..n.num_sources())
        .map(|_| r.gen_range(0.05..1.0))
        .collect();
    let loads = n.link_loads(&raw);
    let t = n
        .capacities()
        .iter()
        .zip(&loads)
        .map(|(c, l)| c / l)
        .fold(f64::INFINITY, f64::min)
        * r.gen_range(0.1..0.9);
    let mut x: Vec<f64> = raw.iter().map(|v| v * t).collect();
    let loads = n.link_loads(&x);
    x.extend(n.capacities().iter().zip(&loads).map(|(c, l)| c - l));
    x
}

/// Hessian diagonal and gradient of the `mu = 1` barrier objective.
pub fn derivatives(n: &Network, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let p = BarrierProblem::new(n, 1.0, 1.0).unwrap();
    (p.hessian_diag(x).unwrap(), p.gradient(x).unwrap())
}

/// `[R I]` built directly from the routes.
pub fn constraint_matrix(n: &Network) -> DMatrix<f64> {
    let (l, s) = (n.num_links(), n.num_sources());
    let mut a = DMatrix::zeros(l, s + l);
    for i in 0..s {
        for &k in n.route(i) {
            a[(k, i)] = 1.0;
        }
    }
    for k in 0..l {
        a[(k, s + k)] = 1.0;
    }
    a
}

/// Dense dual system `(A H^-1 A') w = -A H^-1 g`.
pub struct DenseDual {
    pub gram: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub w: Vec<f64>,
}

pub fn dense_dual(n: &Network, hess: &[f64], grad: &[f64]) -> DenseDual {
    let a = constraint_matrix(n);
    let hinv = DMatrix::from_diagonal(&DVector::from_iterator(
        hess.len(),
        hess.iter().map(|h| 1.0 / h),
    ));
    let gram = &a * &hinv * a.transpose();
    let rhs = -(&a * &hinv * DVector::from_column_slice(grad));
    let w = gram
        .clone()
        .lu()
        .solve(&rhs)
        .expect("nonsingular dual system");
    DenseDual {
        gram,
        rhs,
        w: w.iter().copied().collect(),
    }
}

/// `dx = -H^-1 (g + A' w)`.
pub fn dense_direction(n: &Network, hess: &[f64], grad: &[f64], w: &[f64]) -> Vec<f64> {
    let a = constraint_matrix(n);
    let aw = a.transpose() * DVector::from_column_slice(w);
    (0..hess.len())
        .map(|j| -(grad[j] + aw[j]) / hess[j])
        .collect()
}

/// Jacobi-type iteration matrix `(D + B_bar)^-1 (B_bar - B)` from the Gram matrix.
pub fn iteration_matrix(gram: &DMatrix<f64>) -> DMatrix<f64> {
    let n = gram.nrows();
    let bbar: Vec<f64> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| gram[(i, j)]).sum())
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        let p = gram[(i, i)] + bbar[i];
        if i == j {
            bbar[i] / p
        } else {
            -gram[(i, j)] / p
        }
    })
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .fold(0.0, |a, e| a.max(e.norm()))
}

pub fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn sup_norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn h_norm_sq(v: &[f64], hess: &[f64]) -> f64 {
    v.iter().zip(hess).map(|(a, h)| a * a * h).sum()
}
