//! Matrix splitting of the dual system `A H^-1 A' w = -A H^-1 grad f` and the
//! resulting price iteration, in both matrix and per-link form.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Network;

fn check_lengths(network: &Network, hess: &[f64], grad: Option<&[f64]>) -> Result<()> {
    let n = network.dim();
    if hess.len() != n {
        return Err(Error::DimensionMismatch {
            what: "hessian diagonal",
            expected: n,
            got: hess.len(),
        });
    }
    if let Some(g) = grad {
        if g.len() != n {
            return Err(Error::DimensionMismatch {
                what: "gradient",
                expected: n,
                got: g.len(),
            });
        }
    }
    if let Some(index) = hess.iter().position(|&h| !(h > 0.0 && h.is_finite())) {
        return Err(Error::NonPositive {
            index,
            value: hess[index],
        });
    }
    Ok(())
}

/// `D` (diagonal of the dual Gram matrix), its off-diagonal part `B`, the row
/// sums of `B` and the right-hand side.
#[derive(Clone, Debug)]
pub struct SplittingData {
    pub d: Vec<f64>,
    pub b: DMatrix<f64>,
    pub b_bar: Vec<f64>,
    pub rhs: Vec<f64>,
}

pub fn build_splitting(network: &Network, hess: &[f64], grad: &[f64]) -> Result<SplittingData> {
    check_lengths(network, hess, Some(grad))?;
    let (nl, ns) = (network.num_links(), network.num_sources());
    let mut d = vec![0.0; nl];
    let mut b = DMatrix::zeros(nl, nl);
    let mut rhs = vec![0.0; nl];
    for (i, route) in network.routes().iter().enumerate() {
        let hinv = 1.0 / hess[i];
        for &l in route {
            d[l] += hinv;
            rhs[l] -= grad[i] * hinv;
            for &j in route {
                if j != l {
                    b[(l, j)] += hinv;
                }
            }
        }
    }
    for l in 0..nl {
        d[l] += 1.0 / hess[ns + l];
        rhs[l] -= grad[ns + l] / hess[ns + l];
    }
    let b_bar = (0..nl).map(|l| b.row(l).sum()).collect();
    Ok(SplittingData { d, b, b_bar, rhs })
}

impl SplittingData {
    pub fn num_links(&self) -> usize {
        self.d.len()
    }

    /// Diagonal of `D + B_bar`.
    pub fn preconditioner(&self) -> Vec<f64> {
        self.d.iter().zip(&self.b_bar).map(|(a, b)| a + b).collect()
    }

    /// `A H^-1 A' = D + B`.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = self.b.clone();
        for (l, &dl) in self.d.iter().enumerate() {
            g[(l, l)] += dl;
        }
        g
    }

    /// Iteration matrix `(D + B_bar)^-1 (B_bar - B)`.
    pub fn iteration_matrix(&self) -> DMatrix<f64> {
        let p = self.preconditioner();
        let n = self.num_links();
        DMatrix::from_fn(n, n, |i, j| {
            let v = if i == j {
                self.b_bar[i] - self.b[(i, i)]
            } else {
                -self.b[(i, j)]
            };
            v / p[i]
        })
    }

    /// `Q = D + 2 B_bar - B`
    pub fn q_matrix(&self) -> DMatrix<f64> {
        let n = self.num_links();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.d[i] + 2.0 * self.b_bar[i] - self.b[(i, i)]
            } else {
                -self.b[(i, j)]
            }
        })
    }

    /// True when `Q` has a positive diagonal and strict row diagonal dominance.
    pub fn q_is_diagonally_dominant(&self) -> bool {
        let q = self.q_matrix();
        (0..self.num_links()).all(|i| {
            let off: f64 = (0..self.num_links())
                .filter(|&j| j != i)
                .map(|j| q[(i, j)].abs())
                .sum();
            q[(i, i)] > 0.0 && q[(i, i)] > off
        })
    }

    /// One step of `w <- (D + B_bar)^-1 ((B_bar - B) w + rhs)`.
    pub fn step(&self, w: &[f64]) -> Vec<f64> {
        let n = self.num_links();
        (0..n)
            .map(|l| {
                let coupled: f64 = w
                    .iter()
                    .enumerate()
                    .map(|(j, wj)| self.b[(l, j)] * wj)
                    .sum();
                (self.b_bar[l] * w[l] + self.rhs[l] - coupled) / (self.d[l] + self.b_bar[l])
            })
            .collect()
    }
}

/// Matrix form of the dual update.
pub fn dual_step_matrix(split: &SplittingData, w: &[f64]) -> Vec<f64> {
    split.step(w)
}

/// Dense solution of the dual system via Cholesky.
pub fn solve_dual_exact(network: &Network, hess: &[f64], grad: &[f64]) -> Result<Vec<f64>> {
    let split = build_splitting(network, hess, grad)?;
    let g = split.gram();
    let rhs = DVector::from_column_slice(&split.rhs);
    let chol = g.clone().cholesky().ok_or(Error::Singular)?;
    let w = chol.solve(&rhs);
    let resid = (&g * &w - &rhs).amax();
    let scale = rhs.amax().max(g.amax() * w.amax()).max(f64::MIN_POSITIVE);
    if !(resid <= 1e-10 * scale) {
        return Err(Error::Singular);
    }
    Ok(w.iter().copied().collect())
}

/// Price vector with the per-source aggregates a source learns from the
/// feedback pass along its route.
#[derive(Clone, Debug, PartialEq)]
pub struct DualState {
    pub w: Vec<f64>,
    pub t: usize,
    /// `pi_i(t)`: sum of prices along route `i`.
    pub route_price: Vec<f64>,
    /// `Pi_i(t) = H_ii^-1 pi_i(t)`.
    pub weighted_price: Vec<f64>,
    /// `Pi_i(0)`, computed from an all-ones price vector.
    pub weighted_price0: Option<Vec<f64>>,
}

impl DualState {
    /// State at `t = 0` without the all-ones cache.
    pub fn new(network: &Network, hess: &[f64], w: Vec<f64>) -> Self {
        let route_price: Vec<f64> = network
            .routes()
            .iter()
            .map(|r| r.iter().map(|&l| w[l]).sum())
            .collect();
        let weighted_price = route_price.iter().zip(hess).map(|(p, h)| p / h).collect();
        DualState {
            w,
            t: 0,
            route_price,
            weighted_price,
            weighted_price0: None,
        }
    }

    /// State at `t = 0` with `Pi_i(0)` filled in by the all-ones pass.
    pub fn start(network: &Network, hess: &[f64], w: Vec<f64>) -> Self {
        let mut st = DualState::new(network, hess, w);
        st.weighted_price0 = Some(initial_weighted_prices(network, hess));
        st
    }
}

/// `Pi_i(0) = |L(i)| / H_ii`.
pub fn initial_weighted_prices(network: &Network, hess: &[f64]) -> Vec<f64> {
    network
        .routes()
        .iter()
        .zip(hess)
        .map(|(r, h)| r.len() as f64 / h)
        .collect()
}

/// Quantities link `l` accumulates during setup: everything in its update
/// that does not change with `t`.
#[derive(Clone, Debug)]
struct LinkCache {
    sum_pi0: f64,
    sum_hinv: f64,
    sum_hinv_grad: f64,
    slack_hinv: f64,
    slack_hinv_grad: f64,
}

/// Per-link dual iteration. Each link only touches sums over the sources that
/// cross it plus its own slack terms.
#[derive(Clone, Debug)]
pub struct DistributedDual<'a> {
    network: &'a Network,
    hess: &'a [f64],
    links: Vec<LinkCache>,
    pi0: Vec<f64>,
}

impl<'a> DistributedDual<'a> {
    pub fn new(network: &'a Network, hess: &'a [f64], grad: &[f64]) -> Result<Self> {
        check_lengths(network, hess, Some(grad))?;
        let pi0 = initial_weighted_prices(network, hess);
        Ok(Self::with_pi0(network, hess, grad, pi0))
    }

    fn with_pi0(network: &'a Network, hess: &'a [f64], grad: &[f64], pi0: Vec<f64>) -> Self {
        let ns = network.num_sources();
        let links = (0..network.num_links())
            .map(|l| {
                let users = network.users(l);
                LinkCache {
                    sum_pi0: users.iter().map(|&i| pi0[i]).sum(),
                    sum_hinv: users.iter().map(|&i| 1.0 / hess[i]).sum(),
                    sum_hinv_grad: users.iter().map(|&i| grad[i] / hess[i]).sum(),
                    slack_hinv: 1.0 / hess[ns + l],
                    slack_hinv_grad: grad[ns + l] / hess[ns + l],
                }
            })
            .collect();
        DistributedDual {
            network,
            hess,
            links,
            pi0,
        }
    }

    pub fn initial_weighted_prices(&self) -> &[f64] {
        &self.pi0
    }

    pub fn start(&self, w: Vec<f64>) -> DualState {
        let mut st = DualState::new(self.network, self.hess, w);
        st.weighted_price0 = Some(self.pi0.clone());
        st
    }

    /// `sum_{i in S(l)} Pi_i(0)` per link.
    pub fn link_pi0_sums(&self) -> Vec<f64> {
        self.links.iter().map(|c| c.sum_pi0).collect()
    }

    pub fn step(&self, state: &DualState) -> DualState {
        let w: Vec<f64> = self
            .links
            .iter()
            .enumerate()
            .map(|(l, c)| {
                let wl = state.w[l];
                let sum_pit: f64 = self
                    .network
                    .users(l)
                    .iter()
                    .map(|&i| state.weighted_price[i])
                    .sum();
                let num = (c.sum_pi0 - c.sum_hinv) * wl - sum_pit + c.sum_hinv * wl
                    - c.sum_hinv_grad
                    - c.slack_hinv_grad;
                num / (c.slack_hinv + c.sum_pi0)
            })
            .collect();
        let mut next = DualState::new(self.network, self.hess, w);
        next.t = state.t + 1;
        next.weighted_price0 = state.weighted_price0.clone();
        next
    }
}

/// One per-link dual update from an initialized state.
pub fn dual_step_distributed(
    network: &Network,
    hess: &[f64],
    grad: &[f64],
    state: &DualState,
) -> Result<DualState> {
    check_lengths(network, hess, Some(grad))?;
    let pi0 = state.weighted_price0.clone().ok_or(Error::Uninitialized)?;
    Ok(DistributedDual::with_pi0(network, hess, grad, pi0).step(state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Utility;

    fn fig1() -> Network {
        Network::from_routing(
            &[vec![1, 0], vec![0, 1], vec![1, 1], vec![1, 0], vec![0, 1]],
            vec![1.0, 1.0, 2.0, 1.0, 1.0],
            vec![Utility::log(1.0); 2],
        )
        .unwrap()
    }

    #[test]
    fn fig1_unit_hessian_splitting() {
        let n = fig1();
        let s = build_splitting(&n, &[1.0; 7], &[0.0; 7]).unwrap();
        assert_eq!(s.d, vec![2.0, 2.0, 3.0, 2.0, 2.0]);
        assert_eq!(s.b_bar, vec![2.0, 2.0, 4.0, 2.0, 2.0]);
        let r = n.routing_matrix();
        let rr = &r * r.transpose();
        for i in 0..5 {
            for j in 0..5 {
                let expect = if i == j { 0.0 } else { rr[(i, j)] };
                assert_eq!(s.b[(i, j)], expect);
            }
        }
        assert!(s.q_is_diagonally_dominant());
    }

    #[test]
    fn single_link_scalar_case() {
        let n = Network::new(vec![vec![0]], vec![1.0], vec![Utility::log(1.0)]).unwrap();
        let grad = [0.3, -1.1];
        let s = build_splitting(&n, &[1.0, 1.0], &grad).unwrap();
        assert_eq!(s.d, vec![2.0]);
        assert_eq!(s.b_bar, vec![0.0]);
        let w1 = dual_step_matrix(&s, &[5.0]);
        let exact = solve_dual_exact(&n, &[1.0, 1.0], &grad).unwrap();
        assert!((w1[0] - s.rhs[0] / 2.0).abs() < 1e-15);
        assert!((exact[0] + (grad[0] + grad[1]) / 2.0).abs() < 1e-15);
        let st = DualState::start(&n, &[1.0, 1.0], vec![5.0]);
        let w2 = dual_step_distributed(&n, &[1.0, 1.0], &grad, &st).unwrap();
        assert!((w2.w[0] - w1[0]).abs() < 1e-15);
    }

    #[test]
    fn fig1_distributed_hand_values() {
        // H = I, grad = (g), w = 0: w_l(1) = -(sum_{i in S(l)} g_i + g_{S+l}) / (1 + sum |L(i)|)
        let n = fig1();
        let grad = [1.0, 2.0, -1.0, -2.0, -3.0, -4.0, -5.0];
        let st = DualState::start(&n, &[1.0; 7], vec![0.0; 5]);
        let next = dual_step_distributed(&n, &[1.0; 7], &grad, &st).unwrap();
        let expect = [
            -(1.0 - 1.0) / 4.0,
            -(2.0 - 2.0) / 4.0,
            -(3.0 - 3.0) / 7.0,
            -(1.0 - 4.0) / 4.0,
            -(2.0 - 5.0) / 4.0,
        ];
        for (a, b) in next.w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert_eq!(next.t, 1);
    }

    #[test]
    fn uninitialized_cache_is_an_error() {
        let n = fig1();
        let st = DualState::new(&n, &[1.0; 7], vec![0.0; 5]);
        assert!(matches!(
            dual_step_distributed(&n, &[1.0; 7], &[0.0; 7], &st),
            Err(Error::Uninitialized)
        ));
    }

    #[test]
    fn exact_solution_is_fixed_point() {
        let n = fig1();
        let hess = [2.0, 3.0, 1.5, 0.5, 4.0, 1.0, 2.5];
        let grad = [-1.0, -0.5, -0.2, -3.0, -0.1, -0.7, -2.0];
        let w = solve_dual_exact(&n, &hess, &grad).unwrap();
        let s = build_splitting(&n, &hess, &grad).unwrap();
        let w1 = s.step(&w);
        for (a, b) in w.iter().zip(&w1) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
