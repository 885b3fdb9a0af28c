//! Problem instances: topology, utilities, the barrier objective and its derivatives.

use std::collections::VecDeque;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance on `A x = c` used throughout the solver.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Per-source utility. Only strictly concave families with a self-concordant
/// negative are admitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Utility {
    /// `weight * ln(s) + offset`
    Log {
        weight: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        offset: f64,
    },
    /// `linear * s - curvature / 2 * s^2 + offset`
    Quadratic {
        linear: f64,
        curvature: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        offset: f64,
    },
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl Utility {
    pub fn log(weight: f64) -> Self {
        Utility::Log {
            weight,
            offset: 0.0,
        }
    }

    pub fn quadratic(linear: f64, curvature: f64) -> Self {
        Utility::Quadratic {
            linear,
            curvature,
            offset: 0.0,
        }
    }

    /// Same utility shifted by an additive constant.
    pub fn shifted(&self, by: f64) -> Self {
        match *self {
            Utility::Log { weight, offset } => Utility::Log {
                weight,
                offset: offset + by,
            },
            Utility::Quadratic {
                linear,
                curvature,
                offset,
            } => Utility::Quadratic {
                linear,
                curvature,
                offset: offset + by,
            },
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Utility::Log { weight, offset } => weight * s.ln() + offset,
            Utility::Quadratic {
                linear,
                curvature,
                offset,
            } => linear * s - 0.5 * curvature * s * s + offset,
        }
    }

    pub fn d1(&self, s: f64) -> f64 {
        match *self {
            Utility::Log { weight, .. } => weight / s,
            Utility::Quadratic {
                linear, curvature, ..
            } => linear - curvature * s,
        }
    }

    pub fn d2(&self, s: f64) -> f64 {
        match *self {
            Utility::Log { weight, .. } => -weight / (s * s),
            Utility::Quadratic { curvature, .. } => -curvature,
        }
    }

    pub fn d3(&self, s: f64) -> f64 {
        match *self {
            Utility::Log { weight, .. } => 2.0 * weight / (s * s * s),
            Utility::Quadratic { .. } => 0.0,
        }
    }

    /// Rate maximizing `U(s) - price * s` over `s >= 0`, capped at `cap`.
    pub fn best_response(&self, price: f64, cap: f64) -> f64 {
        let s = match *self {
            Utility::Log { weight, .. } => {
                if price <= 0.0 {
                    cap
                } else {
                    weight / price
                }
            }
            Utility::Quadratic {
                linear, curvature, ..
            } => (linear - price) / curvature,
        };
        s.clamp(0.0, cap)
    }

    /// Checks strict concavity, monotonicity on `(0, max_rate]` and
    /// self-concordance of `-U` on a logarithmic grid.
    pub fn validate(&self, max_rate: f64) -> std::result::Result<(), String> {
        match *self {
            Utility::Log { weight, offset } => {
                if !(weight.is_finite() && weight >= 1.0) {
                    return Err(format!("log weight must be >= 1, got {weight}"));
                }
                if !offset.is_finite() {
                    return Err("offset must be finite".into());
                }
            }
            Utility::Quadratic {
                linear,
                curvature,
                offset,
            } => {
                if !(curvature.is_finite() && curvature > 0.0) {
                    return Err(format!("curvature must be positive, got {curvature}"));
                }
                if !(linear.is_finite() && offset.is_finite()) {
                    return Err("coefficients must be finite".into());
                }
            }
        }
        for k in -24..=24 {
            let s = 10f64.powf(k as f64 / 4.0);
            let neg2 = -self.d2(s);
            if neg2 <= 0.0 {
                return Err(format!("not strictly concave at s = {s:e}"));
            }
            if self.d3(s).abs() > 2.0 * neg2.powf(1.5) * (1.0 + 1e-9) {
                return Err(format!("negative utility not self-concordant at s = {s:e}"));
            }
            if s <= max_rate && self.d1(s) < 0.0 {
                return Err(format!("decreasing at s = {s:e}"));
            }
        }
        if self.d1(max_rate) < 0.0 {
            return Err(format!("decreasing at s = {max_rate:e}"));
        }
        Ok(())
    }
}

/// Immutable problem instance: fixed routes, link capacities and utilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    capacities: Vec<f64>,
    routes: Vec<Vec<usize>>,
    users: Vec<Vec<usize>>,
    utilities: Vec<Utility>,
}

#[derive(Serialize, Deserialize)]
struct NetworkFile {
    links: Vec<f64>,
    sources: Vec<SourceEntry>,
}

#[derive(Serialize, Deserialize)]
struct SourceEntry {
    route: Vec<usize>,
    utility: Utility,
}

impl Network {
    /// Builds a network from per-source routes (ordered link indices).
    pub fn new(
        routes: Vec<Vec<usize>>,
        capacities: Vec<f64>,
        utilities: Vec<Utility>,
    ) -> Result<Self> {
        let num_links = capacities.len();
        let num_sources = routes.len();
        if num_sources == 0 {
            return Err(Error::DimensionMismatch {
                what: "sources",
                expected: 1,
                got: 0,
            });
        }
        if num_links == 0 {
            return Err(Error::DimensionMismatch {
                what: "links",
                expected: 1,
                got: 0,
            });
        }
        if utilities.len() != num_sources {
            return Err(Error::DimensionMismatch {
                what: "utilities",
                expected: num_sources,
                got: utilities.len(),
            });
        }
        for (l, &c) in capacities.iter().enumerate() {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::NonPositiveCapacity { link: l, value: c });
            }
        }
        let mut users = vec![Vec::new(); num_links];
        for (i, route) in routes.iter().enumerate() {
            if route.is_empty() {
                return Err(Error::EmptyRoute(i));
            }
            for (pos, &l) in route.iter().enumerate() {
                if l >= num_links {
                    return Err(Error::LinkOutOfRange {
                        source_index: i,
                        link: l,
                        num_links,
                    });
                }
                if route[..pos].contains(&l) {
                    return Err(Error::DuplicateLink {
                        source_index: i,
                        link: l,
                    });
                }
                users[l].push(i);
            }
        }
        if let Some(l) = users.iter().position(Vec::is_empty) {
            return Err(Error::UnusedLink(l));
        }
        let max_cap = capacities.iter().cloned().fold(0.0, f64::max);
        for (i, u) in utilities.iter().enumerate() {
            u.validate(max_cap)
                .map_err(|reason| Error::InvalidUtility {
                    source_index: i,
                    reason,
                })?;
        }
        let net = Network {
            capacities,
            routes,
            users,
            utilities,
        };
        if let Some(i) = net.first_unreachable_source() {
            return Err(Error::Disconnected(i));
        }
        Ok(net)
    }

    /// Builds a network from an L x S 0/1 routing matrix given as rows.
    /// Routes list links in ascending index order.
    pub fn from_routing(
        routing: &[Vec<u8>],
        capacities: Vec<f64>,
        utilities: Vec<Utility>,
    ) -> Result<Self> {
        if routing.len() != capacities.len() {
            return Err(Error::DimensionMismatch {
                what: "routing rows",
                expected: capacities.len(),
                got: routing.len(),
            });
        }
        let num_sources = utilities.len();
        let mut routes = vec![Vec::new(); num_sources];
        for (l, row) in routing.iter().enumerate() {
            if row.len() != num_sources {
                return Err(Error::DimensionMismatch {
                    what: "routing columns",
                    expected: num_sources,
                    got: row.len(),
                });
            }
            for (i, &r) in row.iter().enumerate() {
                match r {
                    0 => {}
                    1 => routes[i].push(l),
                    _ => {
                        return Err(Error::Parse(format!(
                            "routing entry ({l},{i}) is {r}, expected 0 or 1"
                        )))
                    }
                }
            }
        }
        Network::new(routes, capacities, utilities)
    }

    fn first_unreachable_source(&self) -> Option<usize> {
        let s = self.num_sources();
        let mut seen = vec![false; s];
        let mut link_seen = vec![false; self.num_links()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &l in &self.routes[i] {
                if link_seen[l] {
                    continue;
                }
                link_seen[l] = true;
                for &j in &self.users[l] {
                    if !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        seen.iter().position(|v| !v)
    }

    pub fn num_links(&self) -> usize {
        self.capacities.len()
    }

    pub fn num_sources(&self) -> usize {
        self.routes.len()
    }

    /// Length of the primal vector, `S + L`.
    pub fn dim(&self) -> usize {
        self.num_sources() + self.num_links()
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn utilities(&self) -> &[Utility] {
        &self.utilities
    }

    /// Links on the route of source `i`, in traversal order.
    pub fn route(&self, i: usize) -> &[usize] {
        &self.routes[i]
    }

    pub fn routes(&self) -> &[Vec<usize>] {
        &self.routes
    }

    /// Sources crossing link `l`, ascending.
    pub fn users(&self, l: usize) -> &[usize] {
        &self.users[l]
    }

    pub fn routing_matrix(&self) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(self.num_links(), self.num_sources());
        for (i, route) in self.routes.iter().enumerate() {
            for &l in route {
                r[(l, i)] = 1.0;
            }
        }
        r
    }

    /// The equality-constraint matrix `[R I]`.
    pub fn constraint_matrix(&self) -> DMatrix<f64> {
        let (l, s) = (self.num_links(), self.num_sources());
        let mut a = DMatrix::zeros(l, s + l);
        a.view_mut((0, 0), (l, s)).copy_from(&self.routing_matrix());
        for k in 0..l {
            a[(k, s + k)] = 1.0;
        }
        a
    }

    /// Computes `R s + y` for a primal vector laid out as rates then slacks.
    pub fn apply_constraints(&self, x: &[f64]) -> Vec<f64> {
        let s = self.num_sources();
        (0..self.num_links())
            .map(|l| self.users[l].iter().map(|&i| x[i]).sum::<f64>() + x[s + l])
            .collect()
    }

    /// Link loads `R s` for a rate vector.
    pub fn link_loads(&self, rates: &[f64]) -> Vec<f64> {
        (0..self.num_links())
            .map(|l| self.users[l].iter().map(|&i| rates[i]).sum())
            .collect()
    }

    /// Same topology and capacities with every utility shifted by `by`.
    pub fn with_shifted_utilities(&self, by: f64) -> Network {
        let mut out = self.clone();
        out.utilities = self.utilities.iter().map(|u| u.shifted(by)).collect();
        out
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: NetworkFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let (routes, utilities) = file
            .sources
            .into_iter()
            .map(|s| (s.route, s.utility))
            .unzip();
        Network::new(routes, file.links, utilities)
    }

    pub fn to_toml_string(&self) -> String {
        let file = NetworkFile {
            links: self.capacities.clone(),
            sources: self
                .routes
                .iter()
                .zip(&self.utilities)
                .map(|(r, u)| SourceEntry {
                    route: r.clone(),
                    utility: u.clone(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("network serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Network::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

/// Rates followed by slacks; length `S + L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalVector {
    pub values: Vec<f64>,
    pub num_sources: usize,
}

impl PrimalVector {
    pub fn new(values: Vec<f64>, num_sources: usize) -> Self {
        PrimalVector {
            values,
            num_sources,
        }
    }

    pub fn rates(&self) -> &[f64] {
        &self.values[..self.num_sources]
    }

    pub fn slacks(&self) -> &[f64] {
        &self.values[self.num_sources..]
    }

    pub fn min_slack(&self) -> f64 {
        self.slacks().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn check_positive(&self) -> Result<()> {
        match self.values.iter().position(|&v| !(v > 0.0)) {
            Some(index) => Err(Error::NonPositive {
                index,
                value: self.values[index],
            }),
            None => Ok(()),
        }
    }

    /// `||A x - c||_inf / ||c||_inf`
    pub fn feasibility_residual(&self, network: &Network) -> f64 {
        let ax = network.apply_constraints(&self.values);
        let cmax = network.capacities().iter().cloned().fold(0.0, f64::max);
        ax.iter()
            .zip(network.capacities())
            .map(|(a, c)| (a - c).abs())
            .fold(0.0, f64::max)
            / cmax
    }
}

/// Interior starting point: every rate equals `min c / (S + 1)`.
pub fn feasible_init(network: &Network) -> PrimalVector {
    let s = network.num_sources();
    let cmin = network
        .capacities()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let rate = cmin / (s as f64 + 1.0);
    let mut values = vec![rate; s];
    for l in 0..network.num_links() {
        let load = network.users(l).len() as f64 * rate;
        values.push(network.capacities()[l] - load);
    }
    let x = PrimalVector::new(values, s);
    debug_assert!(x.check_positive().is_ok());
    x
}

/// Negative total utility over the rate coordinates.
pub fn eval_h(network: &Network, rates: &[f64]) -> f64 {
    -network
        .utilities()
        .iter()
        .zip(rates)
        .map(|(u, &s)| u.value(s))
        .sum::<f64>()
}

/// `f(x) = -M sum U_i(s_i) - mu sum ln x_j` over a fixed network.
#[derive(Clone, Copy, Debug)]
pub struct BarrierProblem<'a> {
    pub network: &'a Network,
    pub mu: f64,
    pub scale: f64,
}

impl<'a> BarrierProblem<'a> {
    pub fn new(network: &'a Network, mu: f64, scale: f64) -> Result<Self> {
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "barrier coefficient must be positive, got {mu}"
            )));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "objective scale must be positive, got {scale}"
            )));
        }
        Ok(BarrierProblem { network, mu, scale })
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.network.dim() {
            return Err(Error::DimensionMismatch {
                what: "primal vector",
                expected: self.network.dim(),
                got: x.len(),
            });
        }
        match x.iter().position(|&v| !(v > 0.0)) {
            Some(index) => Err(Error::NonPositive {
                index,
                value: x[index],
            }),
            None => Ok(()),
        }
    }

    pub fn objective(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let util: f64 = self
            .network
            .utilities()
            .iter()
            .zip(x)
            .map(|(u, &v)| u.value(v))
            .sum();
        let barrier: f64 = x.iter().map(|v| v.ln()).sum();
        Ok(-self.scale * util - self.mu * barrier)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let s = self.network.num_sources();
        Ok(x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let b = -self.mu / v;
                if j < s {
                    b - self.scale * self.network.utilities()[j].d1(v)
                } else {
                    b
                }
            })
            .collect())
    }

    pub fn hessian_diag(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let s = self.network.num_sources();
        Ok(x.iter()
            .enumerate()
            .map(|(j, &v)| {
                let b = self.mu / (v * v);
                if j < s {
                    b - self.scale * self.network.utilities()[j].d2(v)
                } else {
                    b
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fig1() -> Network {
        Network::from_routing(
            &[vec![1, 0], vec![0, 1], vec![1, 1], vec![1, 0], vec![0, 1]],
            vec![1.0, 1.0, 2.0, 1.0, 1.0],
            vec![Utility::log(1.0); 2],
        )
        .unwrap()
    }

    #[test]
    fn fig1_routes_from_matrix() {
        let n = fig1();
        assert_eq!(n.route(0), &[0, 2, 3]);
        assert_eq!(n.route(1), &[1, 2, 4]);
        assert_eq!(n.users(2), &[0, 1]);
    }

    #[test]
    fn rejects_zero_column_and_row() {
        let err = Network::from_routing(&[vec![1, 0]], vec![1.0], vec![Utility::log(1.0); 2]);
        assert!(matches!(err, Err(Error::EmptyRoute(1))));
        let err =
            Network::from_routing(&[vec![1], vec![0]], vec![1.0, 1.0], vec![Utility::log(1.0)]);
        assert!(matches!(err, Err(Error::UnusedLink(1))));
    }

    #[test]
    fn rejects_bad_capacity_and_utility() {
        let err = Network::new(vec![vec![0]], vec![0.0], vec![Utility::log(1.0)]);
        assert!(matches!(
            err,
            Err(Error::NonPositiveCapacity { link: 0, .. })
        ));
        let err = Network::new(vec![vec![0]], vec![1.0], vec![Utility::log(0.5)]);
        assert!(matches!(err, Err(Error::InvalidUtility { .. })));
        // decreasing before the largest capacity
        let err = Network::new(
            vec![vec![0]],
            vec![10.0],
            vec![Utility::quadratic(1.0, 1.0)],
        );
        assert!(matches!(err, Err(Error::InvalidUtility { .. })));
        assert!(Network::new(vec![vec![0]], vec![1.0], vec![Utility::quadratic(2.0, 1.0)]).is_ok());
    }

    #[test]
    fn rejects_disconnected() {
        let err = Network::new(
            vec![vec![0], vec![1]],
            vec![1.0, 1.0],
            vec![Utility::log(1.0); 2],
        );
        assert!(matches!(err, Err(Error::Disconnected(1))));
    }

    #[test]
    fn minimal_instance() {
        let n = Network::from_routing(&[vec![1]], vec![1.0], vec![Utility::log(1.0)]).unwrap();
        let x = feasible_init(&n);
        assert_eq!(x.values, vec![0.5, 0.5]);
    }

    #[test]
    fn fig1_init() {
        let x = feasible_init(&fig1());
        let third = 1.0 / 3.0;
        let expect = [
            third,
            third,
            2.0 * third,
            2.0 * third,
            2.0 - 2.0 * third,
            2.0 * third,
            2.0 * third,
        ];
        for (a, b) in x.values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(x.feasibility_residual(&fig1()), 0.0);
    }

    #[test]
    fn plug_in_derivatives() {
        let n = Network::new(vec![vec![0]], vec![4.0], vec![Utility::log(1.0)]).unwrap();
        let p = BarrierProblem::new(&n, 1.0, 1.0).unwrap();
        let g = p.gradient(&[1.0, 2.0]).unwrap();
        let h = p.hessian_diag(&[1.0, 2.0]).unwrap();
        assert_eq!(g, vec![-2.0, -0.5]);
        assert_eq!(h, vec![2.0, 0.25]);
        assert!(p.objective(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn congested_example_h_value() {
        let n = Network::new(
            vec![vec![0, 1, 3], vec![2, 4, 3], vec![5, 6, 3]],
            vec![35.0; 7],
            vec![Utility::log(15.0); 3],
        )
        .unwrap();
        let h = eval_h(&n, &[10.0, 10.0, 10.0]);
        assert!((h + 45.0 * 10f64.ln()).abs() < 1e-12);
        assert_eq!(eval_h(&fig1(), &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn toml_round_trip() {
        let mut n = fig1();
        n.utilities[1] = Utility::quadratic(5.0, 0.5).shifted(2.0);
        let text = n.to_toml_string();
        assert_eq!(Network::from_toml_str(&text).unwrap(), n);
    }

    #[test]
    fn best_response_guards() {
        assert_eq!(Utility::log(2.0).best_response(0.0, 7.0), 7.0);
        assert_eq!(Utility::log(2.0).best_response(4.0, 7.0), 0.5);
        assert_eq!(Utility::quadratic(2.0, 1.0).best_response(3.0, 7.0), 0.0);
    }
}
