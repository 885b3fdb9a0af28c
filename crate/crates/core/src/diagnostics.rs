//! Runtime checks of the convergence-phase inequalities on a finished trace.

use serde::{Deserialize, Serialize};

use crate::direction::exact_decrement;
use crate::error::Result;
use crate::model::{BarrierProblem, Network, FEASIBILITY_TOL};
use crate::solver::SolverConfig;
use crate::trace::{Phase, Trace};

/// Decrement level below which `f* >= f(x) - lambda^2` is guaranteed.
pub const QUADRATIC_REGION: f64 = 0.68;

/// Constants of the analysis for one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConstants {
    /// `(2Vb - V + b - 1) / b`
    pub y: f64,
    /// Largest admissible `alpha`; nonpositive when `epsilon` is too large.
    pub alpha: f64,
    /// Guaranteed per-step decrease in the damped phase.
    pub damped_decrease: Option<f64>,
    pub phi: f64,
    pub xi: f64,
    pub v: f64,
    /// Smallest `delta` with `xi + v xi <= delta / (4 v)`, if below 1/2.
    pub delta: Option<f64>,
    /// Named inequalities on `(p, epsilon, phi)` and whether each holds.
    pub conditions: Vec<(String, bool)>,
}

/// Smallest `phi` compatible with a switch at `theta < V`.
pub fn default_phi(cfg: &SolverConfig) -> f64 {
    (1.0 + cfg.p) * (cfg.v + cfg.decrement_noise) + cfg.epsilon.sqrt()
}

pub fn analysis_constants(cfg: &SolverConfig, phi: Option<f64>) -> AnalysisConstants {
    let (p, eps, v, b) = (cfg.p, cfg.epsilon, cfg.v, cfg.b);
    let se = eps.sqrt();
    let y = (2.0 * v * b - v + b - 1.0) / b;
    let alpha = if y > 0.0 {
        (0.5 - p - se / y) / (1.0 + p)
    } else {
        f64::NEG_INFINITY
    };
    let damped_decrease =
        (alpha > 0.0).then(|| (2.0 * b - 1.0) * alpha * (1.0 + p) * y * y / (1.0 + y));
    let phi = phi.unwrap_or_else(|| default_phi(cfg));
    let den = 1.0 - p - phi - se;
    let xi = (phi * p + se) / den + (2.0 * phi * se + eps) / (den * den);
    let vv = 1.0 / (den * den);
    let delta = 4.0 * vv * (xi + vv * xi);
    let conditions = vec![
        ("phi <= 0.267".to_string(), phi <= 0.267),
        (
            "(1+p)(V+tau) + sqrt(eps) <= phi".to_string(),
            (1.0 + p) * (v + cfg.decrement_noise) + se <= phi * (1.0 + 1e-12),
        ),
        (
            "v 0.68^2 + xi <= 0.68".to_string(),
            vv * 0.68 * 0.68 + xi <= 0.68,
        ),
        (
            "(0.68 + sqrt(eps)) / (1-p) <= 1".to_string(),
            (0.68 + se) / (1.0 - p) <= 1.0,
        ),
        (
            "p + sqrt(eps) <= 1 - (4 phi^2)^(1/4) - phi".to_string(),
            p + se <= 1.0 - (4.0 * phi * phi).powf(0.25) - phi,
        ),
        (
            "eps < ((0.5-p) Y)^2".to_string(),
            eps < ((0.5 - p) * y).powi(2),
        ),
        ("den > 0".to_string(), den > 0.0),
    ];
    AnalysisConstants {
        y,
        alpha,
        damped_decrease,
        phi,
        xi,
        v: vv,
        delta: (delta < 0.5).then_some(delta),
        conditions,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub k: usize,
    pub check: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub constants: AnalysisConstants,
    /// Exact decrement at every recorded iterate.
    pub exact_decrements: Vec<f64>,
    pub damped_checked: usize,
    pub quadratic_checked: usize,
    pub suboptimality_checked: usize,
    pub violations: Vec<Violation>,
}

impl PhaseReport {
    pub fn violations_of(&self, prefix: &str) -> usize {
        self.violations
            .iter()
            .filter(|v| v.check.starts_with(prefix))
            .count()
    }
}

/// Checks every step of `trace` against the damped-decrease bound, the
/// stepsize bracket, the quadratic-phase recursion and the suboptimality
/// bound, using exact decrements recomputed from the stored iterates.
/// `f_ref` is the barrier optimum of the same scaled problem.
pub fn phase_diagnostics(
    network: &Network,
    trace: &Trace,
    cfg: &SolverConfig,
    f_ref: f64,
    phi: Option<f64>,
) -> Result<PhaseReport> {
    let constants = analysis_constants(cfg, phi);
    let problem = BarrierProblem::new(network, trace.mu, trace.scale)?;
    let mut lam = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        let g = problem.gradient(&r.x)?;
        let h = problem.hessian_diag(&r.x)?;
        lam.push(exact_decrement(network, &h, &g)?);
    }
    let mut violations = Vec::new();
    let mut push = |k, check: &str, lhs, rhs| {
        violations.push(Violation {
            k,
            check: check.to_string(),
            lhs,
            rhs,
        })
    };
    let (mut damped_checked, mut quadratic_checked, mut suboptimality_checked) = (0, 0, 0);
    let b = cfg.b;
    for (k, r) in trace.records.iter().enumerate() {
        let slack = 1e-10 * (1.0 + r.f.abs());
        if r.x.iter().any(|&v| !(v > 0.0)) {
            push(
                k,
                "positivity",
                r.x.iter().cloned().fold(f64::INFINITY, f64::min),
                0.0,
            );
        }
        if r.feas_residual > FEASIBILITY_TOL {
            push(k, "feasibility", r.feas_residual, FEASIBILITY_TOL);
        }
        if lam[k] <= QUADRATIC_REGION {
            suboptimality_checked += 1;
            if f_ref < r.f - lam[k] * lam[k] - slack {
                push(k, "suboptimality", f_ref, r.f - lam[k] * lam[k]);
            }
        }
        if r.phase == Phase::Damped && r.stepsize > 0.0 {
            let lo = (2.0 * b - 1.0) / (r.lambda_tilde + 1.0);
            let hi = 1.0 / (r.lambda_tilde + 1.0);
            if r.stepsize < lo * (1.0 - 1e-12) || r.stepsize > hi * (1.0 + 1e-12) {
                push(k, "stepsize-bracket", r.stepsize, hi);
            }
            if let (Some(next), Some(bound)) = (trace.records.get(k + 1), constants.damped_decrease)
            {
                damped_checked += 1;
                if next.f - r.f > -bound + slack {
                    push(k, "damped-decrease", next.f - r.f, -bound);
                }
            }
        }
        if r.phase == Phase::Quadratic && r.stepsize == 1.0 && k + 1 < lam.len() {
            quadratic_checked += 1;
            let rhs = constants.v * lam[k] * lam[k] + constants.xi;
            if lam[k + 1] > rhs * (1.0 + 1e-9) + 1e-14 {
                push(k, "quadratic", lam[k + 1], rhs);
            }
        }
    }
    Ok(PhaseReport {
        constants,
        exact_decrements: lam,
        damped_checked,
        quadratic_checked,
        suboptimality_checked,
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_constants() {
        let c = analysis_constants(&SolverConfig::default(), None);
        assert!((c.y - 0.0630).abs() < 1e-3, "{c:?}");
        assert!((c.alpha - 0.34).abs() < 0.01);
        assert!((c.damped_decrease.unwrap() - 0.00115).abs() < 1e-4);
        assert!((c.phi - 0.1301).abs() < 1e-4);
        assert!((c.v - 1.356).abs() < 1e-3);
        assert!((c.xi - 0.0155).abs() < 1e-3);
        assert!((c.delta.unwrap() - 0.197).abs() < 2e-3);
        assert!(c.conditions.iter().all(|(_, ok)| *ok), "{:?}", c.conditions);
    }

    #[test]
    fn upper_phi_breaks_conditions() {
        let c = analysis_constants(&SolverConfig::default(), Some(0.267));
        assert!(c.conditions.iter().any(|(_, ok)| !ok));
    }

    #[test]
    fn exact_path_has_zero_xi() {
        let cfg = SolverConfig {
            p: 0.0,
            epsilon: 0.0,
            ..Default::default()
        };
        let c = analysis_constants(&cfg, None);
        assert_eq!(c.xi, 0.0);
    }

    #[test]
    fn large_epsilon_voids_damped_bound() {
        let cfg = SolverConfig {
            epsilon: 0.01,
            ..Default::default()
        };
        assert!(analysis_constants(&cfg, None).damped_decrease.is_none());
    }
}
