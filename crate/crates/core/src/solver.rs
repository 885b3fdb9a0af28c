//! Outer inexact Newton loop, stepsize rule, reference solves and the
//! two-pass objective scaling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auxgraph::{build_auxiliary_graph, compute_theta, AuxiliaryGraph};
use crate::direction::{direction_delta, inexact_decrement};
use crate::dual::{build_splitting, solve_dual_exact};
use crate::errctl::{
    default_stage_one_iters, spectral_bound_from, ErrorControl, ErrorControlConfig,
    DUAL_ITERATION_CAP,
};
use crate::error::{Error, Result};
use crate::kkt::exact_newton_step;
use crate::model::{eval_h, feasible_init, BarrierProblem, Network, PrimalVector};
use crate::spectral::{largest_eigenvalue, spectral_report, MAX_CUT_LIMIT};
use crate::trace::{IterationRecord, Phase, Termination, Trace};

/// Upper end of the admissible phase threshold window.
pub const V_MAX: f64 = 0.267;

/// How prices are obtained at each primal step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualMode {
    /// Per-link splitting iteration with the two-stage stopping test.
    Distributed,
    /// Dense solve; no dual iterations are counted.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub mu: f64,
    pub p: f64,
    pub epsilon: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub b: f64,
    /// Stage-one dual budget; derived from the spectral bound when unset.
    pub stage_one_iters: Option<usize>,
    pub theta_term: f64,
    pub max_primal_iters: usize,
    /// Relative utility error target of the two-pass scheme.
    pub a: f64,
    pub seed: u64,
    /// Half-width of uniform noise added to the decrement estimate.
    pub decrement_noise: f64,
    pub dual_mode: DualMode,
    pub dual_iteration_cap: usize,
}

/// Midpoint of the admissible stepsize window `((V+1)/(2V+1), 1)`.
pub fn default_b(v: f64) -> f64 {
    0.5 * ((v + 1.0) / (2.0 * v + 1.0) + 1.0)
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu: 1.0,
            p: 1e-3,
            epsilon: 1e-4,
            v: 0.12,
            b: default_b(0.12),
            stage_one_iters: None,
            theta_term: 1e-8,
            max_primal_iters: 200,
            a: 0.01,
            seed: 0,
            decrement_noise: 0.0,
            dual_mode: DualMode::Distributed,
            dual_iteration_cap: DUAL_ITERATION_CAP,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.mu >= 1.0 && self.mu.is_finite()) {
            return bad(format!("mu must be at least 1, got {}", self.mu));
        }
        if !(self.v > 0.0 && self.v < V_MAX) {
            return bad(format!("V must lie in (0, {V_MAX}), got {}", self.v));
        }
        let lo = (self.v + 1.0) / (2.0 * self.v + 1.0);
        if !(self.b > lo && self.b < 1.0) {
            return bad(format!(
                "b must lie in ({lo}, 1) for V = {}, got {}",
                self.v, self.b
            ));
        }
        if self.dual_mode == DualMode::Distributed {
            if !(self.p > 0.0 && self.p < 0.5) {
                return bad(format!("p must lie in (0, 0.5), got {}", self.p));
            }
            if !(self.epsilon > 0.0) {
                return bad(format!("epsilon must be positive, got {}", self.epsilon));
            }
        }
        if self.stage_one_iters == Some(0) {
            return bad("stage-one budget must be at least 1".into());
        }
        if !(self.theta_term >= 0.0) {
            return bad(format!(
                "theta_term must be nonnegative, got {}",
                self.theta_term
            ));
        }
        let tau_max = (1.0 / self.b - 1.0) * (1.0 + self.v);
        if !(self.decrement_noise >= 0.0 && self.decrement_noise <= tau_max) {
            return bad(format!(
                "decrement noise must lie in [0, {tau_max}], got {}",
                self.decrement_noise
            ));
        }
        if !(self.a > 0.0) {
            return bad(format!(
                "relative target a must be positive, got {}",
                self.a
            ));
        }
        Ok(())
    }
}

/// Damped steps `b / (theta + 1)` while `theta >= V` has held at every step;
/// afterwards unit steps forever.
pub fn stepsize_rule(theta: f64, phase: Phase, v: f64, b: f64) -> (f64, Phase) {
    if phase == Phase::Damped && theta >= v {
        (b / (theta + 1.0), Phase::Damped)
    } else {
        (1.0, Phase::Quadratic)
    }
}

/// Per-network state reused across solves: the auxiliary graph and the
/// consensus graph.
pub struct Solver<'a> {
    network: &'a Network,
    aux: AuxiliaryGraph,
    control: ErrorControl<'a>,
}

impl<'a> Solver<'a> {
    pub fn new(network: &'a Network) -> Result<Self> {
        Ok(Solver {
            network,
            aux: build_auxiliary_graph(network)?,
            control: ErrorControl::new(network)?,
        })
    }

    pub fn aux(&self) -> &AuxiliaryGraph {
        &self.aux
    }

    pub fn solve(
        &self,
        problem: &BarrierProblem,
        config: &SolverConfig,
    ) -> Result<(PrimalVector, Trace)> {
        self.solve_from(problem, config, feasible_init(self.network))
    }

    pub fn solve_from(
        &self,
        problem: &BarrierProblem,
        config: &SolverConfig,
        x0: PrimalVector,
    ) -> Result<(PrimalVector, Trace)> {
        config.validate()?;
        let net = self.network;
        if !std::ptr::eq(problem.network, net) && problem.network != net {
            return Err(Error::InvalidConfig(
                "problem is defined on a different network".into(),
            ));
        }
        x0.check_positive()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut x = x0;
        let mut w = vec![1.0; net.num_links()];
        let mut phase = Phase::Damped;
        let mut records = Vec::new();
        let mut dual_graph = None;
        let mut termination = Termination::IterationCap;
        for k in 0..config.max_primal_iters {
            let grad = problem.gradient(&x.values)?;
            let hess = problem.hessian_diag(&x.values)?;
            let (certificate, dual_iters, consensus_rounds) = match config.dual_mode {
                DualMode::Distributed => {
                    let split = build_splitting(net, &hess, &grad)?;
                    if k == 0 {
                        dual_graph = Some(spectral_report(&split, MAX_CUT_LIMIT));
                    }
                    let f = spectral_bound_from(largest_eigenvalue(&split));
                    let cfg = ErrorControlConfig {
                        stage_one_iters: config
                            .stage_one_iters
                            .unwrap_or_else(|| default_stage_one_iters(f)),
                        p: config.p,
                        epsilon: config.epsilon,
                        spectral_bound: f,
                        iteration_cap: config.dual_iteration_cap,
                    };
                    let out = self.control.run(&hess, &grad, &cfg, w)?;
                    w = out.state.w;
                    let c = out.certificate;
                    let (n, r) = (c.dual_iters, c.consensus_rounds);
                    (Some(c), n, r)
                }
                DualMode::Exact => {
                    if k == 0 {
                        let split = build_splitting(net, &hess, &grad)?;
                        dual_graph = Some(spectral_report(&split, MAX_CUT_LIMIT));
                    }
                    w = solve_dual_exact(net, &hess, &grad)?;
                    (None, 0, 0)
                }
            };
            let delta = direction_delta(net, &hess, &grad, &w);
            let lambda_tilde = inexact_decrement(&delta, &hess);
            let (mut theta, summation_rounds) = compute_theta(net, &self.aux, &delta, &hess)?;
            if config.decrement_noise > 0.0 {
                let tau = config.decrement_noise;
                theta = (theta + rng.gen_range(-tau..=tau)).max(0.0);
            }
            let (d, next_phase) = stepsize_rule(theta, phase, config.v, config.b);
            phase = next_phase;
            let done = phase == Phase::Quadratic && theta <= config.theta_term;
            records.push(IterationRecord {
                k,
                f: problem.objective(&x.values)?,
                h: eval_h(net, x.rates()),
                lambda_tilde,
                theta,
                stepsize: if done { 0.0 } else { d },
                phase,
                dual_iters,
                consensus_rounds,
                summation_rounds,
                min_slack: x.min_slack(),
                feas_residual: x.feasibility_residual(net),
                certificate,
                x: x.values.clone(),
            });
            if done {
                termination = Termination::Converged;
                break;
            }
            let next: Vec<f64> = x
                .values
                .iter()
                .zip(&delta)
                .map(|(a, b)| a + d * b)
                .collect();
            if let Some(index) = next.iter().position(|&v| !(v > 0.0)) {
                return Err(Error::PositivityViolation {
                    k: k + 1,
                    index,
                    value: next[index],
                });
            }
            x = PrimalVector::new(next, net.num_sources());
        }
        let method = match config.dual_mode {
            DualMode::Distributed => "newton",
            DualMode::Exact => "exact-newton",
        };
        Ok((
            x,
            Trace {
                method: method.into(),
                mu: problem.mu,
                scale: problem.scale,
                termination,
                dual_graph,
                records,
            },
        ))
    }
}

/// Distributed inexact Newton method from the standard interior start.
pub fn newton_solve(
    problem: &BarrierProblem,
    config: &SolverConfig,
) -> Result<(PrimalVector, Trace)> {
    Solver::new(problem.network)?.solve(problem, config)
}

/// Outcome of a dense exact-Newton solve.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub x: PrimalVector,
    pub f: f64,
    pub decrement: f64,
    pub iterations: usize,
}

/// Exact Newton with dense duals and the classical damped step
/// `1 / (1 + lambda)` until the decrement stops shrinking below `tol`.
pub fn exact_newton_from(
    problem: &BarrierProblem,
    x0: PrimalVector,
    tol: f64,
    max_iters: usize,
) -> Result<ReferenceSolution> {
    let net = problem.network;
    let mut x = x0;
    let mut last = f64::INFINITY;
    for it in 0..max_iters {
        let grad = problem.gradient(&x.values)?;
        let hess = problem.hessian_diag(&x.values)?;
        let step = exact_newton_step(net, &hess, &grad)?;
        let lam = inexact_decrement(&step.delta, &hess);
        if lam <= tol || (lam < 1e-9 && lam >= last) {
            return Ok(ReferenceSolution {
                f: problem.objective(&x.values)?,
                x,
                decrement: lam,
                iterations: it,
            });
        }
        last = lam;
        let d = if lam > 0.25 { 1.0 / (1.0 + lam) } else { 1.0 };
        let next: Vec<f64> = x
            .values
            .iter()
            .zip(&step.delta)
            .map(|(a, b)| a + d * b)
            .collect();
        if let Some(index) = next.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::PositivityViolation {
                k: it + 1,
                index,
                value: next[index],
            });
        }
        x = PrimalVector::new(next, net.num_sources());
    }
    Err(Error::IterationCap {
        what: "reference Newton solve",
        limit: max_iters,
    })
}

/// Barrier minimizer `x(mu)` to decrement `1e-12`.
pub fn reference_solve(problem: &BarrierProblem) -> Result<ReferenceSolution> {
    exact_newton_from(problem, feasible_init(problem.network), 1e-12, 200)
}

/// Unconstrained-by-barrier optimum of the utility problem, approached by
/// path following down to an effective barrier weight of `1e-10`.
#[derive(Clone, Debug)]
pub struct ReferenceOptimum {
    pub rates: Vec<f64>,
    pub h: f64,
    pub barrier_weight: f64,
}

pub fn reference_optimum(network: &Network) -> Result<ReferenceOptimum> {
    let mut x = feasible_init(network);
    let mut scale = 1.0;
    loop {
        let problem = BarrierProblem::new(network, 1.0, scale)?;
        x = exact_newton_from(&problem, x, 1e-11, 200)?.x;
        if scale >= 1e10 {
            break;
        }
        scale *= 10.0;
    }
    Ok(ReferenceOptimum {
        h: eval_h(network, x.rates()),
        rates: x.rates().to_vec(),
        barrier_weight: 1.0 / scale,
    })
}

/// Both passes of the objective-scaling scheme.
#[derive(Clone, Debug)]
pub struct TwoPassResult {
    pub x: PrimalVector,
    /// `h(x(mu))` after the first pass.
    pub h_first: f64,
    /// Constant added to `h` so that the scale is positive.
    pub shift: f64,
    pub scale: f64,
    pub first: Trace,
    pub second: Trace,
}

impl TwoPassResult {
    pub fn counted_iterations(&self) -> usize {
        self.first.counted_iterations() + self.second.counted_iterations()
    }
}

/// `M = 1 / (a (h1 + C - mu))`, where `C = 0` when `h1 > mu` and otherwise
/// `C = -2 h1`, which needs `-h1 > mu`.
pub fn objective_scale(h1: f64, mu: f64, a: f64) -> Result<(f64, f64)> {
    if h1 - mu > 0.0 {
        return Ok((1.0 / (a * (h1 - mu)), 0.0));
    }
    let shift = -2.0 * h1;
    let gap = h1 + shift - mu;
    if h1 < 0.0 && gap > 0.0 {
        Ok((1.0 / (a * gap), shift))
    } else {
        Err(Error::ScaleUndefined(format!(
            "h(x(mu)) = {h1} is within mu = {mu} of zero"
        )))
    }
}

pub fn two_pass_solve(network: &Network, config: &SolverConfig) -> Result<TwoPassResult> {
    let solver = Solver::new(network)?;
    let first_problem = BarrierProblem::new(network, config.mu, 1.0)?;
    let (x1, first) = solver.solve(&first_problem, config)?;
    let h_first = eval_h(network, x1.rates());
    let (scale, shift) = objective_scale(h_first, config.mu, config.a)?;
    let second_problem = BarrierProblem::new(network, 1.0, scale)?;
    let second_cfg = SolverConfig {
        mu: 1.0,
        ..config.clone()
    };
    let (x, second) = solver.solve(&second_problem, &second_cfg)?;
    Ok(TwoPassResult {
        x,
        h_first,
        shift,
        scale,
        first,
        second,
    })
}
