//! Multi-trial comparison of the Newton method against the first-order
//! baselines on seeded random networks.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{dual_price_method, FirstOrderConfig, Scaling};
use crate::error::{Error, Result};
use crate::gen::{random_network_with, GenSpec};
use crate::metrics::MessageMetrics;
use crate::model::{eval_h, Network};
use crate::solver::{reference_optimum, two_pass_solve, SolverConfig};
use crate::trace::Trace;

/// Environment variable overriding the default output directory.
pub const OUTPUT_ENV: &str = "NETNEWTON_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Newton,
    Subgradient,
    DiagonalScaled,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Newton, Method::Subgradient, Method::DiagonalScaled];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Newton => "newton",
            Method::Subgradient => "subgradient",
            Method::DiagonalScaled => "diagonal-scaled",
        }
    }

    fn scaling(self) -> Option<Scaling> {
        match self {
            Method::Newton => None,
            Method::Subgradient => Some(Scaling::Identity),
            Method::DiagonalScaled => Some(Scaling::Diagonal),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stepsizes {
    pub subgradient: f64,
    pub diagonal_scaled: f64,
}

impl Stepsizes {
    pub fn get(&self, m: Method) -> Option<f64> {
        match m {
            Method::Newton => None,
            Method::Subgradient => Some(self.subgradient),
            Method::DiagonalScaled => Some(self.diagonal_scaled),
        }
    }
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_band() -> f64 {
    0.05
}

fn default_hold() -> usize {
    50
}

fn default_max_iters() -> usize {
    200_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub trials: usize,
    pub links: usize,
    pub sources: usize,
    pub prob: f64,
    /// Trial `i` uses seed `seed + i`.
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    pub stepsizes: Stepsizes,
    #[serde(default = "default_band")]
    pub band: f64,
    #[serde(default = "default_hold")]
    pub hold: usize,
    #[serde(default = "default_max_iters")]
    pub max_first_order_iters: usize,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Where traces and the summary go; falls back to `NETNEWTON_OUT`.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Write one CSV trace per trial and method.
    #[serde(default)]
    pub write_traces: bool,
}

impl ExperimentSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 || self.methods.is_empty() {
            return Err(Error::InvalidConfig(
                "need at least one trial and one method".into(),
            ));
        }
        if !(self.stepsizes.subgradient > 0.0 && self.stepsizes.diagonal_scaled > 0.0) {
            return Err(Error::InvalidConfig("stepsizes must be positive".into()));
        }
        if !(self.band > 0.0) || self.hold == 0 {
            return Err(Error::InvalidConfig(
                "band and hold must be positive".into(),
            ));
        }
        self.solver.validate()
    }

    pub fn gen_spec(&self) -> GenSpec {
        GenSpec::new(self.links, self.sources, self.prob)
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }

    /// Explicit directory, else the environment override, else none.
    pub fn resolved_output_dir(&self) -> Option<PathBuf> {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
    }

    fn first_order_config(&self, stepsize: f64, reference_h: f64) -> FirstOrderConfig {
        FirstOrderConfig {
            stepsize,
            max_iters: self.max_first_order_iters,
            reference_h: Some(reference_h),
            band: self.band,
            hold: self.hold,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub method: Method,
    /// Counted iterations at termination; `None` when the run failed.
    pub counted_iterations: Option<usize>,
    /// Counted iterations when the final stay inside the band began.
    pub band_entry: Option<usize>,
    pub converged: bool,
    pub final_h: Option<f64>,
    pub reference_h: f64,
    pub relative_error: Option<f64>,
    /// Smallest slack over the whole run.
    pub worst_min_slack: Option<f64>,
    /// First counted iteration from which every later iterate is feasible.
    pub feasible_from: Option<usize>,
    pub primal_steps: usize,
    pub consensus_rounds: usize,
    pub summation_rounds: usize,
    pub messages: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub runs: usize,
    pub failures: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub min: Option<usize>,
    pub max: Option<usize>,
    pub mean_band_entry: Option<f64>,
    pub mean_relative_error: Option<f64>,
    /// `log10` of each successful count, in trial order.
    pub log10_counts: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub spec: ExperimentSpec,
    pub methods: Vec<MethodSummary>,
    pub trials: Vec<TrialResult>,
}

impl ComparisonSummary {
    pub fn method(&self, m: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    /// Plain-text table, one row per method.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<16} {:>5} {:>8} {:>12} {:>12} {:>10} {:>10}\n",
            "method", "runs", "failures", "mean", "median", "min", "max"
        );
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.1}"));
        let opt_u = |v: Option<usize>| v.map_or("-".to_string(), |x| x.to_string());
        for s in &self.methods {
            out.push_str(&format!(
                "{:<16} {:>5} {:>8} {:>12} {:>12} {:>10} {:>10}\n",
                s.method.as_str(),
                s.runs,
                s.failures,
                opt(s.mean),
                opt(s.median),
                opt_u(s.min),
                opt_u(s.max)
            ));
        }
        out
    }
}

/// Counted-iteration bookkeeping over a sequence of traces: band entry and
/// the start of the final feasible stretch.
fn scan_traces(
    network: &Network,
    traces: &[&Trace],
    reference_h: f64,
    band: f64,
) -> (Option<usize>, Option<usize>, f64) {
    let s = network.num_sources();
    let (mut count, mut entry, mut feasible_from) = (0usize, None, None);
    let mut worst = f64::INFINITY;
    for t in traces {
        for r in &t.records {
            let h = eval_h(network, &r.x[..s]);
            if (h - reference_h).abs() <= band * reference_h.abs() {
                entry.get_or_insert(count);
            } else {
                entry = None;
            }
            worst = worst.min(r.min_slack);
            if r.min_slack >= 0.0 {
                feasible_from.get_or_insert(count);
            } else {
                feasible_from = None;
            }
            count += r.dual_iters
                + usize::from(r.stepsize > 0.0 && r.phase != crate::trace::Phase::FirstOrder);
        }
    }
    (entry, feasible_from, worst)
}

struct MethodRun {
    result: TrialResult,
    traces: Vec<Trace>,
}

fn run_method(
    spec: &ExperimentSpec,
    network: &Network,
    trial: usize,
    method: Method,
    reference_h: f64,
) -> MethodRun {
    let mut result = TrialResult {
        trial,
        seed: spec.trial_seed(trial),
        method,
        counted_iterations: None,
        band_entry: None,
        converged: false,
        final_h: None,
        reference_h,
        relative_error: None,
        worst_min_slack: None,
        feasible_from: None,
        primal_steps: 0,
        consensus_rounds: 0,
        summation_rounds: 0,
        messages: 0,
        error: None,
    };
    let outcome: Result<(Vec<Trace>, Vec<f64>, usize, bool)> = match method.scaling() {
        None => two_pass_solve(network, &spec.solver).map(|tp| {
            let counted = tp.counted_iterations();
            let converged = tp.first.termination == crate::trace::Termination::Converged
                && tp.second.termination == crate::trace::Termination::Converged;
            (
                vec![tp.first, tp.second],
                tp.x.rates().to_vec(),
                counted,
                converged,
            )
        }),
        Some(scaling) => {
            let cfg =
                spec.first_order_config(spec.stepsizes.get(method).unwrap_or(1.0), reference_h);
            dual_price_method(network, &cfg, scaling).map(|r| {
                let counted = r.trace.counted_iterations();
                let converged = r.converged();
                (vec![r.trace], r.rates, counted, converged)
            })
        }
    };
    match outcome {
        Ok((traces, rates, counted, converged)) => {
            let refs: Vec<&Trace> = traces.iter().collect();
            let (entry, feasible_from, worst) = scan_traces(network, &refs, reference_h, spec.band);
            let h = eval_h(network, &rates);
            result.counted_iterations = Some(counted);
            result.band_entry = entry;
            result.converged = converged;
            result.final_h = Some(h);
            result.relative_error = Some((h - reference_h).abs() / reference_h.abs());
            result.worst_min_slack = Some(worst);
            result.feasible_from = feasible_from;
            for t in &traces {
                let m = MessageMetrics::from_trace(network, t);
                result.messages += m.totals.pushes + m.totals.feedbacks;
                result.primal_steps += if method == Method::Newton {
                    t.primal_steps()
                } else {
                    0
                };
                result.consensus_rounds += m.totals.consensus_rounds;
                result.summation_rounds += m.totals.summation_rounds;
            }
            MethodRun { result, traces }
        }
        Err(e) => {
            result.error = Some(e.to_string());
            MethodRun {
                result,
                traces: Vec::new(),
            }
        }
    }
}

fn write_trial_traces(dir: &Path, trial: usize, method: Method, traces: &[Trace]) -> Result<()> {
    for (pass, t) in traces.iter().enumerate() {
        let name = if traces.len() > 1 {
            format!("trial{trial:03}_{}_pass{}.csv", method.as_str(), pass + 1)
        } else {
            format!("trial{trial:03}_{}.csv", method.as_str())
        };
        t.write_csv(std::fs::File::create(dir.join(name))?)?;
    }
    Ok(())
}

fn summarize(method: Method, trials: &[TrialResult]) -> MethodSummary {
    let mine: Vec<&TrialResult> = trials.iter().filter(|t| t.method == method).collect();
    let ok: Vec<&TrialResult> = mine.iter().copied().filter(|t| t.converged).collect();
    let mut counts: Vec<usize> = ok.iter().filter_map(|t| t.counted_iterations).collect();
    let mean_of = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let log10_counts = counts.iter().map(|&c| (c.max(1) as f64).log10()).collect();
    let as_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mean = mean_of(&as_f);
    let entries: Vec<f64> = ok
        .iter()
        .filter_map(|t| t.band_entry.map(|e| e as f64))
        .collect();
    let rel: Vec<f64> = ok.iter().filter_map(|t| t.relative_error).collect();
    counts.sort_unstable();
    let median = match counts.len() {
        0 => None,
        n if n % 2 == 1 => Some(counts[n / 2] as f64),
        n => Some(0.5 * (counts[n / 2 - 1] + counts[n / 2]) as f64),
    };
    MethodSummary {
        method,
        runs: mine.len(),
        failures: mine.len() - ok.len(),
        mean,
        median,
        min: counts.first().copied(),
        max: counts.last().copied(),
        mean_band_entry: mean_of(&entries),
        mean_relative_error: mean_of(&rel),
        log10_counts,
    }
}

/// Runs every trial and method in parallel. Per-trial failures are recorded,
/// not propagated. Output is identical for identical specs.
pub fn run_comparison(spec: &ExperimentSpec) -> Result<ComparisonSummary> {
    spec.validate()?;
    let out_dir = spec.resolved_output_dir();
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let gen = spec.gen_spec();
    let per_trial: Vec<Result<Vec<TrialResult>>> = (0..spec.trials)
        .into_par_iter()
        .map(|trial| {
            let network = random_network_with(&gen, spec.trial_seed(trial))?;
            let reference = reference_optimum(&network);
            let mut rows = Vec::new();
            for &method in &spec.methods {
                let run = match &reference {
                    Ok(r) => run_method(spec, &network, trial, method, r.h),
                    Err(e) => MethodRun {
                        result: TrialResult {
                            error: Some(format!("reference solve failed: {e}")),
                            ..failed_row(spec, trial, method)
                        },
                        traces: Vec::new(),
                    },
                };
                if spec.write_traces {
                    if let Some(dir) = &out_dir {
                        write_trial_traces(dir, trial, method, &run.traces)?;
                    }
                }
                rows.push(run.result);
            }
            Ok(rows)
        })
        .collect();
    let mut trials = Vec::new();
    for rows in per_trial {
        trials.extend(rows?);
    }
    let methods = spec
        .methods
        .iter()
        .map(|&m| summarize(m, &trials))
        .collect();
    let summary = ComparisonSummary {
        spec: spec.clone(),
        methods,
        trials,
    };
    if let Some(dir) = &out_dir {
        std::fs::write(dir.join("summary.json"), summary.to_json_string())?;
    }
    Ok(summary)
}

fn failed_row(spec: &ExperimentSpec, trial: usize, method: Method) -> TrialResult {
    TrialResult {
        trial,
        seed: spec.trial_seed(trial),
        method,
        counted_iterations: None,
        band_entry: None,
        converged: false,
        final_h: None,
        reference_h: f64::NAN,
        relative_error: None,
        worst_min_slack: None,
        feasible_from: None,
        primal_steps: 0,
        consensus_rounds: 0,
        summation_rounds: 0,
        messages: 0,
        error: None,
    }
}

/// Outcome of the stepsize grid search for one baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningRow {
    pub stepsize: f64,
    pub failures: usize,
    pub mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningResult {
    pub method: Method,
    pub chosen: Option<f64>,
    pub rows: Vec<TuningRow>,
}

/// Coarse grid used for the constant baseline stepsizes.
pub const STEPSIZE_GRID: [f64; 9] = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0];

/// Picks, per baseline, the grid stepsize with the smallest mean counted
/// iterations among those that reach the band on every tuning network.
pub fn tune_stepsizes(
    spec: &ExperimentSpec,
    tuning_seeds: &[u64],
    grid: &[f64],
) -> Result<Vec<TuningResult>> {
    let gen = spec.gen_spec();
    let nets: Vec<(Network, f64)> = tuning_seeds
        .par_iter()
        .map(|&s| {
            let n = random_network_with(&gen, s)?;
            let h = reference_optimum(&n)?.h;
            Ok((n, h))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for method in [Method::Subgradient, Method::DiagonalScaled] {
        let scaling = method.scaling().expect("baseline");
        let rows: Vec<TuningRow> = grid
            .par_iter()
            .map(|&a| {
                let runs: Vec<Option<usize>> = nets
                    .iter()
                    .map(|(n, h)| {
                        dual_price_method(n, &spec.first_order_config(a, *h), scaling)
                            .ok()
                            .filter(|r| r.converged())
                            .map(|r| r.trace.counted_iterations())
                    })
                    .collect();
                let ok: Vec<usize> = runs.iter().flatten().copied().collect();
                TuningRow {
                    stepsize: a,
                    failures: runs.len() - ok.len(),
                    mean: (!ok.is_empty())
                        .then(|| ok.iter().sum::<usize>() as f64 / ok.len() as f64),
                }
            })
            .collect();
        let chosen = rows
            .iter()
            .filter(|r| r.failures == 0)
            .min_by(|a, b| a.mean.partial_cmp(&b.mean).expect("finite means"))
            .map(|r| r.stepsize);
        out.push(TuningResult {
            method,
            chosen,
            rows,
        });
    }
    Ok(out)
}
