use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use netnewton::auxgraph::build_auxiliary_graph;
use netnewton::experiment::{run_comparison, tune_stepsizes, ExperimentSpec, STEPSIZE_GRID};
use netnewton::gen::random_network;
use netnewton::model::{eval_h, feasible_init, BarrierProblem, Network};
use netnewton::solver::{default_b, two_pass_solve, DualMode, Solver, SolverConfig};
use netnewton::spectral::{spectral_diagnostics, MAX_CUT_LIMIT};
use netnewton::trace::Trace;
use netnewton::Result;

#[derive(Parser)]
#[command(
    name = "netnewton",
    version,
    about = "Distributed inexact Newton solver for network utility maximization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one network and optionally write its trace.
    Solve(SolveArgs),
    /// Run a multi-trial comparison described by a TOML spec.
    Compare {
        spec: PathBuf,
        /// Output directory; overrides the spec and NETNEWTON_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid-search the baseline stepsizes on seeds disjoint from the trials.
    Tune {
        spec: PathBuf,
        #[arg(long, default_value_t = 1000)]
        first_seed: u64,
        #[arg(long, default_value_t = 20)]
        count: u64,
    },
    /// Dual-graph spectral report at the initial point.
    Spectra {
        network: PathBuf,
        #[arg(long, default_value_t = MAX_CUT_LIMIT)]
        max_cut_limit: usize,
    },
    /// Auxiliary graph used by the distributed summation, as JSON.
    AuxDump {
        network: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a random network file.
    Gen {
        #[arg(long)]
        links: usize,
        #[arg(long)]
        sources: usize,
        #[arg(long)]
        prob: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(clap::Args)]
struct SolveArgs {
    network: PathBuf,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "V")]
    v: Option<f64>,
    #[arg(long)]
    b: Option<f64>,
    /// Stage-one dual budget; derived from the spectral bound when omitted.
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use dense dual solves instead of the distributed iteration.
    #[arg(long)]
    exact_dual: bool,
    #[arg(long)]
    two_pass: bool,
    /// Trace CSV path; with --two-pass the passes get `.pass1`/`.pass2` suffixes.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Full JSON trace path, including certificates.
    #[arg(long)]
    json: Option<PathBuf>,
}

impl SolveArgs {
    fn config(&self) -> Result<SolverConfig> {
        let mut c = SolverConfig::default();
        if let Some(v) = self.v {
            c.v = v;
            if self.b.is_none() {
                c.b = default_b(v);
            }
        }
        c.mu = self.mu.unwrap_or(c.mu);
        c.p = self.p.unwrap_or(c.p);
        c.epsilon = self.epsilon.unwrap_or(c.epsilon);
        c.b = self.b.unwrap_or(c.b);
        c.stage_one_iters = self.t.or(c.stage_one_iters);
        c.seed = self.seed.unwrap_or(c.seed);
        if self.exact_dual {
            c.dual_mode = DualMode::Exact;
        }
        c.validate()?;
        Ok(c)
    }
}

fn suffixed(path: &std::path::Path, tag: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{tag}"),
    };
    path.with_file_name(name)
}

fn write_traces(args: &SolveArgs, traces: &[&Trace]) -> Result<()> {
    let paths = |base: &PathBuf| -> Vec<PathBuf> {
        if traces.len() == 1 {
            vec![base.clone()]
        } else {
            (1..=traces.len())
                .map(|i| suffixed(base, &format!("pass{i}")))
                .collect()
        }
    };
    if let Some(base) = &args.trace {
        for (t, p) in traces.iter().zip(paths(base)) {
            t.write_csv(std::fs::File::create(p)?)?;
        }
    }
    if let Some(base) = &args.json {
        for (t, p) in traces.iter().zip(paths(base)) {
            std::fs::write(p, t.to_json_string())?;
        }
    }
    Ok(())
}

fn report(label: &str, t: &Trace) {
    let last = t.records.last();
    println!(
        "{label}: termination={:?} primal_steps={} dual_iters={} counted={} f={} h={}",
        t.termination,
        t.primal_steps(),
        t.total_dual_iters(),
        t.counted_iterations(),
        last.map_or(f64::NAN, |r| r.f),
        last.map_or(f64::NAN, |r| r.h),
    );
}

fn solve(args: &SolveArgs) -> Result<()> {
    let config = args.config()?;
    let network = Network::load(&args.network)?;
    if args.two_pass {
        let tp = two_pass_solve(&network, &config)?;
        report("pass 1", &tp.first);
        report("pass 2", &tp.second);
        println!(
            "scale={} shift={} counted_total={} h={}",
            tp.scale,
            tp.shift,
            tp.counted_iterations(),
            eval_h(&network, tp.x.rates())
        );
        println!("rates={:?}", tp.x.rates());
        write_traces(args, &[&tp.first, &tp.second])
    } else {
        let problem = BarrierProblem::new(&network, config.mu, 1.0)?;
        let (x, trace) = Solver::new(&network)?.solve(&problem, &config)?;
        report("solve", &trace);
        println!("rates={:?}", x.rates());
        write_traces(args, &[&trace])
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(args) => solve(&args),
        Command::Compare { spec, out } => {
            let mut spec = ExperimentSpec::load(&spec)?;
            if out.is_some() {
                spec.output_dir = out;
            }
            let summary = run_comparison(&spec)?;
            print!("{}", summary.table());
            for t in summary.trials.iter().filter(|t| t.error.is_some()) {
                eprintln!(
                    "trial {} {}: {}",
                    t.trial,
                    t.method.as_str(),
                    t.error.as_deref().unwrap_or("")
                );
            }
            if let Some(dir) = spec.resolved_output_dir() {
                println!("summary written to {}", dir.join("summary.json").display());
            }
            Ok(())
        }
        Command::Tune {
            spec,
            first_seed,
            count,
        } => {
            let spec = ExperimentSpec::load(&spec)?;
            let seeds: Vec<u64> = (first_seed..first_seed + count).collect();
            for r in tune_stepsizes(&spec, &seeds, &STEPSIZE_GRID)? {
                for row in &r.rows {
                    println!(
                        "{} stepsize={:e} failures={} mean={}",
                        r.method.as_str(),
                        row.stepsize,
                        row.failures,
                        row.mean.map_or("-".into(), |m| format!("{m:.1}"))
                    );
                }
                println!("{} chosen={:?}", r.method.as_str(), r.chosen);
            }
            Ok(())
        }
        Command::Spectra {
            network,
            max_cut_limit,
        } => {
            let network = Network::load(&network)?;
            let problem = BarrierProblem::new(&network, 1.0, 1.0)?;
            let hess = problem.hessian_diag(&feasible_init(&network).values)?;
            let r = spectral_diagnostics(&network, &hess, max_cut_limit)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&r).expect("report serializes")
            );
            Ok(())
        }
        Command::AuxDump { network, out } => {
            let network = Network::load(&network)?;
            let aux = build_auxiliary_graph(&network)?;
            let json = serde_json::to_string_pretty(&aux).expect("graph serializes");
            match out {
                Some(p) => std::fs::write(p, json)?,
                None => println!("{json}"),
            }
            Ok(())
        }
        Command::Gen {
            links,
            sources,
            prob,
            seed,
            out,
        } => {
            let n = random_network(links, sources, prob, seed)?;
            match out {
                Some(p) => n.save(p)?,
                None => print!("{}", n.to_toml_string()),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
