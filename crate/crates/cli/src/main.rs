//! `decopt` command line: generate problem/network files, run a single
//! experiment to a CSV trace, or sweep every applicable algorithm over one
//! shared instance.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 1 on runtime
//! failures.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use decopt_core::apm::ApmMode;
use decopt_core::apm_c::ApmcSchedule;
use decopt_core::experiment::{
    run_experiment, AlgorithmConfig, ExperimentConfig, GraphConfig, DEFAULT_MAX_RETRIES,
};
use decopt_core::io::{save_problem, save_weight_matrix};
use decopt_core::network::{Network, WeightMatrix};
use decopt_core::problems::{gen_hinge_svm, gen_least_squares, GenParams};
use decopt_core::trace::write_trace_csv;
use decopt_core::{Error, RunTrace};

#[derive(Parser)]
#[command(
    name = "decopt",
    version,
    about = "Decentralized penalty-method optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem instance plus gossip matrix and save them as JSON
    Gen(GenArgs),
    /// Run one experiment and write its trace as CSV
    Run(RunArgs),
    /// Run every algorithm applicable to one instance, one trace file each
    Compare(CompareArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Kind {
    /// Distributed least squares with a quadratic regularizer
    LeastSquares,
    /// Nonsmooth hinge-loss classification with a planted separable dataset
    HingeSvm,
}

impl Kind {
    fn key(self) -> &'static str {
        match self {
            Kind::LeastSquares => "least-squares",
            Kind::HingeSvm => "hinge-svm",
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Alg {
    /// Accelerated penalty method with inner consensus sweeps (smooth)
    ApmC,
    /// Accelerated penalty method with gradient sliding (nonsmooth-capable)
    Apm,
    /// Gradient-tracking baseline with a correction term
    Extra,
    /// Nesterov gradient-tracking baseline
    Dngd,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Schedule {
    /// Strongly convex schedule of apm-c (constant momentum); needs mu > 0
    Sc,
    /// General convex schedule of apm-c
    Nsc,
    /// Fixed-horizon schedule of apm
    Thm3,
    /// Horizon-free schedule of apm
    Cor1,
}

/// Flags shared by every subcommand that names an instance.
#[derive(Args)]
struct ProblemArgs {
    /// Problem family
    #[arg(long, value_enum, default_value_t = Kind::LeastSquares)]
    kind: Kind,
    /// Number of agents
    #[arg(long, default_value_t = 20)]
    m: usize,
    /// Total sample count, split evenly across agents
    #[arg(long, default_value_t = 200)]
    n_samples: usize,
    /// Decision-variable dimension
    #[arg(long, default_value_t = 30)]
    dim: usize,
    /// Regularizer weight; defaults to 1e-2 for least-squares and must be
    /// omitted (or 0) for hinge-svm, which has no quadratic term
    #[arg(long)]
    mu: Option<f64>,
    /// Edge probability of the random graph
    #[arg(long, default_value_t = 0.5)]
    p: f64,
    /// Seed for data and graph generation
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Separate seed for the graph; defaults to --seed
    #[arg(long)]
    graph_seed: Option<u64>,
}

impl ProblemArgs {
    fn mu(&self) -> Result<f64, Error> {
        match self.kind {
            Kind::LeastSquares => Ok(self.mu.unwrap_or(1e-2)),
            Kind::HingeSvm => match self.mu {
                None => Ok(0.0),
                Some(v) if v == 0.0 => Ok(0.0),
                Some(v) => Err(Error::InvalidConfig {
                    field: "problem.mu",
                    message: format!("hinge-svm takes no quadratic regularizer, got mu = {v}"),
                }),
            },
        }
    }

    fn gen_params(&self) -> Result<GenParams, Error> {
        Ok(GenParams {
            kind: self.key().into(),
            n_samples: self.n_samples,
            dim: self.dim,
            agents: self.m,
            mu: self.mu()?,
            seed: self.seed,
        })
    }

    fn key(&self) -> &'static str {
        self.kind.key()
    }

    fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            p: self.p,
            seed: self.graph_seed.unwrap_or(self.seed),
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Directory that receives problem.json and network.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Algorithm to run
    #[arg(long, value_enum)]
    alg: Alg,
    /// Parameter schedule; sc|nsc belong to apm-c, thm3|cor1 to apm.
    /// Defaults to sc/nsc by regularizer for apm-c and thm3 for apm
    #[arg(long, value_enum)]
    schedule: Option<Schedule>,
    /// Initial penalty weight of the penalty methods
    #[arg(long)]
    beta0: Option<f64>,
    /// Number of outer iterations
    #[arg(long = "K", alias = "k", default_value_t = 300)]
    horizon: usize,
    /// Record metrics every j-th outer iteration
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Stepsize of the gradient-tracking baselines
    #[arg(long)]
    stepsize: Option<f64>,
    /// Divisor in the tuned inner-sweep count of apm-c
    #[arg(long)]
    inner_divisor: Option<f64>,
    /// Use the theoretical inner-sweep counts of apm-c instead of the
    /// tuned rule
    #[arg(long)]
    theory: bool,
    /// Scale on the sliding stepsize of apm
    #[arg(long)]
    eta_scale: Option<f64>,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Restrict the sweep to these algorithms (repeatable); default is
    /// every algorithm applicable to the instance
    #[arg(long = "alg", value_enum)]
    algs: Vec<Alg>,
    /// Initial penalty weight of the penalty methods; baselines ignore it
    #[arg(long)]
    beta0: Option<f64>,
    /// Number of outer iterations
    #[arg(long = "K", alias = "k", default_value_t = 300)]
    horizon: usize,
    /// Record metrics every j-th outer iteration
    #[arg(long, default_value_t = 1)]
    record_every: usize,
    /// Directory that receives one <algorithm>.csv per run
    #[arg(long)]
    out: PathBuf,
}

fn reject_flag(given: bool, field: &'static str, alg: &str) -> Result<(), Error> {
    if given {
        return Err(Error::InvalidConfig {
            field,
            message: format!("not used by {alg}"),
        });
    }
    Ok(())
}

fn algorithm_config(args: &RunArgs) -> Result<AlgorithmConfig, Error> {
    match args.alg {
        Alg::ApmC => {
            reject_flag(args.stepsize.is_some(), "algorithm.stepsize", "apm-c")?;
            reject_flag(args.eta_scale.is_some(), "algorithm.eta_scale", "apm-c")?;
            let schedule = match args.schedule {
                None => {
                    if args.problem.mu()? > 0.0 {
                        ApmcSchedule::StronglyConvex
                    } else {
                        ApmcSchedule::Convex
                    }
                }
                Some(Schedule::Sc) => ApmcSchedule::StronglyConvex,
                Some(Schedule::Nsc) => ApmcSchedule::Convex,
                Some(_) => {
                    return Err(Error::InvalidConfig {
                        field: "schedule",
                        message: "apm-c takes sc or nsc".into(),
                    });
                }
            };
            Ok(AlgorithmConfig::ApmC {
                schedule,
                beta0: args.beta0,
                inner_divisor: args.inner_divisor,
                theory_mode: args.theory,
            })
        }
        Alg::Apm => {
            reject_flag(args.stepsize.is_some(), "algorithm.stepsize", "apm")?;
            reject_flag(args.inner_divisor.is_some(), "algorithm.inner_divisor", "apm")?;
            reject_flag(args.theory, "algorithm.theory_mode", "apm")?;
            let schedule = match args.schedule {
                None | Some(Schedule::Thm3) => ApmMode::FixedHorizon,
                Some(Schedule::Cor1) => ApmMode::Adaptive,
                Some(_) => {
                    return Err(Error::InvalidConfig {
                        field: "schedule",
                        message: "apm takes thm3 or cor1".into(),
                    });
                }
            };
            Ok(AlgorithmConfig::Apm {
                schedule,
                beta0: args.beta0,
                eta_scale: args.eta_scale,
            })
        }
        Alg::Extra | Alg::Dngd => {
            let name = if args.alg == Alg::Extra { "extra" } else { "dngd" };
            reject_flag(args.schedule.is_some(), "schedule", name)?;
            reject_flag(args.beta0.is_some(), "algorithm.beta0", name)?;
            reject_flag(args.inner_divisor.is_some(), "algorithm.inner_divisor", name)?;
            reject_flag(args.theory, "algorithm.theory_mode", name)?;
            reject_flag(args.eta_scale.is_some(), "algorithm.eta_scale", name)?;
            if args.alg == Alg::Extra {
                Ok(AlgorithmConfig::Extra {
                    stepsize: args.stepsize,
                })
            } else {
                Ok(AlgorithmConfig::Dngd {
                    stepsize: args.stepsize,
                })
            }
        }
    }
}

fn io_error(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn summarize(label: &str, trace: &RunTrace, path: &std::path::Path) {
    match trace.rows.last() {
        Some(row) => println!(
            "{label}: k={} gap={:.3e} violation={:.3e} grads={} subgrads={} comms={} -> {}",
            row.k,
            row.obj_gap,
            row.consensus_violation,
            row.grad_evals,
            row.subgrad_evals,
            row.comms,
            path.display()
        ),
        None => println!("{label}: no recorded rows -> {}", path.display()),
    }
}

fn cmd_gen(args: &GenArgs) -> Result<(), Error> {
    let gp = args.problem.gen_params()?;
    let problem = match args.problem.kind {
        Kind::LeastSquares => gen_least_squares(gp.n_samples, gp.dim, gp.agents, gp.mu, gp.seed)?,
        Kind::HingeSvm => gen_hinge_svm(gp.n_samples, gp.dim, gp.agents, gp.seed)?,
    };
    let graph = args.problem.graph_config();
    let net = Network::erdos_renyi(gp.agents, graph.p, graph.seed, graph.max_retries)?;
    let w = WeightMatrix::lazy_metropolis(&net)?;
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;
    let problem_path = args.out.join("problem.json");
    let network_path = args.out.join("network.json");
    save_problem(&problem, &problem_path)?;
    save_weight_matrix(&w, &network_path)?;
    println!(
        "problem: {} agents={} dim={} -> {}",
        gp.kind,
        gp.agents,
        gp.dim,
        problem_path.display()
    );
    println!(
        "network: edges={} gap={:.4} -> {}",
        net.edges().len(),
        w.gap(),
        network_path.display()
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    let config = ExperimentConfig {
        problem: args.problem.gen_params()?,
        graph: args.problem.graph_config(),
        algorithm: algorithm_config(args)?,
        horizon: args.horizon,
        record_every: args.record_every,
    };
    let trace = run_experiment(&config)?;
    write_trace_csv(&trace, &args.out)?;
    summarize(config.algorithm.label(), &trace, &args.out);
    Ok(())
}

/// Algorithms applicable to the instance, with the trace-file stem each
/// run writes under the output directory.
fn sweep_set(args: &CompareArgs) -> Result<Vec<(&'static str, AlgorithmConfig)>, Error> {
    let beta0 = args.beta0;
    let full: Vec<(&'static str, Alg, AlgorithmConfig)> = match args.problem.kind {
        Kind::LeastSquares => {
            let schedule = if args.problem.mu()? > 0.0 {
                ApmcSchedule::StronglyConvex
            } else {
                ApmcSchedule::Convex
            };
            let mut set = vec![
                (
                    "apm-c",
                    Alg::ApmC,
                    AlgorithmConfig::ApmC {
                        schedule,
                        beta0,
                        inner_divisor: None,
                        theory_mode: false,
                    },
                ),
                ("extra", Alg::Extra, AlgorithmConfig::Extra { stepsize: None }),
            ];
            if args.problem.mu()? > 0.0 {
                set.push(("dngd", Alg::Dngd, AlgorithmConfig::Dngd { stepsize: None }));
            }
            set
        }
        Kind::HingeSvm => vec![
            (
                "apm-thm3",
                Alg::Apm,
                AlgorithmConfig::Apm {
                    schedule: ApmMode::FixedHorizon,
                    beta0,
                    eta_scale: None,
                },
            ),
            (
                "apm-cor1",
                Alg::Apm,
                AlgorithmConfig::Apm {
                    schedule: ApmMode::Adaptive,
                    beta0,
                    eta_scale: None,
                },
            ),
        ],
    };
    for want in &args.algs {
        if !full.iter().any(|(_, alg, _)| alg == want) {
            return Err(Error::InvalidConfig {
                field: "alg",
                message: format!(
                    "algorithm not applicable to a {} instance",
                    args.problem.key()
                ),
            });
        }
    }
    Ok(full
        .into_iter()
        .filter(|(_, alg, _)| args.algs.is_empty() || args.algs.contains(alg))
        .map(|(stem, _, cfg)| (stem, cfg))
        .collect())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), Error> {
    let runs = sweep_set(args)?;
    let mut configs = Vec::new();
    for (stem, algorithm) in runs {
        configs.push((
            stem,
            ExperimentConfig {
                problem: args.problem.gen_params()?,
                graph: args.problem.graph_config(),
                algorithm,
                horizon: args.horizon,
                record_every: args.record_every,
            },
        ));
    }
    fs::create_dir_all(&args.out).map_err(|e| io_error(&args.out, e))?;

    // independent runs; each worker is internally single-threaded
    let mut results: Vec<(&'static str, Result<RunTrace, Error>)> = Vec::new();
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(stem, config)| (*stem, scope.spawn(move || run_experiment(config))))
            .collect();
        for (stem, handle) in handles {
            let outcome = match handle.join() {
                Ok(r) => r,
                Err(payload) => std::panic::resume_unwind(payload),
            };
            results.push((stem, outcome));
        }
    });

    let mut first_err: Option<Error> = None;
    for (stem, outcome) in results {
        match outcome {
            Ok(trace) => {
                let path = args.out.join(format!("{stem}.csv"));
                write_trace_csv(&trace, &path)?;
                summarize(stem, &trace, &path);
            }
            Err(e) => {
                eprintln!("error: {stem}: {e}");
                // validation failures take precedence in the exit code
                if first_err.as_ref().map_or(true, |f| !f.is_validation()) {
                    first_err = Some(e);
                }
            }
        }
    }
    match first_err {
        None => Ok(()),
        Some(e) => Err(e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Gen(args) => cmd_gen(args),
        Command::Run(args) => cmd_run(args),
        Command::Compare(args) => cmd_compare(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
