use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use cvtrack::glm::LinkKind;
use cvtrack_bench::config::{ExperimentConfig, LambdaRule, SynthSpec, SPARSE_EXPONENTS};
use cvtrack_bench::experiment::{cmd_grid, cmd_run, cmd_sigma_sweep, cmd_suite, Session};
use cvtrack_bench::problem::load_problem;
use cvtrack_bench::verify::{verify, Level, VerifyOptions};
use cvtrack_bench::{init_workers, WORKERS_ENV};

#[derive(Parser)]
#[command(name = "bench", version, about = "Variance-reduced GLM optimizer experiments")]
#[command(after_help = "Worker threads default to the core count; set CVTRACK_WORKERS to override.")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print dataset statistics as JSON.
    Stats(Common),
    /// One method at one stepsize; writes a trace CSV.
    Run(Common),
    /// Stepsize grid search per method.
    Grid(Common),
    /// Grid search, then per-method traces at the best stepsizes.
    Suite(Common),
    /// Secant-diagonal method across sigma^2 values at a fixed stepsize.
    SigmaSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sigma^2 values.
        #[arg(long, value_delimiter = ',')]
        sigmas: Vec<f64>,
    },
    /// Invariant and contraction self-checks; nonzero exit on failure.
    Verify {
        #[arg(long, value_enum, default_value = "fast")]
        level: Level,
        /// Corrupt each snapshot's mean term (the unbiasedness checks must fail).
        #[arg(long)]
        inject_fault: bool,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// LIBSVM data file.
    #[arg(long, conflicts_with = "synth")]
    data: Option<PathBuf>,
    /// Synthetic data as KIND,N,D,COND with KIND in {ridge, logistic}.
    #[arg(long)]
    synth: Option<SynthSpec>,
    /// Seeded row subsample size.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long)]
    link: Option<LinkKind>,
    /// `paper` (max ||x_i||^2 / 4N) or a number.
    #[arg(long)]
    lambda: Option<LambdaRule>,
    /// Method name(s), comma-separated or repeated.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// Stepsize exponent(s) a, with gamma = 2^a / L_max.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    gamma_exp: Vec<i32>,
    /// Use the sparse exponent list 10, 7, 4, 1, -2, -5, -7, -9.
    #[arg(long, conflicts_with = "gamma_exp")]
    sparse_grid: bool,
    /// Explicit stepsize (run and sigma-sweep only).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Inner steps per epoch (default N).
    #[arg(long)]
    inner: Option<usize>,
    /// Datapass budget for grid, suite and sigma-sweep runs.
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sequential reductions.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Gradient-norm tolerance of the reference solver.
    #[arg(long)]
    reference_tol: Option<f64>,
}

impl Common {
    fn resolve(self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        if self.data.is_some() {
            c.data = self.data;
            c.synth = None;
        }
        if self.synth.is_some() {
            c.synth = self.synth;
            c.data = None;
        }
        c.subsample = self.subsample.or(c.subsample);
        c.link = self.link.or(c.link);
        c.lambda = self.lambda.unwrap_or(c.lambda);
        if !self.method.is_empty() {
            c.methods = self.method;
        }
        if self.sparse_grid {
            c.gamma_exps = SPARSE_EXPONENTS.to_vec();
        } else if !self.gamma_exp.is_empty() {
            c.gamma_exps = self.gamma_exp;
        }
        c.gamma = self.gamma.or(c.gamma);
        c.epochs = self.epochs.unwrap_or(c.epochs);
        c.inner = self.inner.or(c.inner);
        c.budget = self.budget.unwrap_or(c.budget);
        c.rank = self.rank.unwrap_or(c.rank);
        c.sigma2 = self.sigma2.unwrap_or(c.sigma2);
        c.seed = self.seed.unwrap_or(c.seed);
        c.deterministic |= self.deterministic;
        c.out = self.out.unwrap_or(c.out);
        c.reference_tol = self.reference_tol.unwrap_or(c.reference_tol);
        Ok(c)
    }
}

fn stats(cfg: &ExperimentConfig) -> Result<()> {
    let p = load_problem(cfg)?;
    let v = serde_json::json!({
        "dataset": p.label,
        "hash": p.hash,
        "link": p.obj.link(),
        "lambda": p.obj.lambda(),
        "stats": p.stats,
    });
    println!("{}", serde_json::to_string_pretty(&v)?);
    Ok(())
}

fn execute(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Stats(c) => {
            let cfg = c.resolve()?;
            stats(&cfg)?;
        }
        Cmd::Run(c) => {
            let s = Session::open(&c.resolve()?)?;
            let (path, cell) = cmd_run(&s)?;
            let status = cell.diverged.as_deref().map_or("ok".to_owned(), |r| format!("diverged ({r})"));
            let last = cell.trace.last().map_or(1.0, |r| r.subopt);
            println!("{}: gamma {:.4e}, {} epochs, final subopt {last:.3e}, {status}", cell.method, cell.gamma, cell.trace.len() - 1);
            println!("wrote {}", path.display());
        }
        Cmd::Grid(c) => {
            let s = Session::open(&c.resolve()?)?;
            let g = cmd_grid(&s)?;
            print!("{}", g.to_table());
            println!("wrote {}", s.cfg.out.join("grid.csv").display());
        }
        Cmd::Suite(c) => {
            let s = Session::open(&c.resolve()?)?;
            let r = cmd_suite(&s)?;
            print!("{}", r.grid.to_table());
            for (m, run) in &r.best {
                match run {
                    Some(run) => {
                        let reach = run.trace.passes_to_reach(1e-4).map_or("not reached".into(), |p| format!("{p:.1} passes"));
                        println!("{m}: 2^{} / L_max, 1e-4 subopt: {reach}", run.exponent.unwrap_or_default());
                    }
                    None => println!("{m}: every stepsize diverged"),
                }
            }
            println!("wrote {}", r.merged_path.display());
        }
        Cmd::SigmaSweep { common, sigmas } => {
            let mut cfg = common.resolve()?;
            if !sigmas.is_empty() {
                cfg.sigmas = sigmas;
            }
            let s = Session::open(&cfg)?;
            let r = cmd_sigma_sweep(&s)?;
            println!("gamma {:.4e} (exponent {:?})", r.gamma, r.exponent);
            for (s2, run) in &r.runs {
                let status = if run.diverged.is_some() { "diverged" } else { "ok" };
                println!("sigma2 {s2:>8.1e}: subopt after {} passes {:.3e} {status}", cfg.budget, run.score());
            }
            println!("max/min spread {:.3e}", r.spread());
        }
        Cmd::Verify { level, inject_fault } => {
            let started = std::time::Instant::now();
            let report = verify(VerifyOptions { level, inject_fault })?;
            print!("{}", report.to_table());
            println!("{:.1} s", started.elapsed().as_secs_f64());
            return Ok(report.all_passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_workers() {
        eprintln!("error: {e:#} ({WORKERS_ENV})");
        return ExitCode::from(2);
    }
    match execute(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
