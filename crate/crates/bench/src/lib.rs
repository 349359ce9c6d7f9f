//! Experiment harness: stepsize grids, method comparisons, σ² sweeps and
//! invariant checks on top of `cvtrack`.

pub mod config;
pub mod experiment;
pub mod output;
pub mod problem;
pub mod verify;

pub use config::{ExperimentConfig, LambdaRule, SynthSpec};
pub use experiment::{best_exponent, cmd_grid, cmd_run, cmd_sigma_sweep, cmd_suite, GridCell, GridResult, Session};
pub use problem::{load_problem, Problem};

/// Environment variable naming the worker-thread count.
pub const WORKERS_ENV: &str = "CVTRACK_WORKERS";

/// Sizes the global rayon pool from [`WORKERS_ENV`] if set.
pub fn init_workers() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| anyhow::anyhow!("{WORKERS_ENV} must be a positive integer, got `{v}`"))?;
        anyhow::ensure!(n > 0, "{WORKERS_ENV} must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
