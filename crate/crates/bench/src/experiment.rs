use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cvtrack::vropt::{run, MethodFamily, MethodPlan, ReferenceSolution, RunConfig, RunError, Trace};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::output::{atomic_write, merged_csv, write_trace};
use crate::problem::{cached_reference, load_problem, Problem};

/// Epoch cap for budget-limited runs; the datapass budget stops them first.
const BUDGET_EPOCH_CAP: usize = 1_000_000;

/// A loaded problem together with its reference optimum.
pub struct Session {
    pub cfg: ExperimentConfig,
    pub problem: Problem,
    pub reference: ReferenceSolution,
}

impl Session {
    pub fn open(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let problem = load_problem(cfg)?;
        std::fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
        let reference = cached_reference(&cfg.out, &problem, cfg.reference_tol)?;
        Ok(Session { cfg: cfg.clone(), problem, reference })
    }

    fn run_config(&self, gamma: f64, budget: Option<f64>) -> RunConfig {
        let inner = self.cfg.inner.unwrap_or(self.problem.obj.n());
        let epochs = if budget.is_some() { BUDGET_EPOCH_CAP } else { self.cfg.epochs };
        let mut rc = RunConfig::new(gamma, inner, epochs, self.cfg.seed);
        rc.max_datapasses = budget;
        rc
    }

    /// One run from `θ = 0`; divergence is reported in the result, not as an error.
    pub fn run_one(&self, plan: &MethodPlan, gamma: f64, exponent: Option<i32>, budget: Option<f64>) -> Result<CellRun> {
        let rc = self.run_config(gamma, budget);
        let theta0 = DVector::zeros(self.problem.obj.d());
        let (trace, diverged, fallbacks) = match run(plan, &self.problem.obj, &rc, &theta0, self.reference.f_star) {
            Ok(out) => (out.trace, None, out.fallbacks),
            Err(RunError::Diverged { epoch, reason, partial }) => {
                (partial.trace, Some(format!("epoch {epoch}: {reason}")), partial.fallbacks)
            }
            Err(RunError::Failed(e)) => return Err(e).with_context(|| format!("{} at gamma {gamma:e}", plan.name())),
        };
        Ok(CellRun { method: plan.name().to_owned(), exponent, gamma, trace, diverged, fallbacks, budget })
    }

    pub fn metadata(&self, cell: &CellRun, plan: &MethodPlan) -> Vec<(&'static str, String)> {
        let mut meta = vec![
            ("method", cell.method.clone()),
            ("dataset", self.problem.label.clone()),
            ("dataset_hash", self.problem.hash[..16].to_owned()),
            ("link", format!("{:?}", self.problem.obj.link()).to_lowercase()),
            ("lambda", format!("{:e}", self.problem.obj.lambda())),
            ("gamma", format!("{:e}", cell.gamma)),
            ("gamma_exp", cell.exponent.map_or("none".into(), |a| a.to_string())),
            ("inner", self.cfg.inner.unwrap_or(self.problem.obj.n()).to_string()),
            ("seed", self.cfg.seed.to_string()),
            ("f_star", format!("{:e}", self.reference.f_star)),
            ("status", if cell.diverged.is_some() { "diverged".into() } else { "ok".into() }),
        ];
        if plan.is_low_rank() {
            meta.push(("rank", plan.rank.to_string()));
        }
        if plan.family == MethodFamily::SecantDiag {
            meta.push(("sigma2", format!("{:e}", plan.sigma_sq)));
        }
        if let Some(b) = cell.budget {
            meta.push(("budget_passes", format!("{b} (harness choice)")));
        }
        if let Some(r) = &cell.diverged {
            meta.push(("reason", r.clone()));
        }
        if !cell.fallbacks.is_empty() {
            let epochs: Vec<String> = cell.fallbacks.iter().map(|(e, _)| e.to_string()).collect();
            meta.push(("fallback_epochs", epochs.join(" ")));
        }
        meta
    }
}

#[derive(Debug, Clone)]
pub struct CellRun {
    pub method: String,
    pub exponent: Option<i32>,
    pub gamma: f64,
    pub trace: Trace,
    pub diverged: Option<String>,
    pub fallbacks: Vec<(usize, String)>,
    pub budget: Option<f64>,
}

impl CellRun {
    /// Suboptimality within the budget; infinite after divergence.
    pub fn score(&self) -> f64 {
        if self.diverged.is_some() {
            return f64::INFINITY;
        }
        match self.budget {
            Some(b) => self.trace.subopt_at(b),
            None => self.trace.final_subopt(),
        }
    }
}

/// Single method, single stepsize; writes `trace-<method>.csv`.
pub fn cmd_run(session: &Session) -> Result<(PathBuf, CellRun)> {
    let plans = session.cfg.plans()?;
    if plans.len() != 1 {
        bail!("run takes exactly one method, got {}", plans.len());
    }
    let (gamma, exponent) = match (session.cfg.gamma, session.cfg.gamma_exps.as_slice()) {
        (Some(g), _) => (g, None),
        (None, [a]) => (session.problem.gamma(*a), Some(*a)),
        _ => bail!("run needs one stepsize: pass --gamma-exp INT or --gamma REAL"),
    };
    let cell = session.run_one(&plans[0], gamma, exponent, None)?;
    let path = session.cfg.out.join(format!("trace-{}.csv", cell.method));
    write_trace(&path, &cell.trace, &session.metadata(&cell, &plans[0]))?;
    Ok((path, cell))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub method: String,
    pub exponent: i32,
    pub gamma: f64,
    pub final_subopt: f64,
    pub diverged: bool,
}

pub const GRID_HEADER: &str = "method,exponent,gamma,final_subopt,diverged,best";

/// Argmin of final suboptimality over non-diverged cells of `method`, ties
/// going to the larger exponent.
pub fn best_exponent(cells: &[GridCell], method: &str) -> Option<i32> {
    cells
        .iter()
        .filter(|c| c.method == method && !c.diverged && c.final_subopt.is_finite())
        .min_by(|a, b| a.final_subopt.total_cmp(&b.final_subopt).then(b.exponent.cmp(&a.exponent)))
        .map(|c| c.exponent)
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub cells: Vec<GridCell>,
    pub methods: Vec<String>,
    pub budget: f64,
    /// Full runs behind each cell, same order as `cells`.
    pub runs: Vec<CellRun>,
}

impl GridResult {
    pub fn best(&self, method: &str) -> Option<i32> {
        best_exponent(&self.cells, method)
    }

    pub fn best_run(&self, method: &str) -> Option<&CellRun> {
        let a = self.best(method)?;
        self.runs.iter().find(|r| r.method == method && r.exponent == Some(a))
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{GRID_HEADER}\n");
        for c in &self.cells {
            let best = self.best(&c.method) == Some(c.exponent);
            let _ = writeln!(
                s,
                "{},{},{:.16e},{:.16e},{},{}",
                c.method, c.exponent, c.gamma, c.final_subopt, c.diverged, best
            );
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut exps: Vec<i32> = self.cells.iter().map(|c| c.exponent).collect();
        exps.sort_unstable_by(|a, b| b.cmp(a));
        exps.dedup();
        let mut s = format!("final relative suboptimality after {} datapasses (* = best, x = diverged)\n", self.budget);
        let _ = write!(s, "{:>6}", "a");
        for m in &self.methods {
            let _ = write!(s, " {m:>11}");
        }
        s.push('\n');
        for a in exps {
            let _ = write!(s, "{a:>6}");
            for m in &self.methods {
                let cell = self.cells.iter().find(|c| &c.method == m && c.exponent == a);
                let text = match cell {
                    None => "-".to_owned(),
                    Some(c) if c.diverged => "x".to_owned(),
                    Some(c) => {
                        let mark = if self.best(m) == Some(a) { "*" } else { "" };
                        format!("{mark}{:.2e}", c.final_subopt)
                    }
                };
                let _ = write!(s, " {text:>11}");
            }
            s.push('\n');
        }
        let _ = write!(s, "{:>6}", "best");
        for m in &self.methods {
            let b = self.best(m).map_or("none".to_owned(), |a| format!("2^{a}"));
            let _ = write!(s, " {b:>11}");
        }
        s.push('\n');
        s
    }
}

pub fn parse_grid_csv(text: &str) -> Result<Vec<GridCell>> {
    let mut lines = text.lines();
    anyhow::ensure!(lines.next() == Some(GRID_HEADER), "missing grid header");
    lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            anyhow::ensure!(f.len() == 6, "malformed grid row `{l}`");
            Ok(GridCell {
                method: f[0].to_owned(),
                exponent: f[1].parse()?,
                gamma: f[2].parse()?,
                final_subopt: f[3].parse()?,
                diverged: f[4].parse()?,
            })
        })
        .collect()
}

/// Every method at every exponent under the datapass budget.
pub fn grid(session: &Session, plans: &[MethodPlan], exponents: &[i32]) -> Result<GridResult> {
    let budget = session.cfg.budget;
    let jobs: Vec<(&MethodPlan, i32)> = plans.iter().flat_map(|p| exponents.iter().map(move |&a| (p, a))).collect();
    let runs = jobs
        .par_iter()
        .map(|(p, a)| session.run_one(p, session.problem.gamma(*a), Some(*a), Some(budget)))
        .collect::<Result<Vec<_>>>()?;
    let cells = runs
        .iter()
        .map(|r| GridCell {
            method: r.method.clone(),
            exponent: r.exponent.unwrap_or_default(),
            gamma: r.gamma,
            final_subopt: r.score(),
            diverged: r.diverged.is_some(),
        })
        .collect();
    let methods = plans.iter().map(|p| p.name().to_owned()).collect();
    Ok(GridResult { cells, methods, budget, runs })
}

pub fn cmd_grid(session: &Session) -> Result<GridResult> {
    let g = grid(session, &session.cfg.plans()?, &session.cfg.gamma_exps)?;
    atomic_write(&session.cfg.out.join("grid.csv"), g.to_csv().as_bytes())?;
    Ok(g)
}

pub struct SuiteResult {
    pub grid: GridResult,
    /// Grid-best run per method; `None` when every stepsize diverged.
    pub best: Vec<(String, Option<CellRun>)>,
    pub merged_path: PathBuf,
}

/// Grid search, then one trace per method at its best stepsize plus a
/// merged long-format file.
pub fn cmd_suite(session: &Session) -> Result<SuiteResult> {
    let plans = session.cfg.plans()?;
    let g = grid(session, &plans, &session.cfg.gamma_exps)?;
    let out = &session.cfg.out;
    atomic_write(&out.join("grid.csv"), g.to_csv().as_bytes())?;
    let mut best = Vec::new();
    for p in &plans {
        let run = g.best_run(p.name()).cloned();
        if let Some(r) = &run {
            write_trace(&out.join(format!("suite-{}.csv", p.name())), &r.trace, &session.metadata(r, p))?;
        }
        best.push((p.name().to_owned(), run));
    }
    let merged = merged_csv(best.iter().filter_map(|(m, r)| r.as_ref().map(|r| (m.as_str(), &r.trace))));
    let merged_path = out.join("suite-merged.csv");
    atomic_write(&merged_path, merged.as_bytes())?;
    Ok(SuiteResult { grid: g, best, merged_path })
}

pub struct SweepResult {
    pub exponent: Option<i32>,
    pub gamma: f64,
    pub runs: Vec<(f64, CellRun)>,
}

impl SweepResult {
    /// `max / min` of the within-budget suboptimality across `σ²`.
    pub fn spread(&self) -> f64 {
        let scores: Vec<f64> = self.runs.iter().map(|(_, r)| r.score()).collect();
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        hi / lo
    }
}

/// The secant-diagonal method at one fixed stepsize across `σ²` values.
///
/// The stepsize is `--gamma`, a single `--gamma-exp`, or else the grid-best
/// exponent of the method at the configured `σ²`.
pub fn cmd_sigma_sweep(session: &Session) -> Result<SweepResult> {
    let cfg = &session.cfg;
    let base = MethodPlan::new(MethodFamily::SecantDiag).with_sigma_sq(cfg.sigma2);
    let (gamma, exponent) = match (cfg.gamma, cfg.gamma_exps.as_slice()) {
        (Some(g), _) => (g, None),
        (None, [a]) => (session.problem.gamma(*a), Some(*a)),
        (None, exps) => {
            let g = grid(session, std::slice::from_ref(&base), exps)?;
            atomic_write(&cfg.out.join("sigma-grid.csv"), g.to_csv().as_bytes())?;
            let a = g.best(base.name()).context("every stepsize diverged at the base sigma^2")?;
            (session.problem.gamma(a), Some(a))
        }
    };
    let runs = cfg
        .sigmas
        .par_iter()
        .map(|&s2| {
            let plan = base.with_sigma_sq(s2);
            session.run_one(&plan, gamma, exponent, Some(cfg.budget)).map(|r| (s2, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = String::from("sigma2,final_subopt,status\n");
    for (s2, r) in &runs {
        let plan = base.with_sigma_sq(*s2);
        write_trace(&sigma_trace_path(&cfg.out, *s2), &r.trace, &session.metadata(r, &plan))?;
        let status = if r.diverged.is_some() { "diverged" } else { "ok" };
        let _ = writeln!(summary, "{s2:e},{:.16e},{status}", r.score());
    }
    atomic_write(&cfg.out.join("sigma-summary.csv"), summary.as_bytes())?;
    Ok(SweepResult { exponent, gamma, runs })
}

pub fn sigma_trace_path(dir: &Path, sigma2: f64) -> PathBuf {
    dir.join(format!("sigma-{sigma2:e}.csv"))
}
