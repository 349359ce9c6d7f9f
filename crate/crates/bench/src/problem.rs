use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use cvtrack::dataio::{dataset_stats, read_libsvm_file, synth_problem, Dataset, DatasetStats};
use cvtrack::glm::{GlmObjective, LinkKind};
use cvtrack::vropt::{reference_solution, ReferenceSolution, DEFAULT_PASS_CAP};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, LambdaRule};
use crate::output::atomic_write;

/// Seed used for synthetic generation and subsampling when none is implied
/// by the run seed.
const DATA_SEED: u64 = 7;

pub struct Problem {
    pub label: String,
    pub obj: GlmObjective,
    pub stats: DatasetStats,
    pub hash: String,
}

impl Problem {
    pub fn lmax(&self) -> f64 {
        self.stats.l_max
    }

    pub fn gamma(&self, exponent: i32) -> f64 {
        2f64.powi(exponent) / self.lmax()
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(Dataset, String)> {
    let (ds, label) = match (&cfg.data, &cfg.synth) {
        (Some(path), None) => {
            let ds = read_libsvm_file(path, None).with_context(|| format!("loading {}", path.display()))?;
            let label = path.file_name().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
            (ds, label)
        }
        (None, Some(s)) => {
            let ds = synth_problem(s.kind, s.n, s.d, s.condition, DATA_SEED)?;
            let kind = serde_json::to_value(s.kind)?.as_str().unwrap_or("synth").to_owned();
            (ds, format!("synth-{kind}-{}x{}-c{}", s.n, s.d, s.condition))
        }
        _ => anyhow::bail!("exactly one of --data or --synth is required"),
    };
    match cfg.subsample {
        Some(n) if n < ds.n_samples() => Ok((ds.subsample(n, DATA_SEED)?, format!("{label}-sub{n}"))),
        _ => Ok((ds, label)),
    }
}

pub fn load_problem(cfg: &ExperimentConfig) -> Result<Problem> {
    let (ds, label) = load_dataset(cfg)?;
    let link = cfg.link_kind();
    let ds = if link == LinkKind::Logistic { ds.to_binary_labels()? } else { ds };
    let lambda = match cfg.lambda {
        LambdaRule::Paper => dataset_stats(&ds, 0.0).default_lambda,
        LambdaRule::Value(v) => v,
    };
    let stats = dataset_stats(&ds, lambda);
    let hash = ds.content_hash();
    let obj = GlmObjective::new(Arc::new(ds), link, lambda)?.with_deterministic(cfg.deterministic);
    Ok(Problem { label, obj, stats, hash })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedReference {
    dataset_hash: String,
    link: LinkKind,
    lambda: f64,
    tol: f64,
    solution: ReferenceSolution,
}

pub fn reference_cache_path(dir: &Path, problem: &Problem, tol: f64) -> PathBuf {
    let link = match problem.obj.link() {
        LinkKind::Logistic => "logistic",
        LinkKind::Squared => "squared",
    };
    dir.join(format!(
        "reference-{}-{link}-{:016x}-{:016x}.json",
        &problem.hash[..16],
        problem.obj.lambda().to_bits(),
        tol.to_bits()
    ))
}

/// Reference solution, read from `dir` when a matching cache entry exists
/// and computed (then cached) otherwise.
pub fn cached_reference(dir: &Path, problem: &Problem, tol: f64) -> Result<ReferenceSolution> {
    let path = reference_cache_path(dir, problem, tol);
    if let Ok(text) = std::fs::read_to_string(&path) {
        if let Ok(c) = serde_json::from_str::<CachedReference>(&text) {
            if c.dataset_hash == problem.hash
                && c.link == problem.obj.link()
                && c.lambda.to_bits() == problem.obj.lambda().to_bits()
                && c.tol.to_bits() == tol.to_bits()
                && c.solution.theta_star.len() == problem.obj.d()
            {
                return Ok(c.solution);
            }
        }
    }
    let solution = reference_solution(&problem.obj, tol, DEFAULT_PASS_CAP)?;
    let entry = CachedReference {
        dataset_hash: problem.hash.clone(),
        link: problem.obj.link(),
        lambda: problem.obj.lambda(),
        tol,
        solution: solution.clone(),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    atomic_write(&path, serde_json::to_string(&entry)?.as_bytes())?;
    Ok(solution)
}
