use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use cvtrack::dataio::SynthKind;
use cvtrack::glm::LinkKind;
use cvtrack::vropt::{MethodPlan, DEFAULT_RANK, DEFAULT_SIGMA_SQ};
use serde::{Deserialize, Serialize};

/// Exponent grid `a = 10, 9, …, −9` for stepsizes `2^a / L_max`.
pub fn default_exponents() -> Vec<i32> {
    (-9..=10).rev().collect()
}

/// Sparse grid with irregular spacing, kept as an alternative to the dense one.
pub const SPARSE_EXPONENTS: [i32; 8] = [10, 7, 4, 1, -2, -5, -7, -9];

pub const DEFAULT_SIGMAS: [f64; 5] = [1e-3, 1e-2, 1e-1, 1.0, 10.0];

/// Datapass budget per grid cell; a harness choice.
pub const DEFAULT_BUDGET: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub n: usize,
    pub d: usize,
    pub condition: f64,
}

impl FromStr for SynthSpec {
    type Err = anyhow::Error;

    /// `KIND,N,D,COND`, e.g. `ridge,2000,50,100`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            bail!("synthetic spec must be KIND,N,D,COND, got `{s}`");
        }
        let kind = match parts[0] {
            "ridge" | "squared" => SynthKind::Ridge,
            "logistic" => SynthKind::Logistic,
            other => bail!("unknown synthetic kind `{other}` (ridge or logistic)"),
        };
        Ok(SynthSpec {
            kind,
            n: parts[1].parse().with_context(|| format!("bad N in `{s}`"))?,
            d: parts[2].parse().with_context(|| format!("bad D in `{s}`"))?,
            condition: parts[3].parse().with_context(|| format!("bad COND in `{s}`"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    /// `max_i ‖x_i‖² / (4N)`
    #[default]
    Paper,
    Value(f64),
}

impl FromStr for LambdaRule {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("paper") {
            return Ok(LambdaRule::Paper);
        }
        let v: f64 = s.parse().with_context(|| format!("lambda must be `paper` or a number, got `{s}`"))?;
        if !(v >= 0.0) || !v.is_finite() {
            bail!("lambda must be finite and >= 0, got {v}");
        }
        Ok(LambdaRule::Value(v))
    }
}

/// Everything an experiment needs; loadable from JSON and overridable from
/// the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub synth: Option<SynthSpec>,
    pub subsample: Option<usize>,
    /// Defaults to squared for synthetic ridge data and logistic otherwise.
    pub link: Option<LinkKind>,
    pub lambda: LambdaRule,
    pub methods: Vec<String>,
    pub gamma_exps: Vec<i32>,
    /// Explicit stepsize; overrides `gamma_exps` for single runs.
    pub gamma: Option<f64>,
    pub epochs: usize,
    /// Inner steps per epoch; `None` means `N`.
    pub inner: Option<usize>,
    pub budget: f64,
    pub rank: usize,
    pub sigma2: f64,
    pub sigmas: Vec<f64>,
    pub seed: u64,
    pub deterministic: bool,
    pub out: PathBuf,
    pub reference_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: None,
            synth: None,
            subsample: None,
            link: None,
            lambda: LambdaRule::Paper,
            methods: vec!["svrg".into()],
            gamma_exps: default_exponents(),
            gamma: None,
            epochs: 30,
            inner: None,
            budget: DEFAULT_BUDGET,
            rank: DEFAULT_RANK,
            sigma2: DEFAULT_SIGMA_SQ,
            sigmas: DEFAULT_SIGMAS.to_vec(),
            seed: 1,
            deterministic: false,
            out: PathBuf::from("out"),
            reference_tol: cvtrack::vropt::DEFAULT_REFERENCE_TOL,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn link_kind(&self) -> LinkKind {
        self.link.unwrap_or(match self.synth {
            Some(SynthSpec { kind: SynthKind::Ridge, .. }) => LinkKind::Squared,
            _ => LinkKind::Logistic,
        })
    }

    pub fn plans(&self) -> Result<Vec<MethodPlan>> {
        if self.methods.is_empty() {
            bail!("method list is empty");
        }
        self.methods
            .iter()
            .map(|m| {
                let plan = MethodPlan::parse(m)?.with_rank(self.rank).with_sigma_sq(self.sigma2);
                Ok(plan)
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.data, &self.synth) {
            (None, None) => bail!("no dataset: pass --data PATH or --synth KIND,N,D,COND"),
            (Some(_), Some(_)) => bail!("--data and --synth are mutually exclusive"),
            _ => {}
        }
        self.plans()?;
        if self.gamma_exps.is_empty() && self.gamma.is_none() {
            bail!("stepsize exponent list is empty");
        }
        if self.epochs == 0 {
            bail!("epochs must be >= 1");
        }
        if self.inner == Some(0) {
            bail!("inner steps must be >= 1");
        }
        if !(self.budget > 0.0) {
            bail!("datapass budget must be positive");
        }
        if self.sigmas.iter().any(|s| !(*s > 0.0)) {
            bail!("sigma^2 values must be positive");
        }
        Ok(())
    }
}
