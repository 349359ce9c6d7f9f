use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::GlmObjective;
use crate::hessmodels::BasisSource;

pub const DEFAULT_RANK: usize = 10;
pub const DEFAULT_SIGMA_SQ: f64 = 0.1;

/// Method names accepted on the command line, in report order.
pub const METHOD_NAMES: [&str; 8] = ["svrg", "svrg2", "2d", "2dsec", "cmgauss", "cmprev", "amgauss", "amprev"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodFamily {
    /// Constant control variate `g_i(θ̄)`.
    Svrg,
    /// Exact per-sample Hessians with a dense mean.
    Svrg2,
    /// Hessian diagonal.
    Diag,
    /// Robust secant diagonal.
    SecantDiag,
    CurvatureMatching,
    ActionMatching,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodPlan {
    pub family: MethodFamily,
    pub basis_source: BasisSource,
    pub rank: usize,
    pub sigma_sq: f64,
}

impl MethodPlan {
    pub fn new(family: MethodFamily) -> Self {
        MethodPlan { family, basis_source: BasisSource::Gaussian, rank: DEFAULT_RANK, sigma_sq: DEFAULT_SIGMA_SQ }
    }

    pub fn with_basis(mut self, source: BasisSource) -> Self {
        self.basis_source = source;
        self
    }

    pub fn with_rank(mut self, rank: usize) -> Self {
        self.rank = rank;
        self
    }

    pub fn with_sigma_sq(mut self, sigma_sq: f64) -> Self {
        self.sigma_sq = sigma_sq;
        self
    }

    pub fn parse(name: &str) -> Result<Self> {
        use MethodFamily::*;
        let plan = match name.to_ascii_lowercase().as_str() {
            "svrg" => MethodPlan::new(Svrg),
            "svrg2" => MethodPlan::new(Svrg2),
            "2d" => MethodPlan::new(Diag),
            "2dsec" => MethodPlan::new(SecantDiag),
            "cmgauss" | "cm" => MethodPlan::new(CurvatureMatching),
            "cmprev" => MethodPlan::new(CurvatureMatching).with_basis(BasisSource::PrevDirections),
            "amgauss" | "am" => MethodPlan::new(ActionMatching),
            "amprev" => MethodPlan::new(ActionMatching).with_basis(BasisSource::PrevDirections),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown method `{other}` (expected one of {})",
                    METHOD_NAMES.join(", ")
                )))
            }
        };
        Ok(plan)
    }

    pub fn name(&self) -> &'static str {
        use MethodFamily::*;
        match (self.family, self.basis_source) {
            (Svrg, _) => "svrg",
            (Svrg2, _) => "svrg2",
            (Diag, _) => "2d",
            (SecantDiag, _) => "2dsec",
            (CurvatureMatching, BasisSource::Gaussian) => "cmgauss",
            (CurvatureMatching, BasisSource::PrevDirections) => "cmprev",
            (ActionMatching, BasisSource::Gaussian) => "amgauss",
            (ActionMatching, BasisSource::PrevDirections) => "amprev",
        }
    }

    pub fn is_low_rank(&self) -> bool {
        matches!(self.family, MethodFamily::CurvatureMatching | MethodFamily::ActionMatching)
    }

    pub fn validate(&self, obj: &GlmObjective) -> Result<()> {
        if self.is_low_rank() && (self.rank == 0 || self.rank > obj.d()) {
            return Err(Error::InvalidArgument(format!("rank {} must be in [1, d = {}]", self.rank, obj.d())));
        }
        if self.family == MethodFamily::SecantDiag && !(self.sigma_sq > 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma^2 must be positive, got {}", self.sigma_sq)));
        }
        if self.family == MethodFamily::Svrg2 && obj.d() > obj.dense_cap() {
            return Err(Error::DenseCapExceeded { d: obj.d(), cap: obj.dense_cap() });
        }
        Ok(())
    }
}

impl std::fmt::Display for MethodPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for name in METHOD_NAMES {
            assert_eq!(MethodPlan::parse(name).unwrap().name(), name);
        }
        assert!(MethodPlan::parse("saga").is_err());
    }

    #[test]
    fn defaults() {
        let p = MethodPlan::parse("2dsec").unwrap();
        assert_eq!((p.rank, p.sigma_sq), (10, 0.1));
    }
}
