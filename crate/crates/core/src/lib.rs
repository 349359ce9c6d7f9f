//! Variance-reduced stochastic gradient methods whose control variates track
//! the gradient with per-sample Hessian models, for regularized generalized
//! linear models.

pub mod dataio;
pub mod error;
pub mod glm;
pub mod hessmodels;
pub mod linalg;
pub mod vropt;

pub use dataio::{dataset_stats, Dataset, DatasetStats};
pub use error::{Error, ParseError, Result};
pub use glm::{GlmObjective, LinkKind};
pub use vropt::{MethodPlan, RunConfig, Trace};
