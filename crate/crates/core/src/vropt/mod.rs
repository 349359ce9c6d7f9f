//! Epoch-structured variance-reduced SGD with tracking control variates.

mod plan;
mod reference;
mod run;
mod snapshot;
mod step;
mod theory;
mod trace;

pub use plan::{MethodFamily, MethodPlan, DEFAULT_RANK, DEFAULT_SIGMA_SQ, METHOD_NAMES};
pub use reference::{reference_solution, ReferenceSolution, DEFAULT_PASS_CAP, DEFAULT_REFERENCE_TOL};
pub use run::{epoch_seed, run, RunConfig, RunError, RunOutput, SnapshotRule, DIVERGENCE_FACTOR};
pub use snapshot::{make_snapshot, Snapshot, SnapshotContext, SnapshotModel};
pub use step::{control_variate, control_variate_mean, inner_step, step_direction, Projection, Stepper};
pub use theory::{epoch_contraction_check, one_epoch_ratio, ContractionReport, Regime, CONTRACTION_BOUND};
pub use trace::{relative_subopt, Trace, TraceRecord, SUBOPT_FLOOR, TRACE_HEADER};
