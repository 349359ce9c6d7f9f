//! Snapshot-time Hessian approximations and their exact sample means.

mod basis;
pub mod dense;
mod diag;
mod eta;
mod lowrank;

pub use basis::{block_sizes, gaussian_basis, prev_direction_basis, BasisSource, DirectionBlocks, EmbeddingBasis};
pub use diag::{diag_mean, robust_secant_diag, secant_diag_mean, secant_diag_sample, DiagModel, SecantDiagModel};
pub use eta::{data_hessians, measure_eta};
pub use lowrank::{
    am_correct, am_mean_correct, cm_correct, cm_mean_correct, normalize_basis, LowRankScratch, NormalizedBasis,
};
