//! Experiment plumbing: experts, the scaled evaluation protocol, PCA reward
//! surfaces, run configuration and the experiment grid.

pub mod config;
pub mod eval;
pub mod expert;
pub mod grid;
pub mod pca;
pub mod surface;

pub use config::{Algorithm, RunConfig};
pub use eval::{compute_references, evaluate, EvalReferences, EvalResult};
pub use expert::make_expert;
pub use grid::{run_cell, run_experiment_grid, GridCell, LearnedReward, Prepared, SummaryRow};
pub use pca::{pca_fit, Pca};
pub use surface::{expert_plane, reward_surface, total_variation, RewardSurface, SurfaceBounds};
